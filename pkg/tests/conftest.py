import numpy as np
import pytest

from thermocast.autograd import Tensor, mul, sum as tsum


def rel_err(a, b) -> float:
    a = np.ravel(a)
    b = np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def projected(fn, probe_seed=0):
    """Scalarize a tensor-valued fn by a fixed random projection."""
    cache = {}

    def loss(*tensors):
        out = fn(*tensors)
        if out.ndim == 0:
            return out
        if out.shape not in cache:
            cache[out.shape] = np.random.default_rng(probe_seed).standard_normal(out.shape)
        return tsum(mul(out, Tensor(cache[out.shape])))

    return loss


def fd_check(fn, arrays, h=1e-5, coords=None, rng=None):
    """Analytic vs central-difference gradients of scalar ``fn`` at ``arrays``.

    ``coords`` (optional) limits the check to that many random coordinates per
    input. Returns the worst norm-wise relative error over inputs.
    """
    rng = rng or np.random.default_rng(1)
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    fn(*leaves).backward()
    worst = 0.0
    for k, a in enumerate(arrays):
        idx = np.arange(a.size) if coords is None or coords >= a.size else rng.choice(a.size, coords, replace=False)
        num = np.empty(len(idx))
        for j, flat in enumerate(idx):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[k].flat[flat] += h
            minus[k].flat[flat] -= h
            fp = fn(*[Tensor(x) for x in plus]).item()
            fm = fn(*[Tensor(x) for x in minus]).item()
            num[j] = (fp - fm) / (2 * h)
        worst = max(worst, rel_err(leaves[k].grad.ravel()[idx], num))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_check_adaptive(fn, arrays, coords, h=1e-5, rng=None, halvings=12, tol=1e-4, floor=1e-9):
    """Sampled FD check for piecewise-smooth graphs (ReLU-type kinks).

    For each coordinate the central step starts at ``h`` and is halved until
    two consecutive estimates agree (relative ``tol`` plus ``floor``); a
    stencil that straddles a kink fails this test, a smooth one passes at
    once. Coordinates that never settle are counted, not used. Returns
    (worst norm-wise relative error over inputs, unresolved count).
    """
    rng = rng or np.random.default_rng(1)
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    fn(*leaves).backward()

    def central(k, flat, step):
        plus = [x.copy() for x in arrays]
        minus = [x.copy() for x in arrays]
        plus[k].flat[flat] += step
        minus[k].flat[flat] -= step
        return (fn(*[Tensor(x) for x in plus]).item() - fn(*[Tensor(x) for x in minus]).item()) / (2 * step)

    worst, unresolved = 0.0, 0
    for k, a in enumerate(arrays):
        idx = np.arange(a.size) if coords >= a.size else rng.choice(a.size, coords, replace=False)
        ana, num = [], []
        for flat in idx:
            step = h
            prev = central(k, flat, step)
            for _ in range(halvings):
                step /= 2
                cur = central(k, flat, step)
                if abs(cur - prev) <= tol * max(abs(cur), abs(prev)) + floor:
                    ana.append(leaves[k].grad.flat[flat])
                    num.append(prev)
                    break
                prev = cur
            else:
                unresolved += 1
        if num:
            worst = max(worst, rel_err(ana, num))
    return worst, unresolved
