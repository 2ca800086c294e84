from __future__ import annotations

import math
import zlib
from typing import Optional

import numpy as np

from thermocast.autograd import Tensor
from thermocast.errors import ConfigurationError, UsageError


def scale_width(channels: int, width_factor: float) -> int:
    if not 0.0 < width_factor <= 1.0:
        raise UsageError(f"width_factor must lie in (0, 1], got {width_factor}")
    return max(1, math.ceil(channels * width_factor))


def he_uniform(shape: tuple[int, ...], fan_in: float, seed: int, name: str) -> np.ndarray:
    """U(-b, b) with b = sqrt(6 / fan_in); the stream depends only on (seed, name)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, zlib.crc32(name.encode())])))
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Model:
    """Ordered parameter store plus a forward pass defined by subclasses."""

    kind = "model"

    def __init__(self, spec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self.params: dict[str, Tensor] = {}

    def _weight(self, name: str, shape: tuple[int, ...], fan_in: float) -> Tensor:
        t = Tensor(he_uniform(shape, fan_in, self.seed, name), requires_grad=True)
        self.params[name] = t
        return t

    def _bias(self, name: str, n: int) -> Tensor:
        t = Tensor(np.zeros(n), requires_grad=True)
        self.params[name] = t
        return t

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        if set(state) != set(self.params):
            missing = sorted(set(self.params) - set(state))
            extra = sorted(set(state) - set(self.params))
            raise ConfigurationError(f"parameter names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ConfigurationError(f"parameter {k}: shape {arr.shape} != model {p.data.shape}")
        for k, p in self.params.items():
            p.data = np.array(state[k], dtype=np.float64)

    def architecture(self) -> dict:
        return {"kind": self.kind, "spec": self.spec.to_dict()}

    def forward(self, x: Tensor, trace: Optional[list] = None) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor, trace: Optional[list] = None) -> Tensor:
        return self.forward(x, trace=trace)


def _record(trace: Optional[list], **row) -> None:
    if trace is not None:
        trace.append(row)
