import numpy as np
import pytest

from conftest import fd_check, fd_check_adaptive, projected
from oracles import convlstm_gates
from thermocast.autograd import Tensor, no_grad
from thermocast.errors import ConfigurationError, UsageError
from thermocast.models import (
    ConvLSTMSpec,
    UNetSpec,
    build_convlstm,
    build_model,
    build_unet,
    convlstm_cell,
    zero_state,
)
from thermocast.models.base import scale_width

# (stage, op, cin, cout, hin, hout, kernel, stride, padding) at full width
UNET_LAYOUT = [
    (1, "conv_block", 3, 64, 128, 128, 3, 1, 1),
    (1, "maxpool", 64, 64, 128, 64, 2, 2, 0),
    (2, "conv_block", 64, 128, 64, 64, 3, 1, 1),
    (2, "maxpool", 128, 128, 64, 32, 2, 2, 0),
    (3, "conv_block", 128, 256, 32, 32, 3, 1, 1),
    (3, "maxpool", 256, 256, 32, 16, 2, 2, 0),
    (4, "conv_block", 256, 512, 16, 16, 3, 1, 1),
    (4, "maxpool", 512, 512, 16, 8, 2, 2, 0),
    (5, "conv_block", 512, 1024, 8, 8, 3, 1, 1),
    (6, "tconv", 1024, 512, 8, 16, 2, 2, 0),
    (6, "concat", (512, 512), 1024, 16, 16, None, None, None),
    (6, "conv_block", 1024, 512, 16, 16, 3, 1, 1),
    (7, "tconv", 512, 256, 16, 32, 2, 2, 0),
    (7, "concat", (256, 256), 512, 32, 32, None, None, None),
    (7, "conv_block", 512, 256, 32, 32, 3, 1, 1),
    (8, "tconv", 256, 128, 32, 64, 2, 2, 0),
    (8, "concat", (128, 128), 256, 64, 64, None, None, None),
    (8, "conv_block", 256, 128, 64, 64, 3, 1, 1),
    (9, "tconv", 128, 64, 64, 128, 2, 2, 0),
    (9, "concat", (64, 64), 128, 128, 128, None, None, None),
    (9, "conv_block", 128, 64, 128, 128, 3, 1, 1),
    (10, "conv", 64, 1, 128, 128, 1, 1, 0),
]

# (part, stage, op, cin, cout, hin, hout, kernel, stride, padding) at full width
CONVLSTM_LAYOUT = [
    ("encoder", 1, "conv", 1, 32, 128, 128, 3, 1, 1),
    ("encoder", 1, "convlstm", 32, 64, 128, 128, 5, 1, 2),
    ("encoder", 2, "conv", 64, 64, 128, 64, 3, 2, 1),
    ("encoder", 2, "convlstm", 64, 96, 64, 64, 5, 1, 2),
    ("encoder", 3, "conv", 96, 96, 64, 32, 3, 2, 1),
    ("encoder", 3, "convlstm", 96, 128, 32, 32, 5, 1, 2),
    ("decoder", 3, "convlstm", 128, 128, 32, 32, 5, 1, 2),
    ("decoder", 3, "tconv", 128, 128, 32, 64, 4, 2, 1),
    ("decoder", 2, "convlstm", 128, 96, 64, 64, 5, 1, 2),
    ("decoder", 2, "tconv", 96, 96, 64, 128, 4, 2, 1),
    ("decoder", 1, "convlstm", 96, 64, 128, 128, 5, 1, 2),
    ("decoder", 1, "conv", 64, 32, 128, 128, 3, 1, 1),
    ("decoder", 1, "conv_out", 32, 1, 128, 128, 1, 1, 0),
]

UNET_KEYS = ("stage", "op", "cin", "cout", "hin", "hout", "kernel", "stride", "padding")
CONVLSTM_KEYS = ("part",) + UNET_KEYS


def unet_trace(width=1.0, size=128):
    trace = []
    with no_grad():
        out = build_unet(UNetSpec(width_factor=width))(Tensor(np.zeros((1, 3, size, size))), trace=trace)
    return [tuple(r[k] for k in UNET_KEYS) for r in trace], out


def convlstm_trace(width=1.0, size=128):
    trace = []
    with no_grad():
        out = build_convlstm(ConvLSTMSpec(width_factor=width))(Tensor(np.zeros((1, 3, 1, size, size))), trace=trace)
    return [tuple(r[k] for k in CONVLSTM_KEYS) for r in trace], out


@pytest.fixture(scope="module")
def full_unet_trace():
    return unet_trace()


@pytest.fixture(scope="module")
def full_convlstm_trace():
    return convlstm_trace()


# -- layouts ------------------------------------------------------------------------

@pytest.mark.parametrize("row", UNET_LAYOUT, ids=lambda r: f"{r[0]}-{r[1]}")
def test_unet_layout_row(full_unet_trace, row):
    assert row in full_unet_trace[0]


def test_unet_layout_complete(full_unet_trace):
    trace, out = full_unet_trace
    assert trace == UNET_LAYOUT
    assert out.shape == (1, 1, 128, 128)


@pytest.mark.parametrize("row", CONVLSTM_LAYOUT, ids=lambda r: f"{r[0]}{r[1]}-{r[2]}")
def test_convlstm_layout_row(full_convlstm_trace, row):
    assert row in full_convlstm_trace[0]


def test_convlstm_layout_complete(full_convlstm_trace):
    trace, out = full_convlstm_trace
    assert trace == CONVLSTM_LAYOUT
    assert out.shape == (1, 1, 128, 128)


def test_unet_parameter_shapes_full_width():
    p = build_unet(UNetSpec()).params
    assert p["stage1.conv1.weight"].shape == (64, 3, 3, 3)
    assert p["stage5.conv2.weight"].shape == (1024, 1024, 3, 3)
    assert p["stage6.up.weight"].shape == (1024, 512, 2, 2)
    assert p["stage6.conv1.weight"].shape == (512, 1024, 3, 3)
    assert p["stage10.out.weight"].shape == (1, 64, 1, 1)


def test_convlstm_parameter_shapes_full_width():
    p = build_convlstm(ConvLSTMSpec()).params
    assert p["enc1.lstm.wx"].shape == (256, 32, 5, 5)
    assert p["enc1.lstm.wh"].shape == (256, 64, 5, 5)
    assert p["dec3.up.weight"].shape == (128, 128, 4, 4)
    assert p["dec1.lstm.wx"].shape == (256, 96, 5, 5)
    assert p["dec1.out.weight"].shape == (1, 32, 1, 1)


@pytest.mark.parametrize("width,expect", [(1.0, 64), (0.5, 32), (0.25, 16), (0.1, 7), (0.01, 1)])
def test_scale_width(width, expect):
    assert scale_width(64, width) == expect


def test_scale_width_range():
    with pytest.raises(UsageError):
        scale_width(64, 0.0)
    with pytest.raises(UsageError):
        scale_width(64, 1.5)


def test_quarter_width_traces_scale_channels():
    trace, _ = unet_trace(0.25, 16)
    assert trace[0][2:4] == (3, 16) and trace[8][3] == 256 and trace[-1][2:4] == (16, 1)
    trace, _ = convlstm_trace(0.25, 16)
    assert trace[1][3:5] == (8, 16) and trace[-1][3:5] == (8, 1)


# -- forward behaviour ------------------------------------------------------------------

def test_unet_forward_shape_and_purity(rng):
    m = build_unet(UNetSpec(width_factor=0.25))
    x = Tensor(rng.standard_normal((2, 3, 32, 32)))
    a = m(x).data
    assert a.shape == (2, 1, 32, 32)
    assert a.tobytes() == m(x).data.tobytes()


def test_unet_zero_final_layer(rng):
    m = build_unet(UNetSpec(width_factor=0.25))
    m.params["stage10.out.weight"].data[:] = 0.0
    assert np.all(m(Tensor(rng.standard_normal((1, 3, 16, 16)))).data == 0.0)


def test_unet_wrong_input():
    m = build_unet(UNetSpec(width_factor=0.25))
    with pytest.raises(UsageError):
        m(Tensor(np.zeros((1, 2, 16, 16))))
    with pytest.raises(UsageError):
        m(Tensor(np.zeros((1, 3, 20, 20))))


def test_convlstm_forward_shape(rng):
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25))
    assert m(Tensor(rng.standard_normal((4, 3, 1, 16, 16)))).shape == (4, 1, 16, 16)
    with pytest.raises(UsageError):
        m(Tensor(np.zeros((1, 2, 1, 16, 16))))
    with pytest.raises(UsageError):
        m(Tensor(np.zeros((1, 3, 16, 16))))


def test_convlstm_zero_weights_give_bias_map(rng):
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25))
    for name, p in m.params.items():
        p.data = np.zeros_like(p.data) if not name.endswith("bias") else rng.standard_normal(p.data.shape)
    out = m(Tensor(rng.standard_normal((2, 3, 1, 8, 8)))).data
    assert np.all(out == m.params["dec1.out.bias"].data[0])


def test_decoder_starts_from_encoder_final_states(rng):
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25))
    cap = {}
    m.forward(Tensor(rng.standard_normal((1, 3, 1, 16, 16))), capture=cap)
    for s in (1, 2, 3):
        assert cap["decoder_init"][s] is cap["encoder_final"][s]
    assert cap["encoder_final"][3][0].shape == (1, 32, 4, 4)


def test_convlstm_uses_all_three_frames(rng):
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25))
    x = rng.standard_normal((1, 3, 1, 8, 8))
    base = m(Tensor(x)).data
    for t in range(3):
        y = x.copy()
        y[0, t] += 1.0
        assert not np.array_equal(m(Tensor(y)).data, base)


# -- ConvLSTM cell ------------------------------------------------------------------------

def test_cell_zero_everything():
    x = Tensor(np.zeros((1, 2, 4, 4)))
    h, c = zero_state(1, 3, 4, 4)
    h2, c2 = convlstm_cell(x, h, c, Tensor(np.zeros((12, 2, 5, 5))), Tensor(np.zeros((12, 3, 5, 5))),
                           Tensor(np.zeros(12)))
    assert np.all(h2.data == 0) and np.all(c2.data == 0)


def cell_oracle_error(n_cases=200, seed=11):
    """Worst |difference| between the cell and the gate-by-gate transcription."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        cin, hid = rng.integers(1, 4, 2)
        size = int(rng.integers(2, 6))
        k = int(rng.choice([1, 3, 5]))
        x = rng.standard_normal((1, cin, size, size))
        h = rng.standard_normal((1, hid, size, size))
        c = rng.standard_normal((1, hid, size, size))
        wx = rng.standard_normal((4 * hid, cin, k, k)) * 0.5
        wh = rng.standard_normal((4 * hid, hid, k, k)) * 0.5
        b = rng.standard_normal(4 * hid)
        h2, c2 = convlstm_cell(Tensor(x), Tensor(h), Tensor(c), Tensor(wx), Tensor(wh), Tensor(b))
        eh, ec = convlstm_gates(x, h, c, wx, wh, b)
        worst = max(worst, np.max(np.abs(h2.data - eh)), np.max(np.abs(c2.data - ec)))
    return float(worst)


def test_cell_matches_gate_transcription():
    assert cell_oracle_error() <= 1e-12


def test_cell_shape_errors():
    x = Tensor(np.zeros((1, 2, 4, 4)))
    h, c = zero_state(1, 3, 4, 4)
    with pytest.raises(ConfigurationError):
        convlstm_cell(x, h, c, Tensor(np.zeros((8, 2, 3, 3))), Tensor(np.zeros((8, 3, 3, 3))), Tensor(np.zeros(8)))
    h5, c5 = zero_state(1, 3, 5, 5)
    with pytest.raises(ConfigurationError):
        convlstm_cell(x, h5, c5, Tensor(np.zeros((12, 2, 3, 3))), Tensor(np.zeros((12, 3, 3, 3))),
                      Tensor(np.zeros(12)))


def test_cell_gradient(rng):
    x = rng.standard_normal((1, 2, 4, 4))
    h = rng.standard_normal((1, 2, 4, 4))
    c = rng.standard_normal((1, 2, 4, 4))
    wx = rng.standard_normal((8, 2, 3, 3)) * 0.3
    wh = rng.standard_normal((8, 2, 3, 3)) * 0.3
    b = rng.standard_normal(8)

    def f(*args):
        hn, cn = convlstm_cell(*args)
        return hn + cn

    assert fd_check(projected(f), [x, h, c, wx, wh, b]) < 1e-4


# -- model-level gradients ------------------------------------------------------------------

def model_gradient_error(model, x, coords=4, seed=0):
    """Adaptive-step FD check of a projected model output w.r.t. the input and every parameter.

    Returns (worst relative error, unresolved coordinates, checked coordinates).
    """
    names = list(model.params)
    originals = {n: model.params[n].data.copy() for n in names}

    def f(inp, *weights):
        for n, w in zip(names, weights):
            model.params[n] = w
        return model(inp)

    try:
        arrays = [x] + [originals[n] for n in names]
        err, skipped = fd_check_adaptive(projected(f, probe_seed=seed), arrays, coords,
                                         rng=np.random.default_rng(seed))
        return err, skipped, sum(min(coords, a.size) for a in arrays)
    finally:
        for n in names:
            model.params[n] = Tensor(originals[n], requires_grad=True)


def unet_model_gradient_error():
    m = build_unet(UNetSpec(width_factor=0.25), 3)
    x = np.random.default_rng(5).standard_normal((2, 3, 16, 16))
    return model_gradient_error(m, x)


def convlstm_model_gradient_error():
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25), 3)
    x = np.random.default_rng(6).standard_normal((2, 3, 1, 16, 16))
    return model_gradient_error(m, x)


@pytest.mark.parametrize("check", [unet_model_gradient_error, convlstm_model_gradient_error],
                         ids=["unet", "convlstm"])
def test_model_gradient(check):
    err, skipped, checked = check()
    assert err < 1e-3
    assert skipped <= 0.1 * checked


# -- initialisation -------------------------------------------------------------------------

def test_same_seed_same_weights():
    a = build_unet(UNetSpec(width_factor=0.25), 7).state_dict()
    b = build_unet(UNetSpec(width_factor=0.25), 7).state_dict()
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c = build_unet(UNetSpec(width_factor=0.25), 8).state_dict()
    assert a["stage1.conv1.weight"].tobytes() != c["stage1.conv1.weight"].tobytes()


def test_he_uniform_bounds():
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25), 0)
    w = m.params["enc1.conv.weight"].data
    assert np.abs(w).max() <= np.sqrt(6.0 / 9)
    assert np.all(m.params["enc1.conv.bias"].data == 0)


def test_build_model_roundtrip():
    m = build_convlstm(ConvLSTMSpec(width_factor=0.25), 4)
    again = build_model(m.architecture(), 4)
    assert again.architecture() == m.architecture()
    assert all(np.array_equal(again.params[k].data, m.params[k].data) for k in m.params)
    with pytest.raises(ConfigurationError):
        build_model({"kind": "resnet"})


def test_load_state_dict_checks():
    m = build_unet(UNetSpec(width_factor=0.25))
    state = build_unet(UNetSpec(width_factor=0.5)).state_dict()
    with pytest.raises(ConfigurationError):
        m.load_state_dict(state)
    with pytest.raises(ConfigurationError):
        m.load_state_dict({})


def test_model_gradient_check_detects_wrong_backward(monkeypatch):
    import thermocast.models.convlstm as convlstm_module

    def leaky_wrong_grad(x, slope=0.2):
        pos = x.data >= 0
        out = np.where(pos, x.data, slope * x.data)
        return Tensor._from_op(out, (x,), lambda g: (np.where(pos, g, 0.25 * g),), "leaky_relu")

    monkeypatch.setattr(convlstm_module, "leaky_relu", leaky_wrong_grad)
    err, _, _ = convlstm_model_gradient_error()
    assert err > 1e-2
