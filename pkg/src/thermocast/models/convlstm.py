"""Encoder-decoder ConvLSTM nowcaster: three past frames in, one future frame out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from thermocast.autograd import (
    Tensor,
    channel_slice,
    conv2d,
    conv2d_transpose,
    leaky_relu,
    select,
    sigmoid,
    tanh,
)
from thermocast.errors import ConfigurationError, UsageError
from thermocast.models.base import Model, _record, scale_width


@dataclass(frozen=True)
class ConvLSTMSpec:
    input_channels: int = 1
    # (conv output width, ConvLSTM hidden width) per encoder stage
    encoder: tuple[tuple[int, int], ...] = ((32, 64), (64, 96), (96, 128))
    conv_kernel: int = 3
    recurrent_kernel: int = 5
    slope: float = 0.2
    n_frames: int = 3
    width_factor: float = 1.0

    def __post_init__(self):
        if len(self.encoder) != 3:
            raise UsageError("the nowcaster has exactly three encoder stages")
        if self.recurrent_kernel % 2 == 0 or self.conv_kernel % 2 == 0:
            raise UsageError("kernels must be odd to preserve shape")
        scale_width(1, self.width_factor)

    @property
    def widths(self) -> tuple[tuple[int, int], ...]:
        f = self.width_factor
        return tuple((scale_width(c, f), scale_width(h, f)) for c, h in self.encoder)

    def to_dict(self) -> dict:
        return {"input_channels": self.input_channels, "encoder": [list(e) for e in self.encoder],
                "conv_kernel": self.conv_kernel, "recurrent_kernel": self.recurrent_kernel,
                "slope": self.slope, "n_frames": self.n_frames, "width_factor": self.width_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "ConvLSTMSpec":
        return cls(input_channels=int(d["input_channels"]),
                   encoder=tuple(tuple(int(v) for v in e) for e in d["encoder"]),
                   conv_kernel=int(d["conv_kernel"]), recurrent_kernel=int(d["recurrent_kernel"]),
                   slope=float(d["slope"]), n_frames=int(d["n_frames"]),
                   width_factor=float(d["width_factor"]))


def convlstm_cell(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor,
                  padding: Optional[int] = None) -> tuple[Tensor, Tensor]:
    """One ConvLSTM step without peepholes.

    Gate pre-activations are conv(x, wx) + conv(h, wh) + b, split in the
    order input, forget, output, candidate.
    """
    hidden = wh.shape[1]
    if h.shape != c.shape:
        raise ConfigurationError(f"hidden {h.shape} and cell {c.shape} state shapes differ")
    if h.ndim != 4 or h.shape[1] != hidden or h.shape[0] != x.shape[0] or h.shape[2:] != x.shape[2:]:
        raise ConfigurationError(f"state shape {h.shape} does not fit input {x.shape} / hidden {hidden}")
    if wx.shape[0] != 4 * hidden or wh.shape[0] != 4 * hidden:
        raise ConfigurationError("gate weights must have 4 * hidden output channels")
    if padding is None:
        padding = wh.shape[2] // 2
    z = conv2d(x, wx, b, 1, padding) + conv2d(h, wh, None, 1, padding)
    i = sigmoid(channel_slice(z, 0, hidden))
    f = sigmoid(channel_slice(z, hidden, 2 * hidden))
    o = sigmoid(channel_slice(z, 2 * hidden, 3 * hidden))
    g = tanh(channel_slice(z, 3 * hidden, 4 * hidden))
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def zero_state(n: int, hidden: int, height: int, width: int) -> tuple[Tensor, Tensor]:
    z = np.zeros((n, hidden, height, width))
    return Tensor(z), Tensor(z.copy())


class ConvLSTMNet(Model):
    kind = "convlstm"

    def __init__(self, spec: ConvLSTMSpec, seed: int = 0):
        super().__init__(spec, seed)
        (c1, h1), (c2, h2), (c3, h3) = spec.widths
        k = spec.conv_kernel
        enc_in = (spec.input_channels, h1, h2)
        for s, (cin, (cc, hh)) in enumerate(zip(enc_in, spec.widths), start=1):
            self._weight(f"enc{s}.conv.weight", (cc, cin, k, k), cin * k * k)
            self._bias(f"enc{s}.conv.bias", cc)
            self._cell(f"enc{s}.lstm", cc, hh)
        self._cell("dec3.lstm", h3, h3)
        self._weight("dec3.up.weight", (h3, h3, 4, 4), h3 * 16 / 4)
        self._bias("dec3.up.bias", h3)
        self._cell("dec2.lstm", h3, h2)
        self._weight("dec2.up.weight", (h2, h2, 4, 4), h2 * 16 / 4)
        self._bias("dec2.up.bias", h2)
        self._cell("dec1.lstm", h2, h1)
        self._weight("dec1.conv.weight", (c1, h1, k, k), h1 * k * k)
        self._bias("dec1.conv.bias", c1)
        self._weight("dec1.out.weight", (1, c1, 1, 1), c1)
        self._bias("dec1.out.bias", 1)

    def _cell(self, prefix: str, cin: int, hidden: int) -> None:
        r = self.spec.recurrent_kernel
        fan_in = (cin + hidden) * r * r
        self._weight(f"{prefix}.wx", (4 * hidden, cin, r, r), fan_in)
        self._weight(f"{prefix}.wh", (4 * hidden, hidden, r, r), fan_in)
        self._bias(f"{prefix}.bias", 4 * hidden)

    def _step(self, prefix: str, x: Tensor, state: tuple[Tensor, Tensor]) -> tuple[Tensor, Tensor]:
        p = self.params
        return convlstm_cell(x, state[0], state[1], p[f"{prefix}.wx"], p[f"{prefix}.wh"], p[f"{prefix}.bias"])

    def forward(self, frames: Tensor, trace: Optional[list] = None,
                capture: Optional[dict] = None) -> Tensor:
        """(N, 3, C, H, W) -> (N, 1, H, W); H and W must be multiples of 4.

        ``capture`` (optional dict) receives the final encoder states and the
        initial decoder states, keyed by stage number.
        """
        spec = self.spec
        if frames.ndim != 5:
            raise UsageError(f"nowcaster expects (N, T, C, H, W), got {frames.shape}")
        n, t_len, ch, height, width = frames.shape
        if t_len != spec.n_frames:
            raise UsageError(f"nowcaster expects exactly {spec.n_frames} time steps, got {t_len}")
        if ch != spec.input_channels:
            raise UsageError(f"nowcaster expects {spec.input_channels} channel(s), got {ch}")
        if height % 4 or width % 4:
            raise UsageError(f"spatial extents must be multiples of 4, got {height}x{width}")
        p = self.params
        k = spec.conv_kernel
        slope = spec.slope
        hidden = [hh for _, hh in spec.widths]
        states: list[Optional[tuple[Tensor, Tensor]]] = [None, None, None]

        for t in range(t_len):
            x = select(frames, 1, t)
            rec = trace if t == 0 else None
            for s in range(3):
                stride = 1 if s == 0 else 2
                y = leaky_relu(conv2d(x, p[f"enc{s + 1}.conv.weight"], p[f"enc{s + 1}.conv.bias"],
                                      stride, k // 2), slope)
                _record(rec, part="encoder", stage=s + 1, op="conv", cin=x.shape[1], cout=y.shape[1],
                        hin=x.shape[2], hout=y.shape[2], kernel=k, stride=stride, padding=k // 2)
                if states[s] is None:
                    states[s] = zero_state(n, hidden[s], y.shape[2], y.shape[3])
                states[s] = self._step(f"enc{s + 1}.lstm", y, states[s])
                h = states[s][0]
                _record(rec, part="encoder", stage=s + 1, op="convlstm", cin=y.shape[1], cout=h.shape[1],
                        hin=y.shape[2], hout=h.shape[2], kernel=spec.recurrent_kernel, stride=1,
                        padding=spec.recurrent_kernel // 2)
                x = h

        if capture is not None:
            capture["encoder_final"] = {s + 1: states[s] for s in range(3)}
            capture["decoder_init"] = {}
        y = states[2][0]
        for s in (3, 2, 1):
            init = states[s - 1]
            if capture is not None:
                capture["decoder_init"][s] = init
            h, _ = self._step(f"dec{s}.lstm", y, init)
            _record(trace, part="decoder", stage=s, op="convlstm", cin=y.shape[1], cout=h.shape[1],
                    hin=y.shape[2], hout=h.shape[2], kernel=spec.recurrent_kernel, stride=1,
                    padding=spec.recurrent_kernel // 2)
            if s > 1:
                y = leaky_relu(conv2d_transpose(h, p[f"dec{s}.up.weight"], p[f"dec{s}.up.bias"], 2, 1), slope)
                _record(trace, part="decoder", stage=s, op="tconv", cin=h.shape[1], cout=y.shape[1],
                        hin=h.shape[2], hout=y.shape[2], kernel=4, stride=2, padding=1)
            else:
                y = leaky_relu(conv2d(h, p["dec1.conv.weight"], p["dec1.conv.bias"], 1, k // 2), slope)
                _record(trace, part="decoder", stage=1, op="conv", cin=h.shape[1], cout=y.shape[1],
                        hin=h.shape[2], hout=y.shape[2], kernel=k, stride=1, padding=k // 2)
                out = conv2d(y, p["dec1.out.weight"], p["dec1.out.bias"], 1, 0)
                _record(trace, part="decoder", stage=1, op="conv_out", cin=y.shape[1], cout=out.shape[1],
                        hin=y.shape[2], hout=out.shape[2], kernel=1, stride=1, padding=0)
        return out


def build_convlstm(spec: ConvLSTMSpec = ConvLSTMSpec(), prng_seed: int = 0) -> ConvLSTMNet:
    return ConvLSTMNet(spec, prng_seed)
