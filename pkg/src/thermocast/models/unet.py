"""Four-stage U-Net mapping (coarse LST, cos SZA, validity) to fine LST."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from thermocast.autograd import Tensor, concat_channels, conv2d, conv2d_transpose, maxpool2, relu
from thermocast.errors import UsageError
from thermocast.models.base import Model, _record, scale_width


@dataclass(frozen=True)
class UNetSpec:
    input_channels: int = 3
    stage_widths: tuple[int, ...] = (64, 128, 256, 512)
    bottleneck: int = 1024
    width_factor: float = 1.0

    def __post_init__(self):
        if len(self.stage_widths) != 4:
            raise UsageError("the U-Net has exactly four encoder stages")
        scale_width(1, self.width_factor)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(scale_width(c, self.width_factor) for c in (*self.stage_widths, self.bottleneck))

    def to_dict(self) -> dict:
        return {"input_channels": self.input_channels, "stage_widths": list(self.stage_widths),
                "bottleneck": self.bottleneck, "width_factor": self.width_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "UNetSpec":
        return cls(input_channels=int(d["input_channels"]), stage_widths=tuple(d["stage_widths"]),
                   bottleneck=int(d["bottleneck"]), width_factor=float(d["width_factor"]))


class UNet(Model):
    kind = "unet"

    def __init__(self, spec: UNetSpec, seed: int = 0):
        super().__init__(spec, seed)
        w = spec.widths
        cin = spec.input_channels
        for s in range(4):
            self._conv_block(f"stage{s + 1}", cin, w[s])
            cin = w[s]
        self._conv_block("stage5", w[3], w[4])
        cin = w[4]
        for s, skip in zip(range(6, 10), (w[3], w[2], w[1], w[0])):
            # each output of a k=2, s=2 transposed conv sees cin * k * k / s**2 = cin inputs
            self._weight(f"stage{s}.up.weight", (cin, skip, 2, 2), cin)
            self._bias(f"stage{s}.up.bias", skip)
            self._conv_block(f"stage{s}", 2 * skip, skip)
            cin = skip
        self._weight("stage10.out.weight", (1, w[0], 1, 1), w[0])
        self._bias("stage10.out.bias", 1)

    def _conv_block(self, prefix: str, cin: int, cout: int) -> None:
        self._weight(f"{prefix}.conv1.weight", (cout, cin, 3, 3), cin * 9)
        self._bias(f"{prefix}.conv1.bias", cout)
        self._weight(f"{prefix}.conv2.weight", (cout, cout, 3, 3), cout * 9)
        self._bias(f"{prefix}.conv2.bias", cout)

    def _run_block(self, prefix: str, x: Tensor, stage: int, trace) -> Tensor:
        p = self.params
        cin = x.shape[1]
        h = relu(conv2d(x, p[f"{prefix}.conv1.weight"], p[f"{prefix}.conv1.bias"], 1, 1))
        h = relu(conv2d(h, p[f"{prefix}.conv2.weight"], p[f"{prefix}.conv2.bias"], 1, 1))
        _record(trace, stage=stage, op="conv_block", cin=cin, cout=h.shape[1],
                hin=x.shape[2], hout=h.shape[2], kernel=3, stride=1, padding=1)
        return h

    def forward(self, x: Tensor, trace: Optional[list] = None) -> Tensor:
        """(N, 3, H, W) -> (N, 1, H, W); H and W must be multiples of 16."""
        if x.ndim != 4 or x.shape[1] != self.spec.input_channels:
            raise UsageError(f"U-Net expects (N, {self.spec.input_channels}, H, W), got {x.shape}")
        if x.shape[2] % 16 or x.shape[3] % 16:
            raise UsageError(f"U-Net spatial extents must be multiples of 16, got {x.shape[2:]}")
        p = self.params
        skips = []
        h = x
        for s in range(1, 5):
            h = self._run_block(f"stage{s}", h, s, trace)
            skips.append(h)
            pooled = maxpool2(h)
            _record(trace, stage=s, op="maxpool", cin=h.shape[1], cout=pooled.shape[1],
                    hin=h.shape[2], hout=pooled.shape[2], kernel=2, stride=2, padding=0)
            h = pooled
        h = self._run_block("stage5", h, 5, trace)
        for s, skip in zip(range(6, 10), reversed(skips)):
            up = conv2d_transpose(h, p[f"stage{s}.up.weight"], p[f"stage{s}.up.bias"], 2, 0)
            _record(trace, stage=s, op="tconv", cin=h.shape[1], cout=up.shape[1],
                    hin=h.shape[2], hout=up.shape[2], kernel=2, stride=2, padding=0)
            cat = concat_channels([skip, up])
            _record(trace, stage=s, op="concat", cin=(skip.shape[1], up.shape[1]), cout=cat.shape[1],
                    hin=up.shape[2], hout=cat.shape[2], kernel=None, stride=None, padding=None)
            h = self._run_block(f"stage{s}", cat, s, trace)
        out = conv2d(h, p["stage10.out.weight"], p["stage10.out.bias"], 1, 0)
        _record(trace, stage=10, op="conv", cin=h.shape[1], cout=out.shape[1],
                hin=h.shape[2], hout=out.shape[2], kernel=1, stride=1, padding=0)
        return out


def build_unet(spec: UNetSpec = UNetSpec(), prng_seed: int = 0) -> UNet:
    return UNet(spec, prng_seed)
