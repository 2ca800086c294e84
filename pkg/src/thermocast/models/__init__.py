"""The downscaling U-Net and the ConvLSTM nowcaster."""

from thermocast.errors import ConfigurationError
from thermocast.models.base import Model
from thermocast.models.convlstm import (
    ConvLSTMNet,
    ConvLSTMSpec,
    build_convlstm,
    convlstm_cell,
    zero_state,
)
from thermocast.models.unet import UNet, UNetSpec, build_unet


def build_model(architecture: dict, seed: int = 0) -> Model:
    """Rebuild a model from :meth:`Model.architecture` output."""
    kind = architecture.get("kind")
    if kind == UNet.kind:
        return build_unet(UNetSpec.from_dict(architecture["spec"]), seed)
    if kind == ConvLSTMNet.kind:
        return build_convlstm(ConvLSTMSpec.from_dict(architecture["spec"]), seed)
    raise ConfigurationError(f"unknown model kind {kind!r}")


__all__ = [
    "ConvLSTMNet", "ConvLSTMSpec", "Model", "UNet", "UNetSpec", "build_convlstm", "build_model",
    "build_unet", "convlstm_cell", "zero_state",
]
