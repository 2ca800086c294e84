"""Downscaling and nowcasting of land surface temperature fields."""

__version__ = "0.1.0"
