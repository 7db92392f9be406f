"""Exact and asymptotic fields around two nearly touching conducting spheres."""

__version__ = "0.1.0"

from .fields import AxialField, uniform_field
from .geometry import SphereConfig, make_config, superfocus_region

__all__ = ["__version__", "AxialField", "uniform_field", "SphereConfig", "make_config", "superfocus_region"]
