"""Systolic mapping of uniform recurrences onto a 2D AI Engine array."""

from .device import DeviceModel, default_device, load_device
from .recurrence import UniformRecurrence, load_recurrence, parse_recurrence

__version__ = "0.1.0"

__all__ = ["DeviceModel", "UniformRecurrence", "default_device", "load_device",
           "load_recurrence", "parse_recurrence", "__version__"]
