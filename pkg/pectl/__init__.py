"""
pectl - Parabolic-Elliptic Control Toolkit
Backstepping boundary control and observers for a coupled parabolic-elliptic system.
"""

__version__ = "0.3.0"
__description__ = "Backstepping boundary control and observers for a coupled parabolic-elliptic system"

from .core.control import Controller, ControlMode, simulate_closed_loop, simulate_error_system
from .core.grid import Field, Grid
from .core.kernel import KernelConfig, build_inverse_kernel, build_kernel
from .core.pde import SystemParams, simulate, simulate_target
from .core.analysis import gain_report

__all__ = [
    "Controller",
    "ControlMode",
    "Field",
    "Grid",
    "KernelConfig",
    "SystemParams",
    "build_inverse_kernel",
    "build_kernel",
    "gain_report",
    "simulate",
    "simulate_closed_loop",
    "simulate_error_system",
    "simulate_target",
]
