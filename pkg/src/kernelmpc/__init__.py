"""Viability-kernel analysis and terminal-condition-free sampled-data MPC
for an input-constrained 4-D nonholonomic vehicle with a planar wall constraint."""

__version__ = "0.1.0"

from .dynamics import CostKind, InputBox

__all__ = ["CostKind", "InputBox", "__version__"]
