"""Figure rendering for walkinq result files.

Consumes only the public file contracts (equilibrium JSON, sweep CSV,
manifest sidecars); no in-process coupling with the solver package.
"""

from .figures import KINDS, FigureSpec, plot_equilibrium, plot_sweep, render
from .io import EquilibriumDoc, InputError, SweepDoc, load_equilibrium, load_sweep

__version__ = "0.1.0"

__all__ = [
    "EquilibriumDoc",
    "FigureSpec",
    "InputError",
    "KINDS",
    "SweepDoc",
    "load_equilibrium",
    "load_sweep",
    "plot_equilibrium",
    "plot_sweep",
    "render",
]
