"""Desk-scale LTE-A downlink scheduling simulator.

Schedulers: round robin, proportional fair, two-level frame scheduling, and
a learned per-class resource-block budget mechanism (mdp-ql).
"""

from .engine import RunConfig, Simulation, run
from .metrics import RunMetrics

__version__ = "0.1.0"

__all__ = ["RunConfig", "RunMetrics", "Simulation", "run", "__version__"]
