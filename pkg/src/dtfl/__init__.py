"""Digital-twin assisted federated learning over NOMA uplinks.

Deterministic simulator and Stackelberg resource-allocation solver with
brute-force oracles for every closed form.
"""

from dtfl.errors import ConvergenceError, InfeasibleError

__version__ = "0.1.0"

__all__ = ["ConvergenceError", "InfeasibleError", "__version__"]
