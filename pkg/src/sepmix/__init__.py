"""Exclusion process on a segment in quenched random environment.

The package splits along the objects of study: laws of the disorder
(`law`), quenched environments and their potential landscape
(`environment`), particle configurations (`state`), the reversible
equilibrium (`equilibrium`), event-driven dynamics with couplings,
censoring and the boundary-driven window chain (`dynamics`), exact
finite-state computations (`exact`), Monte Carlo estimators
(`estimators`), and the command line (`cli`).
"""

from .environment import (Environment, PotentialProfile, Trap,
                          constrained_max_gain, deepest_trap, potential,
                          sample_env)
from .equilibrium import EquilibriumTable
from .errors import (BadK, CapExceeded, EmptyRange, NotTransient, NotTrapped,
                     SchemaError, SepmixError, ShapeMismatch, Timeout,
                     TooLarge, WindowTooLarge, WindowTooWide)
from .law import LawSpec, analytics, f_minimizer, kappa, lambda_root, log_mgf, q_n
from .state import Configuration, extremal

__all__ = [
    "BadK", "CapExceeded", "Configuration", "EmptyRange", "Environment",
    "EquilibriumTable", "LawSpec", "NotTransient", "NotTrapped",
    "PotentialProfile", "SchemaError", "SepmixError", "ShapeMismatch",
    "Timeout", "TooLarge", "Trap", "WindowTooLarge", "WindowTooWide",
    "analytics", "constrained_max_gain", "deepest_trap", "extremal",
    "f_minimizer", "kappa", "lambda_root", "log_mgf", "potential", "q_n",
    "sample_env",
]
