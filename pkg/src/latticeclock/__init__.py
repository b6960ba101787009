"""latticeclock: collisional-shift physics and statistics for a 2D optical
lattice clock operated deep in the interacting regime.

Submodules
----------
units         constants, conversions, trap geometry and the interaction scale
modes         per-mode Rabi couplings, overlap integrals, thermal ensembles
spinmodel     exact dynamics of the driven interacting N-spin system
lineshape     thermally averaged lineshapes, lock points, clock shifts
perturbative  second-order shift theory and scaling-law extraction
tunneling     lattice band structure and (tilt-suppressed) tunneling rates
analysis      string analysis, Allan deviation, aggregation protocols
cli           configuration-driven scenario runner
"""

__version__ = "0.1.0"

from . import analysis, cli, lineshape, modes, perturbative, spinmodel, \
    tunneling, units
from .errors import LatticeClockError

__all__ = ["analysis", "cli", "lineshape", "modes", "perturbative",
           "spinmodel", "tunneling", "units", "LatticeClockError",
           "__version__"]
