"""fitscape: a seeded simulator and analysis toolkit for a birth/death
population process with mutation and preferential-attachment fitness.

The hot kernels run in a compiled extension when available and fall back
to a pure-Python twin with identical trajectories; ``fitscape.backend``
reports which one is active.
"""

__version__ = "0.1.0"

from .backend import BACKEND, available_backends
from .core import (AttachBirth, Death, Event, Hold, MutantBirth,
                   ObserverError, Params, PopulationState, Site,
                   least_fit, new_population, run, sample_attachment, step,
                   write_sites_csv)

__all__ = [
    "__version__", "BACKEND", "available_backends",
    "Params", "PopulationState", "Site", "Event",
    "MutantBirth", "AttachBirth", "Death", "Hold", "ObserverError",
    "new_population", "sample_attachment", "least_fit", "step", "run",
    "write_sites_csv",
]
