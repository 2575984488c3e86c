"""Multidimensional orthogonal matching pursuit (MOMP) toolkit.

Subpackages and modules:

* :mod:`momp.tensor` - dense contractions and the Kronecker oracle
* :mod:`momp.solver` - MOMP, classical OMP and the exhaustive projection oracle
* :mod:`momp.channel` - mmWave channel synthesis, training, whitening, dictionaries
* :mod:`momp.scenario` - image-method ground truth for axis-aligned rooms
* :mod:`momp.locate` - path classification, clock-offset ranging, positioning
* :mod:`momp.experiment` / :mod:`momp.cli` - batch experiments writing CSV tables
"""

from momp.solver import (
    DictionarySet,
    SolverConfig,
    SparseProblem,
    SparseSolution,
    exhaustive_projection,
    momp_solve,
    omp_solve,
)

__all__ = [
    "DictionarySet",
    "SolverConfig",
    "SparseProblem",
    "SparseSolution",
    "exhaustive_projection",
    "momp_solve",
    "omp_solve",
]

__version__ = "0.1.0"
