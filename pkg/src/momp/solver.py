"""Multidimensional orthogonal matching pursuit and its classical baseline.

The sparse model is

    O ~= sum_i Phi[:, i] * sum_j prod_k Psi_k[i_k, j_k] * C[j, :]

with ``Phi`` a tensor whose leading axis runs over observations and whose
trailing axes match the atom sizes of the per-dimension dictionaries
``Psi_k``.  MOMP never forms the Kronecker dictionary: the matching step
maximizes the projection one dimension at a time with the others frozen.

Multi-indices are 0-based tuples; dictionary dimension ``k`` corresponds to
tensor axis ``k + 1``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from momp.errors import DegenerateProblemError, DimensionError, ResourceError
from momp.tensor import (
    KRON_MAX_ENTRIES,
    MultiIndex,
    TensorLike,
    contract_full,
    contraction_energy,
    kron_flatten,
)

logger = logging.getLogger(__name__)

#: Relative width of the band in which two scores count as tied.
TIE_RTOL = 1e-12
#: Default cap on ``N^q * prod_k N_k^a`` for the exhaustive oracle.
ORACLE_MAX_ENTRIES = 2**26
#: A best score below ``(NULL_RTOL * ||residual||)**2`` means the residual is
#: orthogonal to every effective column; further picks would be rounding noise.
NULL_RTOL = 1e-10


def _explains_nothing(score: float, residual: np.ndarray) -> bool:
    return score <= (NULL_RTOL * float(np.linalg.norm(residual))) ** 2


@dataclass(frozen=True)
class DictionarySet:
    """The per-dimension dictionaries ``Psi_1 .. Psi_ND``.

    ``grids`` optionally carries, for each dictionary, the parameter value
    each atom was generated from (used to turn a support back into physical
    quantities).
    """

    dicts: tuple[np.ndarray, ...]
    grids: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        mats = tuple(np.asarray(d, dtype=np.complex128) for d in self.dicts)
        if not mats:
            raise DimensionError("at least one dictionary is required")
        for k, m in enumerate(mats):
            if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
                raise DimensionError(f"dictionary {k} must be a non-empty matrix, got {m.shape}")
            if np.any(np.linalg.norm(m, axis=0) == 0):
                raise DimensionError(f"dictionary {k} has a zero-norm atom")
        object.__setattr__(self, "dicts", mats)
        if self.grids is not None:
            grids = tuple(np.asarray(g, dtype=float) for g in self.grids)
            if len(grids) != len(mats) or any(g.shape != (m.shape[1],) for g, m in zip(grids, mats)):
                raise DimensionError("one grid value per atom is required for every dictionary")
            object.__setattr__(self, "grids", grids)

    def __len__(self) -> int:
        return len(self.dicts)

    def __getitem__(self, k: int) -> np.ndarray:
        return self.dicts[k]

    def __iter__(self):
        return iter(self.dicts)

    @property
    def atom_sizes(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.dicts)

    @property
    def atom_counts(self) -> tuple[int, ...]:
        return tuple(m.shape[1] for m in self.dicts)

    def atoms(self, j: Sequence[int]) -> list[np.ndarray]:
        if len(j) != len(self.dicts):
            raise DimensionError(f"multi-index {tuple(j)} has wrong length for {len(self)} dictionaries")
        return [m[:, jk] for m, jk in zip(self.dicts, j)]


@dataclass(frozen=True)
class SparseProblem:
    observation: np.ndarray
    measurement: TensorLike
    dicts: DictionarySet

    def __post_init__(self):
        obs = np.asarray(self.observation, dtype=np.complex128)
        if obs.ndim == 1:
            obs = obs[:, None]
        if obs.ndim != 2:
            raise DimensionError(f"observation must be a matrix, got shape {obs.shape}")
        object.__setattr__(self, "observation", obs)
        meas = self.measurement
        if isinstance(meas, np.ndarray):
            meas = np.asarray(meas, dtype=np.complex128)
            object.__setattr__(self, "measurement", meas)
        shape = tuple(meas.shape)
        if shape[0] != obs.shape[0]:
            raise DimensionError(
                f"measurement leading extent {shape[0]} != observation rows {obs.shape[0]}"
            )
        if shape[1:] != self.dicts.atom_sizes:
            raise DimensionError(
                f"measurement trailing extents {shape[1:]} != atom sizes {self.dicts.atom_sizes}"
            )


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of :func:`momp_solve` and :func:`omp_solve`.

    ``stop_tol`` is a threshold on the relative residual-norm decrease of one
    support iteration; a candidate atom that does not reach it is discarded
    and the solve stops.  ``0`` runs all ``sparsity`` iterations.
    """

    sparsity: int = 1
    refine_iters: int = 3
    init_mode: Literal["full", "numerator_only"] = "full"
    coarse_init_factor: float = 1.0
    stop_tol: float = 0.0
    dim_order: tuple[int, ...] | None = None
    max_restarts: int = 16

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError("sparsity must be >= 1")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be >= 0")
        if self.init_mode not in ("full", "numerator_only"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if not 0 < self.coarse_init_factor <= 1:
            raise ValueError("coarse_init_factor must lie in (0, 1]")
        if not self.stop_tol >= 0:
            raise ValueError("stop_tol must be >= 0")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")


@dataclass
class SparseSolution:
    support: list[MultiIndex]
    coefficients: np.ndarray
    residual_norm_history: list[float]
    residual: np.ndarray
    columns: np.ndarray
    rank_deficient: bool = False
    refine_traces: list[list[float]] = field(default_factory=list)

    @property
    def residual_norm(self) -> float:
        return self.residual_norm_history[-1]


class LeastSquaresFit(NamedTuple):
    coefficients: np.ndarray
    residual: np.ndarray
    rank_deficient: bool


def _argmax(scores: np.ndarray) -> int:
    """First index whose score is within ``TIE_RTOL`` of the maximum."""
    best = float(np.max(scores))
    if not np.isfinite(best):
        return int(np.argmax(scores))
    return int(np.flatnonzero(scores >= best - TIE_RTOL * abs(best))[0])


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    scale = float(np.max(den)) if den.size else 0.0
    usable = den > 1e-14 * scale
    out = np.full(num.shape, -np.inf)
    np.divide(num, den, out=out, where=usable)
    return out


def project_observation(residual: np.ndarray, measurement: TensorLike) -> np.ndarray:
    """``O_Phi[:, i] = residual^H Phi[:, i]`` for every entry multi-index ``i``.

    Returns a dense tensor of shape ``(N^m, N_1^s, ..., N_ND^s)``.
    """
    res = np.asarray(residual, dtype=np.complex128)
    if res.ndim == 1:
        res = res[:, None]
    if res.ndim != 2 or res.shape[0] != measurement.shape[0]:
        raise DimensionError(
            f"residual shape {res.shape} incompatible with measurement leading extent "
            f"{measurement.shape[0]}"
        )
    if not isinstance(measurement, np.ndarray):
        return measurement.project(res)
    n_q = measurement.shape[0]
    flat = measurement.reshape(n_q, -1)
    return (res.conj().T @ flat).reshape((res.shape[1],) + measurement.shape[1:])


def objective(o_phi: np.ndarray, measurement: TensorLike, dicts: DictionarySet, j: Sequence[int]) -> float:
    """Normalized projection score of the full multi-index ``j``."""
    atoms = dicts.atoms(j)
    num = np.linalg.norm(contract_full(o_phi, atoms)) ** 2
    den = np.linalg.norm(contract_full(measurement, atoms)) ** 2
    return float(num / den) if den > 0 else -math.inf


def _coarse_subset(n_atoms: int, factor: float) -> np.ndarray:
    n = max(1, math.ceil(factor * n_atoms))
    return np.unique((np.arange(n) * n_atoms) // n)


def _dimension_scores(
    k: int,
    o_phi: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    fixed: dict[int, int],
    subset: np.ndarray | None = None,
    numerator_only: bool = False,
) -> np.ndarray:
    atoms = dicts[k] if subset is None else dicts[k][:, subset]
    vecs = {kk + 1: dicts[kk][:, jj] for kk, jj in fixed.items()}
    num = contraction_energy(o_phi, k + 1, atoms, vecs)
    if numerator_only:
        return num
    den = contraction_energy(measurement, k + 1, atoms, vecs)
    return _ratio(num, den)


def _ranked(scores: np.ndarray) -> list[int]:
    best = _argmax(scores)
    order = [int(i) for i in np.argsort(-scores, kind="stable") if i != best and np.isfinite(scores[i])]
    return [best] + order


def init_dimension(
    k: int,
    o_phi: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    estimated: dict[int, int],
    cfg: SolverConfig | None = None,
) -> int:
    """Initial atom for dimension ``k`` given the already-estimated ones.

    Dimensions in ``estimated`` are contracted against their atoms, the
    not-yet-estimated ones are left free and summed in energy (the relaxed
    objective), and the ratio of observation energy to measurement energy
    is maximized over the atoms of ``k``.  With ``init_mode ==
    "numerator_only"`` the denominator is taken as 1.  Coarse initialization
    scans a uniform subsample of the atoms; the returned index always refers
    to the full dictionary.
    """
    cfg = cfg or SolverConfig()
    if k in estimated:
        raise ValueError(f"dimension {k} is already estimated")
    subset = _coarse_subset(dicts.atom_counts[k], cfg.coarse_init_factor)
    scores = _dimension_scores(
        k, o_phi, measurement, dicts, estimated, subset, cfg.init_mode == "numerator_only"
    )
    if not np.any(np.isfinite(scores)):
        raise DegenerateProblemError(f"every atom of dimension {k} has a zero effective column")
    return int(subset[_argmax(scores)])


def refine_dimension(
    k: int,
    o_phi: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    current: Sequence[int],
) -> int:
    """Best atom for dimension ``k`` with every other coordinate frozen.

    If the current atom is (within tie tolerance) already optimal it is kept.
    """
    return _refine_scored(k, o_phi, measurement, dicts, current)[0]


def _refine_scored(k, o_phi, measurement, dicts, current) -> tuple[int, float]:
    if len(current) != len(dicts):
        raise DimensionError("current multi-index has the wrong length")
    fixed = {kk: int(jj) for kk, jj in enumerate(current) if kk != k}
    scores = _dimension_scores(k, o_phi, measurement, dicts, fixed)
    if not np.any(np.isfinite(scores)):
        raise DegenerateProblemError(f"every atom of dimension {k} has a zero effective column")
    best = _argmax(scores)
    cur = int(current[k])
    if scores[cur] >= scores[best] - TIE_RTOL * abs(scores[best]):
        best = cur
    return best, float(scores[best])


def refine_sweeps(
    o_phi: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    start: Sequence[int],
    n_iter: int,
    order: Sequence[int] | None = None,
) -> tuple[MultiIndex, list[float]]:
    """Run up to ``n_iter`` coordinate-wise refinement sweeps.

    Returns the final multi-index and the objective after each sweep, with
    the objective at ``start`` first.  Stops early after a sweep that moves
    no coordinate.
    """
    order = list(range(len(dicts))) if order is None else list(order)
    current = [int(x) for x in start]
    trace = [objective(o_phi, measurement, dicts, current)]
    for _ in range(n_iter):
        changed = False
        value = trace[-1]
        for k in order:
            new, value = _refine_scored(k, o_phi, measurement, dicts, current)
            if new != current[k]:
                current[k] = new
                changed = True
        trace.append(value)
        if not changed:
            break
    return tuple(current), trace


def _all_atom_energy(t: np.ndarray, dicts: DictionarySet, chunk_entries: int = 2**22) -> np.ndarray:
    """Energy of ``t`` contracted against every atom tuple, shape ``atom_counts``."""
    lead = t.shape[0]
    first = dicts[0]
    rest = int(np.prod(dicts.atom_counts[1:], dtype=np.int64))
    chunk = max(1, chunk_entries // max(1, lead * rest))
    out = np.empty(dicts.atom_counts, dtype=float)
    for start in range(0, first.shape[1], chunk):
        x = np.tensordot(t, first[:, start:start + chunk], axes=([1], [0]))
        for psi in dicts.dicts[1:]:
            x = np.tensordot(x, psi, axes=([1], [0]))
        out[start:start + chunk] = (x.real**2 + x.imag**2).sum(axis=0)
    return out


def projection_scores(
    residual: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    max_entries: int = ORACLE_MAX_ENTRIES,
) -> np.ndarray:
    """Projection score of every atom tuple, as a tensor of shape ``atom_counts``.

    Atom tuples whose effective column vanishes get ``-inf``.
    """
    n_tuples = int(np.prod(dicts.atom_counts, dtype=object))
    if measurement.shape[0] * n_tuples > max_entries:
        raise ResourceError(
            f"exhaustive projection over {n_tuples} atom tuples exceeds the oracle cap {max_entries}"
        )
    o_phi = project_observation(residual, measurement)
    dense = measurement if isinstance(measurement, np.ndarray) else measurement.to_dense()
    num = _all_atom_energy(o_phi, dicts)
    den = _all_atom_energy(dense, dicts)
    return _ratio(num.ravel(), den.ravel()).reshape(dicts.atom_counts)


def exhaustive_projection(
    residual: np.ndarray,
    measurement: TensorLike,
    dicts: DictionarySet,
    max_entries: int = ORACLE_MAX_ENTRIES,
) -> tuple[MultiIndex, float]:
    """Global maximizer of the projection score by brute force (test oracle).

    Ties go to the lexicographically smallest multi-index.
    """
    scores = projection_scores(residual, measurement, dicts, max_entries)
    flat = scores.ravel()
    pos = _argmax(flat)
    j = tuple(int(i) for i in np.unravel_index(pos, scores.shape))
    return j, float(flat[pos])


def residual_update(observation: np.ndarray, columns: np.ndarray) -> LeastSquaresFit:
    """Least-squares fit of ``observation`` on ``columns`` and the residual.

    Rank-deficient column sets are solved in the minimum-norm sense and
    flagged.
    """
    obs = np.asarray(observation, dtype=np.complex128)
    if obs.ndim == 1:
        obs = obs[:, None]
    cols = np.asarray(columns, dtype=np.complex128).reshape(obs.shape[0], -1)
    if cols.shape[1] == 0:
        return LeastSquaresFit(np.zeros((0, obs.shape[1]), dtype=np.complex128), obs.copy(), False)
    coef, _, rank, _ = np.linalg.lstsq(cols, obs, rcond=None)
    deficient = bool(rank < cols.shape[1])
    if deficient:
        logger.warning("support columns are rank deficient (rank %d of %d)", rank, cols.shape[1])
    return LeastSquaresFit(coef, obs - cols @ coef, deficient)


def _select(o_phi, measurement, dicts: DictionarySet, cfg: SolverConfig, order, taken, traces):
    first = order[0]
    subset = _coarse_subset(dicts.atom_counts[first], cfg.coarse_init_factor)
    scores = _dimension_scores(
        first, o_phi, measurement, dicts, {}, subset, cfg.init_mode == "numerator_only"
    )
    if not np.any(np.isfinite(scores)):
        raise DegenerateProblemError(f"every atom of dimension {first} has a zero effective column")
    for attempt, cand in enumerate(_ranked(scores)[: cfg.max_restarts]):
        estimated = {first: int(subset[cand])}
        for k in order[1:]:
            estimated[k] = init_dimension(k, o_phi, measurement, dicts, estimated, cfg)
        start = tuple(estimated[k] for k in range(len(dicts)))
        j, trace = refine_sweeps(o_phi, measurement, dicts, start, cfg.refine_iters, order)
        traces.append(trace)
        if j not in taken:
            return j
        logger.debug("attempt %d reselected %s; restarting from next-best initialization", attempt, j)
    return None


def momp_solve(problem: SparseProblem, cfg: SolverConfig) -> SparseSolution:
    """Greedy multidimensional sparse recovery.

    Each support iteration projects the residual, initializes every
    dimension in turn, refines with coordinate sweeps, appends the effective
    column of the chosen atom tuple and re-fits all coefficients by least
    squares.
    """
    obs = problem.observation
    meas = problem.measurement
    dicts = problem.dicts
    order = tuple(range(len(dicts))) if cfg.dim_order is None else tuple(cfg.dim_order)
    if sorted(order) != list(range(len(dicts))):
        raise ValueError(f"dim_order {order} is not a permutation of the {len(dicts)} dimensions")

    residual = obs.copy()
    history = [float(np.linalg.norm(obs))]
    support: list[MultiIndex] = []
    columns = np.zeros((obs.shape[0], 0), dtype=np.complex128)
    coef = np.zeros((0, obs.shape[1]), dtype=np.complex128)
    deficient = False
    traces: list[list[float]] = []

    for _ in range(cfg.sparsity):
        prev = history[-1]
        if prev == 0.0:
            break
        o_phi = project_observation(residual, meas)
        j = _select(o_phi, meas, dicts, cfg, order, set(support), traces)
        if j is None:
            logger.info("no new atom tuple found; stopping with %d atoms", len(support))
            break
        if _explains_nothing(traces[-1][-1], residual):
            logger.info("residual is orthogonal to every atom; stopping with %d atoms", len(support))
            break
        col = contract_full(meas, dicts.atoms(j))
        cand_cols = np.column_stack([columns, col])
        fit = residual_update(obs, cand_cols)
        new_norm = float(np.linalg.norm(fit.residual))
        if cfg.stop_tol > 0 and (prev - new_norm) / prev < cfg.stop_tol:
            break
        support.append(j)
        columns = cand_cols
        coef, residual, deficient = fit
        history.append(new_norm)

    return SparseSolution(support, coef, history, residual, columns, deficient, traces)


def flatten_problem(problem: SparseProblem, max_entries: int = KRON_MAX_ENTRIES) -> tuple[np.ndarray, np.ndarray]:
    """Classical view ``(Phi_bar, Psi_bar)`` of a multidimensional problem."""
    meas = problem.measurement
    dense = meas if isinstance(meas, np.ndarray) else meas.to_dense(max_entries)
    flat_meas = dense.reshape(dense.shape[0], -1)
    return flat_meas, kron_flatten(problem.dicts, max_entries)


def omp_solve(
    observation: np.ndarray,
    flat_measurement: np.ndarray,
    flat_dictionary: np.ndarray,
    cfg: SolverConfig,
    atom_shape: Sequence[int] | None = None,
    max_entries: int = KRON_MAX_ENTRIES,
) -> SparseSolution:
    """Classical OMP on the flattened problem.

    Selection maximizes ``||r^H a_j||^2 / ||a_j||^2`` over the columns of
    ``flat_measurement @ flat_dictionary``.  Supports are reported as
    multi-indices: 1-tuples by default, or unraveled over ``atom_shape``
    (C order, matching :func:`momp.tensor.kron_flatten`).
    """
    obs = np.asarray(observation, dtype=np.complex128)
    if obs.ndim == 1:
        obs = obs[:, None]
    phi = np.asarray(flat_measurement, dtype=np.complex128)
    psi = np.asarray(flat_dictionary, dtype=np.complex128)
    if phi.shape[0] != obs.shape[0] or phi.shape[1] != psi.shape[0]:
        raise DimensionError(
            f"incompatible shapes: observation {obs.shape}, measurement {phi.shape}, dictionary {psi.shape}"
        )
    if phi.shape[0] * psi.shape[1] > max_entries:
        raise ResourceError(f"effective matrix of {phi.shape[0]}x{psi.shape[1]} exceeds cap {max_entries}")
    shape = (psi.shape[1],) if atom_shape is None else tuple(atom_shape)
    if int(np.prod(shape)) != psi.shape[1]:
        raise DimensionError(f"atom_shape {shape} does not match {psi.shape[1]} atoms")

    eff = phi @ psi
    norms = np.einsum("ij,ij->j", eff.real, eff.real) + np.einsum("ij,ij->j", eff.imag, eff.imag)
    residual = obs.copy()
    history = [float(np.linalg.norm(obs))]
    chosen: list[int] = []
    coef = np.zeros((0, obs.shape[1]), dtype=np.complex128)
    deficient = False

    for _ in range(cfg.sparsity):
        prev = history[-1]
        if prev == 0.0:
            break
        corr = eff.conj().T @ residual
        scores = _ratio((corr.real**2 + corr.imag**2).sum(axis=1), norms)
        scores[chosen] = -np.inf
        if not np.any(np.isfinite(scores)):
            break
        pick = _argmax(scores)
        if _explains_nothing(float(scores[pick]), residual):
            logger.info("residual is orthogonal to every atom; stopping with %d atoms", len(chosen))
            break
        fit = residual_update(obs, eff[:, chosen + [pick]])
        new_norm = float(np.linalg.norm(fit.residual))
        if cfg.stop_tol > 0 and (prev - new_norm) / prev < cfg.stop_tol:
            break
        chosen.append(pick)
        coef, residual, deficient = fit
        history.append(new_norm)

    support = [tuple(int(i) for i in np.unravel_index(p, shape)) for p in chosen]
    return SparseSolution(support, coef, history, residual, eff[:, chosen], deficient)
