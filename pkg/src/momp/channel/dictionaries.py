"""Per-dimension channel dictionaries and the mapping from a sparse solution
back to paths and channel taps.

Dimension order: AP x cosine, AP y cosine, device x cosine, device y cosine,
relative delay.  The device dictionaries hold conjugated steering factors so
that the Kronecker atom ``Psi_1 kron Psi_2 kron Psi_3 kron Psi_4 kron Psi_5``
is ``vec`` of ``a_R a_T^H p`` in the measurement-tensor layout.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from momp.channel.geometry import ArrayGeometry, partial_steering, time_response
from momp.errors import ConfigError, DimensionError
from momp.paths import PathEstimate, PathParams
from momp.solver import DictionarySet, SparseSolution


def atom_count(k_res: float, size: int) -> int:
    """``floor(k_res * size)``, robust to binary rounding of ``k_res``."""
    return int(math.floor(k_res * size + 1e-9))


def angular_grid(n_atoms: int) -> np.ndarray:
    """Uniform direction-cosine grid over ``[-1, 1)``."""
    return -1.0 + 2.0 * np.arange(n_atoms) / n_atoms


def delay_grid(n_atoms: int, taps: int, sampling_time: float) -> np.ndarray:
    """Uniform relative-delay grid over ``[0, taps * sampling_time)``."""
    return np.arange(n_atoms) * (taps * sampling_time / n_atoms)


def build_dictionaries(
    k_res: float, tx: ArrayGeometry, rx: ArrayGeometry, taps: int, sampling_time: float
) -> DictionarySet:
    """The five channel dictionaries with ``floor(k_res * N_k^s)`` atoms each.

    Examples
    --------
    >>> d = build_dictionaries(2, ArrayGeometry(2, 2), ArrayGeometry(4, 4), 8, 1e-9)
    >>> d.atom_counts
    (8, 8, 4, 4, 16)
    """
    if not k_res >= 1:
        raise ConfigError(f"K_res must be >= 1, got {k_res!r}")
    sizes = (rx.nx, rx.ny, tx.nx, tx.ny)
    grids = [angular_grid(atom_count(k_res, n)) for n in sizes]
    mats = [partial_steering(n, g) for n, g in zip(sizes[:2], grids[:2])]
    mats += [partial_steering(n, g).conj() for n, g in zip(sizes[2:], grids[2:])]
    delays = delay_grid(atom_count(k_res, taps), taps, sampling_time)
    mats.append(np.column_stack([time_response(t, taps, sampling_time) for t in delays]))
    return DictionarySet(tuple(mats), tuple(grids) + (delays,))


def _direction(x: float, y: float, facing: int) -> tuple[np.ndarray, bool]:
    horiz = x * x + y * y
    if horiz <= 1.0 + 1e-12:
        return np.array([x, y, facing * math.sqrt(max(0.0, 1.0 - horiz))]), True
    # outside the visible region: keep the horizontal bearing, flag it
    r = math.sqrt(horiz)
    return np.array([x / r, y / r, 0.0]), False


def extract_paths(
    solution: SparseSolution,
    dicts: DictionarySet,
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    gain_scale: float = 1.0,
) -> list[PathEstimate]:
    """Turn each support tuple into a path, strongest coefficient first.

    The z cosine completes the unit vector on the side each array faces;
    grid points with ``x^2 + y^2 > 1`` give paths marked ``valid=False``.
    Gains are the least-squares coefficients divided by ``gain_scale``
    (``sqrt(P_t)`` for measurements built by :func:`measure`).
    """
    if dicts.grids is None or len(dicts) != 5:
        raise DimensionError("path extraction needs the five gridded channel dictionaries")
    out = []
    for j, coef in zip(solution.support, solution.coefficients[:, 0]):
        vals = [g[jk] for g, jk in zip(dicts.grids, j)]
        doa, ok_r = _direction(vals[0], vals[1], rx.facing)
        dod, ok_t = _direction(vals[2], vals[3], tx.facing)
        out.append(PathEstimate(doa, dod, float(vals[4]), complex(coef) / gain_scale, ok_r and ok_t))
    out.sort(key=lambda p: -p.magnitude)
    return out


def reconstruct_taps(
    solution: SparseSolution, dicts: DictionarySet, gain_scale: float = 1.0
) -> np.ndarray:
    """Channel taps implied by a sparse solution, shape ``(D, N_R, N_T)``."""
    n_r = dicts[0].shape[0] * dicts[1].shape[0]
    n_t = dicts[2].shape[0] * dicts[3].shape[0]
    h = np.zeros((dicts[4].shape[0], n_r, n_t), dtype=np.complex128)
    for j, coef in zip(solution.support, solution.coefficients[:, 0]):
        a = dicts.atoms(j)
        spatial = np.outer(np.kron(a[0], a[1]), np.kron(a[2], a[3]))
        h += (coef / gain_scale) * a[4][:, None, None] * spatial[None]
    return h


def _snap_pair(gx: np.ndarray, gy: np.ndarray, x: float, y: float) -> tuple[float, float]:
    """Nearest grid point to ``(x, y)`` among those inside the unit disk."""
    def around(grid, v):
        i = int(np.searchsorted(grid, v))
        return grid[max(0, i - 1):i + 1]

    cands = [(a, b) for a in around(gx, x) for b in around(gy, y) if a * a + b * b <= 1.0]
    if not cands:
        i, k = int(np.argmin(np.abs(gx - x))), int(np.argmin(np.abs(gy - y)))
        return float(gx[i]), float(gy[k])
    return min(cands, key=lambda c: (c[0] - x) ** 2 + (c[1] - y) ** 2)


def quantize_paths(paths: Sequence[PathParams], dicts: DictionarySet, tau0: float) -> list[PathEstimate]:
    """Snap each path to the nearest visible dictionary grid point.

    This is the best any on-grid estimator can do; the z cosine keeps the
    sign of the true direction.
    """
    g = dicts.grids
    out = []
    for p in paths:
        rx_xy = _snap_pair(g[0], g[1], p.doa[0], p.doa[1])
        tx_xy = _snap_pair(g[2], g[3], p.dod[0], p.dod[1])
        delay = float(g[4][int(np.argmin(np.abs(g[4] - (p.delay - tau0))))])
        doa, ok_r = _direction(*rx_xy, 1 if p.doa[2] >= 0 else -1)
        dod, ok_t = _direction(*tx_xy, 1 if p.dod[2] >= 0 else -1)
        out.append(PathEstimate(doa, dod, delay, p.gain, ok_r and ok_t))
    return out
