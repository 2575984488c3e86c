"""Dense complex tensors and the few contractions the solver needs.

Tensors are plain :class:`numpy.ndarray` objects of dtype ``complex128`` in
C order, i.e. the last index varies fastest.  A multi-index ``(j_1, ..., j_N)``
over trailing axes of extents ``(n_1, ..., n_N)`` therefore linearizes to
``((j_1 * n_2 + j_2) * n_3 + j_3) ...``, which is exactly the column order of
``np.kron(A_1, np.kron(A_2, ...))``.  All indices are 0-based.

Besides dense arrays, the contraction helpers accept any object implementing
:class:`StructuredTensor`; this lets a measurement operator that is too large
to materialize (see :mod:`momp.channel.training`) be used by the solver.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from functools import reduce
from typing import Protocol, Union, runtime_checkable

import numpy as np

from momp.errors import DimensionError, ResourceError

MultiIndex = tuple[int, ...]

#: Default cap on the number of complex entries ``kron_flatten`` may build.
KRON_MAX_ENTRIES = 2**28


@runtime_checkable
class StructuredTensor(Protocol):
    """Implicit tensor with a leading observation axis.

    Only the operations needed by the sparse solver are required.  Axis
    numbering follows the dense convention: axis 0 is the leading
    (observation) axis, axes ``1..ndim-1`` are the trailing axes.
    """

    shape: tuple[int, ...]

    @property
    def ndim(self) -> int: ...

    def project(self, residual: np.ndarray) -> np.ndarray:
        """Dense ``residual^H`` applied along axis 0."""

    def contract_full(self, vectors: Sequence[np.ndarray]) -> np.ndarray:
        """Contract every trailing axis, returning a vector over axis 0."""

    def contraction_energy(
        self, axis: int, atoms: np.ndarray, fixed: Mapping[int, np.ndarray]
    ) -> np.ndarray:
        """See :func:`contraction_energy`."""

    def to_dense(self, max_entries: int = KRON_MAX_ENTRIES) -> np.ndarray: ...


TensorLike = Union[np.ndarray, StructuredTensor]


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a complex128 tensor, optionally from flat data in C order."""
    arr = np.asarray(data, dtype=np.complex128)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != int(np.prod(shape)):
            raise DimensionError(
                f"data length {arr.size} does not match shape {shape}"
            )
        arr = arr.reshape(shape)
    return arr


def flat_index(index: Sequence[int], shape: Sequence[int]) -> int:
    """Linear position of ``index`` in a C-ordered tensor of ``shape``."""
    if len(index) != len(shape):
        raise DimensionError(
            f"index has {len(index)} coordinates, tensor has {len(shape)} axes"
        )
    for axis, (i, n) in enumerate(zip(index, shape)):
        if not 0 <= i < n:
            raise DimensionError(f"coordinate {i} out of range on axis {axis} (extent {n})")
    return int(np.ravel_multi_index(tuple(index), tuple(shape)))


def multi_index(position: int, shape: Sequence[int]) -> MultiIndex:
    """Inverse of :func:`flat_index`."""
    return tuple(int(i) for i in np.unravel_index(position, tuple(shape)))


def _check_vector(t_shape, axis: int, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.complex128)
    if vec.ndim != 1 or vec.shape[0] != t_shape[axis]:
        raise DimensionError(
            f"axis {axis}: expected a vector of length {t_shape[axis]}, got shape {vec.shape}"
        )
    return vec


def contract_full(t: TensorLike, vectors: Sequence[np.ndarray], start_dim: int = 1) -> np.ndarray:
    """Contract axes ``start_dim..`` of ``t`` against one vector each.

    ``out[q] = sum_i t[q, i] * prod_k vectors[k][i_k]``.  Contraction runs
    from the last axis backwards with a fixed summation order, so results
    are reproducible bit for bit.
    """
    if not isinstance(t, np.ndarray):
        if start_dim != 1:
            raise DimensionError("structured tensors only support start_dim=1")
        if len(vectors) != t.ndim - 1:
            raise DimensionError(
                f"{len(vectors)} vectors given for {t.ndim - 1} trailing axes"
            )
        return t.contract_full([np.asarray(v, dtype=np.complex128) for v in vectors])
    if start_dim < 0 or start_dim + len(vectors) != t.ndim:
        raise DimensionError(
            f"{len(vectors)} vectors starting at axis {start_dim} do not consume "
            f"all {t.ndim} axes of a tensor of shape {t.shape}"
        )
    vecs = [_check_vector(t.shape, start_dim + k, v) for k, v in enumerate(vectors)]
    out = t
    for v in reversed(vecs):
        out = out @ v
    return np.asarray(out)


def _normalize_fixed(fixed) -> list[tuple[int, np.ndarray]]:
    if fixed is None:
        return []
    items = fixed.items() if isinstance(fixed, Mapping) else fixed
    seen: set[int] = set()
    pairs = []
    for axis, vec in items:
        axis = int(axis)
        if axis in seen:
            raise ValueError(f"axis {axis} fixed more than once")
        seen.add(axis)
        pairs.append((axis, vec))
    return pairs


def contract_partial(
    t: np.ndarray,
    fixed: Mapping[int, np.ndarray] | Iterable[tuple[int, np.ndarray]] | None,
) -> np.ndarray:
    """Contract the axes named in ``fixed`` against their vectors.

    The surviving axes keep their relative order.  ``fixed`` may be a mapping
    or an iterable of ``(axis, vector)`` pairs; naming an axis twice is an
    error, and so is fixing every axis (use :func:`contract_full`).
    """
    pairs = _normalize_fixed(fixed)
    if not isinstance(t, np.ndarray):
        raise TypeError("contract_partial needs a dense tensor; call to_dense() first")
    for axis, _ in pairs:
        if not 0 <= axis < t.ndim:
            raise DimensionError(f"axis {axis} does not exist in a {t.ndim}-axis tensor")
    if len(pairs) >= t.ndim:
        raise DimensionError("all axes fixed; use contract_full instead")
    out = t
    for axis, vec in sorted(pairs, key=lambda p: p[0], reverse=True):
        vec = _check_vector(t.shape, axis, vec)
        out = np.tensordot(out, vec, axes=([axis], [0]))
    return out


def contraction_energy(
    t: TensorLike,
    axis: int,
    atoms: np.ndarray,
    fixed: Mapping[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Per-atom energy of ``t`` contracted along ``axis``.

    Axes in ``fixed`` are contracted against their vectors, ``axis`` is
    contracted against each column of ``atoms`` in turn, and every remaining
    axis (the leading one included) is summed in squared magnitude::

        e[j] = sum_{free} | sum_{i_axis, i_fixed} t[...] atoms[i_axis, j] prod v[i_fixed] |^2

    With every trailing axis either fixed or ``axis`` this is the squared norm
    of the effective column; with some axes left free it is the relaxed
    initialization score.
    """
    fixed = dict(fixed or {})
    if axis in fixed:
        raise ValueError(f"axis {axis} is both fixed and swept")
    atoms = np.asarray(atoms, dtype=np.complex128)
    if atoms.ndim != 2 or atoms.shape[0] != t.shape[axis]:
        raise DimensionError(
            f"axis {axis}: atoms must have {t.shape[axis]} rows, got shape {atoms.shape}"
        )
    if not isinstance(t, np.ndarray):
        return t.contraction_energy(axis, atoms, fixed)
    reduced = contract_partial(t, fixed) if fixed else t
    new_axis = axis - sum(1 for a in fixed if a < axis)
    mat = np.moveaxis(reduced, new_axis, -1).reshape(-1, atoms.shape[0])
    proj = mat @ atoms
    return np.einsum("ij,ij->j", proj.real, proj.real) + np.einsum("ij,ij->j", proj.imag, proj.imag)


def kron_flatten(dicts: Iterable[np.ndarray], max_entries: int = KRON_MAX_ENTRIES) -> np.ndarray:
    """Materialize the Kronecker product of per-dimension dictionaries.

    Column ``flat_index(j, atom_counts)`` equals the outer product of the
    selected atoms, flattened in C order.  Intended for oracles and the
    classical OMP baseline; raises :class:`ResourceError` above the cap.
    """
    mats = [np.asarray(d, dtype=np.complex128) for d in dicts]
    if not mats:
        raise DimensionError("at least one dictionary is required")
    rows = int(np.prod([m.shape[0] for m in mats], dtype=object))
    cols = int(np.prod([m.shape[1] for m in mats], dtype=object))
    if rows * cols > max_entries:
        raise ResourceError(
            f"flattened dictionary would hold {rows * cols} entries (cap {max_entries})"
        )
    if len(mats) == 1:
        return mats[0]
    return reduce(np.kron, mats)
