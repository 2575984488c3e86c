"""Hybrid-architecture training, received-signal synthesis, whitening and the
measurement tensor linking the channel dictionaries to the observations.

Observation rows are ordered ``m * M_R * Q + m_R * Q + q`` (frame, combiner
output, symbol).  The measurement tensor has shape
``(M * M_R * Q, N_R^x, N_R^y, N_T^x, N_T^y, D)`` with entries

    Phi[row, i1, i2, i3, i4, d] = conj(W'_m)[i1 N_R^y + i2, m_R] * (F_m S)[i3 N_T^y + i4, q + D - 1 - d]

(0-based).  Because each entry factors into a receive part and a transmit
part per frame, :class:`FrameSeparableTensor` keeps only those factors and
never materializes the full tensor unless asked to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from momp.channel.geometry import ArrayGeometry
from momp.errors import ConfigError, DecompositionError, DimensionError, ResourceError
from momp.tensor import KRON_MAX_ENTRIES


@dataclass(frozen=True)
class TrainingSet:
    """Per-frame precoders/combiners and the shared zero-padded pilot.

    Array shapes: ``precoders_rf (M, N_T, M_T)``, ``precoders_bb (M, M_T, M_T)``,
    ``combiners_rf (M, N_R, M_R)``, ``combiners_bb (M, M_R, M_R)``,
    ``pilot (M_T, Q + D)``.  Powers are in watts.
    """

    tx: ArrayGeometry
    rx: ArrayGeometry
    precoders_rf: np.ndarray
    precoders_bb: np.ndarray
    combiners_rf: np.ndarray
    combiners_bb: np.ndarray
    pilot: np.ndarray
    n_symbols: int
    taps: int
    sampling_time: float
    tx_power: float = 1.0
    noise_var: float = 0.0

    def __post_init__(self):
        m = self.precoders_rf.shape[0]
        shapes = {
            "precoders_rf": (self.precoders_rf, (m, self.tx.size, None)),
            "combiners_rf": (self.combiners_rf, (m, self.rx.size, None)),
        }
        for name, (arr, want) in shapes.items():
            if arr.ndim != 3 or arr.shape[:2] != want[:2]:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {want[:2]} + (chains,)")
        m_t = self.precoders_rf.shape[2]
        m_r = self.combiners_rf.shape[2]
        if self.precoders_bb.shape != (m, m_t, m_t) or self.combiners_bb.shape != (m, m_r, m_r):
            raise DimensionError("digital stages must be square per frame")
        for name in ("precoders_rf", "combiners_rf"):
            if not np.allclose(np.abs(getattr(self, name)), 1.0, atol=1e-12):
                raise ConfigError(f"{name} entries must have unit modulus")
        if self.pilot.shape != (m_t, self.n_symbols + self.taps):
            raise DimensionError(
                f"pilot must have shape ({m_t}, Q + D) = ({m_t}, {self.n_symbols + self.taps}), "
                f"got {self.pilot.shape}"
            )
        if self.sampling_time <= 0 or self.tx_power < 0 or self.noise_var < 0:
            raise ConfigError("sampling time must be positive and powers nonnegative")

    @property
    def n_frames(self) -> int:
        return self.precoders_rf.shape[0]

    @property
    def rf_chains_tx(self) -> int:
        return self.precoders_rf.shape[2]

    @property
    def rf_chains_rx(self) -> int:
        return self.combiners_rf.shape[2]

    @property
    def precoders(self) -> np.ndarray:
        return self.precoders_rf @ self.precoders_bb

    @property
    def combiners(self) -> np.ndarray:
        return self.combiners_rf @ self.combiners_bb

    def subset(self, frames: Sequence[int]) -> "TrainingSet":
        idx = np.asarray(frames, dtype=int)
        return TrainingSet(
            self.tx, self.rx, self.precoders_rf[idx], self.precoders_bb[idx],
            self.combiners_rf[idx], self.combiners_bb[idx], self.pilot, self.n_symbols,
            self.taps, self.sampling_time, self.tx_power, self.noise_var,
        )


def dft_matrix(n: int) -> np.ndarray:
    """Unnormalized DFT matrix; every entry has unit modulus."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def planar_dft(array: ArrayGeometry) -> np.ndarray:
    return np.kron(dft_matrix(array.nx), dft_matrix(array.ny))


def build_pilot(n_symbols: int, taps: int, rf_chains: int = 1, n_ones: int | None = None) -> np.ndarray:
    """Zero-padded pilot of shape ``(rf_chains, n_symbols + taps)``.

    Layout: ``taps`` leading zeros, ``n_ones`` training symbols (default
    ``min(taps, n_symbols)``), zeros to the end.  With one RF chain the
    symbols are all ones; with several, the first ``rf_chains`` rows of a
    Hadamard matrix of order ``n_ones`` scaled by ``1/sqrt(rf_chains)``.
    """
    n_ones = min(taps, n_symbols) if n_ones is None else n_ones
    if n_ones < 1 or n_ones > n_symbols:
        raise ConfigError(f"pilot needs 1 <= n_ones <= Q, got n_ones={n_ones}, Q={n_symbols}")
    pilot = np.zeros((rf_chains, n_symbols + taps), dtype=np.complex128)
    if rf_chains == 1:
        body = np.ones((1, n_ones))
    else:
        if n_ones & (n_ones - 1) or rf_chains > n_ones:
            raise ConfigError("hybrid pilots need a power-of-two symbol count >= the RF chain count")
        body = scipy.linalg.hadamard(n_ones)[:rf_chains] / np.sqrt(rf_chains)
    pilot[:, taps:taps + n_ones] = body
    return pilot


def build_training_dft(
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    rf_chains_rx: int,
    n_symbols: int,
    taps: int,
    *,
    rf_chains_tx: int = 1,
    sampling_time: float = 1.0,
    tx_power: float = 1.0,
    noise_var: float = 0.0,
    pilot: np.ndarray | None = None,
) -> TrainingSet:
    """Exhaustive DFT training: every device precoder against every AP combiner block.

    Device precoders are ``rf_chains_tx``-column blocks of the device's
    ``DFT(N_T^x) kron DFT(N_T^y)``; AP combiners are ``rf_chains_rx``-column
    blocks of its own planar DFT.  Digital stages are identities.  Frame
    ``m = p * n_blocks + b`` pairs precoder ``p`` with combiner block ``b``.
    """
    if rx.size % rf_chains_rx:
        raise ConfigError(f"M_R={rf_chains_rx} does not divide the AP array size {rx.size}")
    if tx.size % rf_chains_tx:
        raise ConfigError(f"M_T={rf_chains_tx} does not divide the device array size {tx.size}")
    f_all = planar_dft(tx)
    w_all = planar_dft(rx)
    n_pre = tx.size // rf_chains_tx
    n_comb = rx.size // rf_chains_rx
    pre = f_all.reshape(tx.size, n_pre, rf_chains_tx).transpose(1, 0, 2)
    comb = w_all.reshape(rx.size, n_comb, rf_chains_rx).transpose(1, 0, 2)
    f_rf = np.repeat(pre, n_comb, axis=0)
    w_rf = np.tile(comb, (n_pre, 1, 1))
    m = n_pre * n_comb
    if pilot is None:
        pilot = build_pilot(n_symbols, taps, rf_chains_tx)
    return TrainingSet(
        tx, rx, f_rf, np.broadcast_to(np.eye(rf_chains_tx, dtype=np.complex128), (m, rf_chains_tx, rf_chains_tx)).copy(),
        w_rf, np.broadcast_to(np.eye(rf_chains_rx, dtype=np.complex128), (m, rf_chains_rx, rf_chains_rx)).copy(),
        np.asarray(pilot, dtype=np.complex128), n_symbols, taps, sampling_time, tx_power, noise_var,
    )


def _shifted_pilot(training: TrainingSet, sent: np.ndarray | None = None) -> np.ndarray:
    """``X[.., q, d] = sent[.., q + D - 1 - d]``: the symbol hitting tap d at output q."""
    sent = training.pilot if sent is None else sent
    q = np.arange(training.n_symbols)[:, None]
    d = np.arange(training.taps)[None, :]
    return sent[..., q + training.taps - 1 - d]


def frame_rng(seed: int, frame: int) -> np.random.Generator:
    """Independent, reproducible noise stream for one training frame."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(frame)]))


def synthesize_measurements(taps: np.ndarray, training: TrainingSet, noise_seed: int = 0) -> np.ndarray:
    """Received training signals, shape ``(M, M_R, Q)``.

    ``Y_m[:, q] = sqrt(P_t) sum_d W_m^H H_d F_m S[:, q + D - 1 - d] + W_m^H N_m[:, q]``
    with ``N_m`` i.i.d. circular Gaussian of variance ``noise_var`` at the
    antennas, drawn from a per-frame stream derived from ``(noise_seed, m)``.
    """
    h = np.asarray(taps, dtype=np.complex128)
    if h.shape != (training.taps, training.rx.size, training.tx.size):
        raise DimensionError(
            f"taps have shape {h.shape}, expected {(training.taps, training.rx.size, training.tx.size)}"
        )
    w = training.combiners
    f = training.precoders
    shifted = _shifted_pilot(training)  # (M_T, Q, D)
    amp = np.sqrt(training.tx_power)
    out = np.empty((training.n_frames, training.rf_chains_rx, training.n_symbols), dtype=np.complex128)
    for m in range(training.n_frames):
        eff = np.einsum("ri,dij,jt->drt", w[m].conj().T, h, f[m])
        out[m] = amp * np.einsum("drt,tqd->rq", eff, shifted)
        if training.noise_var > 0:
            rng = frame_rng(noise_seed, m)
            shape = (training.rx.size, training.n_symbols)
            noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            out[m] += w[m].conj().T @ (np.sqrt(training.noise_var / 2) * noise)
    return out


def whiten(received: np.ndarray, combiner: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Whiten one frame with the Cholesky factor of ``W^H W``.

    Returns ``(L^-1 Y, W L^-H)``; the new combiner has orthonormal columns.
    """
    w = np.asarray(combiner, dtype=np.complex128)
    if np.linalg.matrix_rank(w) < w.shape[1]:
        raise DecompositionError("combiner is rank deficient; its noise covariance is singular")
    try:
        chol = np.linalg.cholesky(w.conj().T @ w)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc
    y_w = scipy.linalg.solve_triangular(chol, received, lower=True)
    w_w = scipy.linalg.solve_triangular(chol, w.conj().T, lower=True).conj().T
    return y_w, w_w


def whiten_frames(received: np.ndarray, training: TrainingSet) -> tuple[np.ndarray, np.ndarray]:
    w = training.combiners
    y_out = np.empty_like(received)
    w_out = np.empty_like(w)
    for m in range(training.n_frames):
        y_out[m], w_out[m] = whiten(received[m], w[m])
    return y_out, w_out


@dataclass(frozen=True)
class FrameSeparableTensor:
    """Measurement tensor stored as per-frame receive and transmit factors.

    ``rx_part[m, iR, m_R] = conj(W'_m)[iR, m_R]`` and
    ``tx_part[m, iT, q, d] = (F_m S)[iT, q + D - 1 - d]``; an entry of the
    full tensor is the product of the two.
    """

    rx_part: np.ndarray
    tx_part: np.ndarray
    rx: ArrayGeometry
    tx: ArrayGeometry
    shape: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        m, n_r, m_r = self.rx_part.shape
        m2, n_t, q, d = self.tx_part.shape
        if m != m2 or n_r != self.rx.size or n_t != self.tx.size:
            raise DimensionError("receive and transmit factors do not describe the same frames/arrays")
        object.__setattr__(
            self, "shape", (m * m_r * q, self.rx.nx, self.rx.ny, self.tx.nx, self.tx.ny, d)
        )

    @property
    def ndim(self) -> int:
        return 6

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=object))

    def _parts(self):
        m, _, m_r = self.rx_part.shape
        _, _, q, d = self.tx_part.shape
        r = self.rx_part.reshape(m, self.rx.nx, self.rx.ny, m_r)
        t = self.tx_part.reshape(m, self.tx.nx, self.tx.ny, q, d)
        return r, t

    def to_dense(self, max_entries: int = KRON_MAX_ENTRIES) -> np.ndarray:
        if self.size > max_entries:
            raise ResourceError(f"dense measurement tensor of {self.size} entries exceeds cap {max_entries}")
        full = np.einsum("mir,mtqd->mrqitd", self.rx_part, self.tx_part)
        return full.reshape(self.shape)

    def project(self, residual: np.ndarray) -> np.ndarray:
        m, n_r, m_r = self.rx_part.shape
        _, n_t, q, d = self.tx_part.shape
        n_m = residual.shape[1]
        r = residual.reshape(m, m_r, q, n_m).conj()
        x = np.einsum("mir,mrqn->nimq", self.rx_part, r).reshape(n_m * n_r, m * q)
        g = self.tx_part.transpose(0, 2, 1, 3).reshape(m * q, n_t * d)
        return (x @ g).reshape((n_m,) + self.shape[1:])

    def contract_full(self, vectors: Sequence[np.ndarray]) -> np.ndarray:
        for k, v in enumerate(vectors):
            if v.shape != (self.shape[k + 1],):
                raise DimensionError(f"axis {k + 1}: expected length {self.shape[k + 1]}, got {v.shape}")
        v_r = np.kron(vectors[0], vectors[1])
        v_t = np.kron(vectors[2], vectors[3])
        rpart = np.einsum("mir,i->mr", self.rx_part, v_r)
        tpart = np.einsum("mtqd,t->mqd", self.tx_part, v_t) @ vectors[4]
        return (rpart[:, :, None] * tpart[:, None, :]).reshape(-1)

    def contraction_energy(
        self, axis: int, atoms: np.ndarray, fixed: Mapping[int, np.ndarray]
    ) -> np.ndarray:
        r, t = self._parts()
        # tensor axis -> (factor, position inside that factor)
        where = {1: (0, 1), 2: (0, 2), 3: (1, 1), 4: (1, 2), 5: (1, 4)}
        parts = [r, t]
        positions = [[1, 2, 3], [1, 2, 3, 4]]
        target = where[axis]
        for ax in sorted(fixed, key=lambda a: where[a][1], reverse=True):
            part, pos = where[ax]
            parts[part] = np.tensordot(parts[part], fixed[ax], axes=([pos], [0]))
            if part == target[0] and pos < target[1]:
                target = (target[0], target[1] - 1)
        sweep = parts[target[0]]
        other = parts[1 - target[0]]
        n_frames = sweep.shape[0]
        n_in = atoms.shape[0]
        e_other = (other.real**2 + other.imag**2).reshape(n_frames, -1).sum(axis=1)
        # sum_m e_m ||X_m a||^2 = a^H (sum_m e_m X_m^H X_m) a; avoids a
        # frames x rows x atoms intermediate when dictionaries are large
        weighted = np.moveaxis(sweep, target[1], -1).reshape(n_frames, -1, n_in)
        weighted = (weighted * np.sqrt(e_other)[:, None, None]).reshape(-1, n_in)
        gram = weighted.conj().T @ weighted
        quad = np.einsum("ij,ij->j", atoms.conj(), gram @ atoms)
        return np.maximum(quad.real, 0.0)


@dataclass(frozen=True)
class MeasurementSet:
    """Stacked whitened observation (column vector) and its measurement tensor."""

    observation: np.ndarray | None
    tensor: FrameSeparableTensor


def build_measurement_tensor(
    training: TrainingSet,
    whitened_combiners: np.ndarray,
    whitened_received: np.ndarray | None = None,
) -> MeasurementSet:
    """Assemble the measurement tensor (and observation, if given) from whitened frames."""
    w = np.asarray(whitened_combiners, dtype=np.complex128)
    expected = (training.n_frames, training.rx.size, training.rf_chains_rx)
    if w.shape != expected:
        raise DimensionError(f"whitened combiners have shape {w.shape}, expected {expected}")
    sent = training.precoders @ training.pilot  # (M, N_T, Q + D)
    tx_part = _shifted_pilot(training, sent)  # (M, N_T, Q, D)
    tensor = FrameSeparableTensor(w.conj(), np.ascontiguousarray(tx_part), training.rx, training.tx)
    obs = None
    if whitened_received is not None:
        y = np.asarray(whitened_received, dtype=np.complex128)
        if y.shape != (training.n_frames, training.rf_chains_rx, training.n_symbols):
            raise DimensionError(f"whitened observations have shape {y.shape}")
        obs = y.reshape(-1, 1)
    return MeasurementSet(obs, tensor)


def measure(taps: np.ndarray, training: TrainingSet, noise_seed: int = 0) -> MeasurementSet:
    """Synthesize, whiten and stack one full training session."""
    received = synthesize_measurements(taps, training, noise_seed)
    y_w, w_w = whiten_frames(received, training)
    return build_measurement_tensor(training, w_w, y_w)
