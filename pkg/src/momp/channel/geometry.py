"""Array steering vectors, band-limited time responses and channel taps."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from momp.errors import ConfigError, DomainError
from momp.paths import PathParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform rectangular array with half-wavelength spacing.

    Element ``(a, b)`` (0-based) sits at ``lambda/2 * (a, b, 0)`` and has
    flat index ``a * ny + b``.  A planar array cannot tell the two sides of
    its plane apart; ``facing`` (+1 or -1) is the sign of the z component
    assumed when a direction is rebuilt from its x and y cosines.
    """

    nx: int
    ny: int
    facing: int = 1

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"array needs at least one element per axis, got {self.nx}x{self.ny}")
        if self.facing not in (1, -1):
            raise ConfigError(f"facing must be +1 or -1, got {self.facing!r}")

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def element_positions(self, wavelength: float) -> np.ndarray:
        a, b = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        pos = np.stack([a.ravel(), b.ravel(), np.zeros(self.size)], axis=1)
        return 0.5 * wavelength * pos


def partial_steering(n: int, cosine: float | np.ndarray) -> np.ndarray:
    """``exp(-j pi (n' - 1) d)`` for n' = 1..n; one column per cosine if ``d`` is an array."""
    phase = np.multiply.outer(np.arange(n), np.asarray(cosine, dtype=float))
    return np.exp(-1j * np.pi * phase)


def steering(array: ArrayGeometry, direction: Sequence[float]) -> np.ndarray:
    """Steering vector ``a^x(d_x) kron a^y(d_y)`` toward a unit direction."""
    d = np.asarray(direction, dtype=float).reshape(3)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise DomainError(f"direction must be a unit vector, got norm {np.linalg.norm(d)!r}")
    return np.kron(partial_steering(array.nx, d[0]), partial_steering(array.ny, d[1]))


def time_response(delta_tau: float, taps: int, sampling_time: float) -> np.ndarray:
    """Sampled sinc pulse ``p((d - 1) T_s - delta_tau)`` for d = 1..taps."""
    if taps < 1 or sampling_time <= 0:
        raise ConfigError("need taps >= 1 and a positive sampling time")
    t = np.arange(taps) - delta_tau / sampling_time
    return np.sinc(t).astype(np.complex128)


def channel_taps(
    paths: Sequence[PathParams],
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    taps: int,
    sampling_time: float,
    tau0: float,
) -> np.ndarray:
    """Delay-tap channel matrices, shape ``(taps, rx.size, tx.size)``.

    ``H[d] = sum_l gain_l a_R(doa_l) a_T(dod_l)^H p(d T_s + tau0 - delay_l)``.
    """
    h = np.zeros((taps, rx.size, tx.size), dtype=np.complex128)
    window = taps * sampling_time
    for p in paths:
        rel = p.delay - tau0
        if not 0 <= rel < window:
            logger.warning(
                "path with relative delay %.3e s lies outside the %d-tap window; energy is truncated",
                rel, taps,
            )
        spatial = np.outer(steering(rx, p.doa), steering(tx, p.dod).conj())
        h += p.gain * time_response(rel, taps, sampling_time)[:, None, None] * spatial[None]
    return h
