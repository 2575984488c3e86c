"""Error measures used to score an estimation run."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from momp.errors import DomainError

#: Reported in place of ``-inf`` when an estimate is exact.
NMSE_FLOOR_DB = -300.0


def angular_error(true_dir: Sequence[float], est_dir: Sequence[float]) -> float:
    """Angle in radians between two unit vectors."""
    dot = float(np.dot(np.asarray(true_dir, float), np.asarray(est_dir, float)))
    return math.acos(max(-1.0, min(1.0, dot)))


def nmse_db(true_taps: np.ndarray, est_taps: np.ndarray) -> float:
    """``10 log10(sum ||H_hat - H||^2 / sum ||H||^2)``, floored at :data:`NMSE_FLOOR_DB`."""
    h = np.asarray(true_taps)
    h_hat = np.asarray(est_taps)
    if h.shape != h_hat.shape:
        raise DomainError(f"tap shapes differ: {h.shape} vs {h_hat.shape}")
    ref = float(np.sum(np.abs(h) ** 2))
    if ref == 0:
        raise DomainError("NMSE is undefined for an all-zero true channel")
    ratio = float(np.sum(np.abs(h_hat - h) ** 2)) / ref
    if ratio == 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, 10 * math.log10(ratio))


def secondary_delay_error(true_tau2: float, est_relative_delays: Sequence[float], true_tau1: float) -> float:
    """Distance from the true second-path delay to the nearest estimated delay.

    Estimated delays are relative; they are made absolute by assuming the
    first (strongest) estimate is the true main path.
    """
    rel = list(est_relative_delays)
    if not rel:
        raise DomainError("at least one estimated path is required")
    tau0 = true_tau1 - rel[0]
    return min(abs(true_tau2 - (r + tau0)) for r in rel)
