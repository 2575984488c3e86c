"""Single-anchor localization from estimated paths.

The strongest path is taken as line of sight.  Each other path is
classified by comparing its arrival and departure angles; wall and
floor/ceiling reflections each give one linear equation in the receiver
clock offset ``tau0`` (a wall bounce preserves vertical travel distance, a
floor/ceiling bounce preserves horizontal travel distance).  With ``tau0``
known, the LoS range places the user.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from momp.errors import ConfigError, NoDetectionError
from momp.paths import PathClass, PathEstimate
from momp.units import SPEED_OF_LIGHT

logger = logging.getLogger(__name__)

#: Rows whose ``tau0`` coefficient is smaller than this are dropped.
DEGENERATE_ROW_TOL = 1e-9


@dataclass(frozen=True)
class ClassifierThresholds:
    """``r_el`` bounds the elevation mismatch, ``r_az`` the azimuth mismatch."""

    r_az: float = 0.1
    r_el: float = 0.05

    def __post_init__(self):
        if not 0 < self.r_az < 2:
            raise ConfigError(f"r_az must lie in (0, 2), got {self.r_az!r}")
        if not 0 < self.r_el < 1:
            raise ConfigError(f"r_el must lie in (0, 1), got {self.r_el!r}")


class FixStatus(enum.Enum):
    LOCATED = "located"
    NO_DETECTION = "no_detection"


@dataclass
class LocationFix:
    status: FixStatus
    position: np.ndarray | None = None
    tau0: float | None = None
    used_paths: dict[PathClass, int] = field(default_factory=dict)
    classes: list[PathClass] = field(default_factory=list)
    reason: str = ""

    @property
    def located(self) -> bool:
        return self.status is FixStatus.LOCATED


def azimuth_elevation(v: np.ndarray) -> tuple[float, float]:
    az = math.atan2(v[1], v[0])
    el = math.asin(max(-1.0, min(1.0, float(v[2]))))
    return az, el


def classify_path(p: PathEstimate, th: ClassifierThresholds | None = None) -> PathClass:
    """Class of a path from the agreement of its arrival and departure angles.

    A LoS ray leaves the user in exactly the opposite direction it reaches
    the anchor; a wall bounce flips only the horizontal heading, a
    floor/ceiling bounce only the vertical one.
    """
    th = th or ClassifierThresholds()
    t_az, t_el = azimuth_elevation(p.doa)
    f_az, f_el = azimuth_elevation(p.dod)
    opposite_el = abs(math.sin(t_el + f_el)) < th.r_el
    equal_el = abs(math.sin(t_el - f_el)) < th.r_el
    opposite_az = math.cos(t_az - f_az) < th.r_az - 1
    if opposite_el and opposite_az:
        return PathClass.LINE_OF_SIGHT
    if equal_el and opposite_az:
        return PathClass.FLOOR_CEILING
    if opposite_el:
        return PathClass.WALL
    return PathClass.SPURIOUS


class ClockEstimate(NamedTuple):
    tau0: float
    rows_used: int
    rows_dropped: int
    residuals: np.ndarray


def _row(los: PathEstimate, p: PathEstimate, cls: PathClass) -> tuple[float, float]:
    if cls is PathClass.WALL:
        g1, gl = los.doa[2], p.doa[2]
    else:
        g1, gl = math.hypot(los.doa[0], los.doa[1]), math.hypot(p.doa[0], p.doa[1])
    return gl - g1, g1 * los.relative_delay - gl * p.relative_delay


def estimate_clock_offset(
    los: PathEstimate, paths: Sequence[PathEstimate], classes: Sequence[PathClass]
) -> ClockEstimate:
    """Least-squares clock offset from the wall and floor/ceiling paths.

    Other classes are ignored.  Rows with a vanishing coefficient carry no
    information about ``tau0`` and are dropped.

    Raises
    ------
    NoDetectionError
        If no usable row remains.
    """
    if len(paths) != len(classes):
        raise ValueError("one class per path is required")
    rows = [
        _row(los, p, c) for p, c in zip(paths, classes)
        if c in (PathClass.WALL, PathClass.FLOOR_CEILING)
    ]
    usable = [(a, b) for a, b in rows if abs(a) >= DEGENERATE_ROW_TOL]
    dropped = len(rows) - len(usable)
    if dropped:
        logger.debug("dropped %d degenerate ranging rows", dropped)
    if not usable:
        raise NoDetectionError("no wall or floor/ceiling path gives a usable ranging equation")
    a = np.array([r[0] for r in usable])
    b = np.array([r[1] for r in usable])
    tau0 = float(a @ b / (a @ a))
    return ClockEstimate(tau0, len(usable), dropped, a * tau0 - b)


def locate_user(anchor: Sequence[float], los: PathEstimate, tau0: float) -> np.ndarray:
    """``anchor + c * (relative_delay + tau0) * doa``."""
    tau1 = los.relative_delay + tau0
    if not math.isfinite(tau1) or tau1 < 0:
        raise NoDetectionError(f"LoS propagation delay {tau1!r} s is not a valid range")
    return np.asarray(anchor, dtype=float) + SPEED_OF_LIGHT * tau1 * np.asarray(los.doa, dtype=float)


def localize(
    paths: Sequence[PathEstimate],
    anchor: Sequence[float],
    th: ClassifierThresholds | None = None,
) -> LocationFix:
    """Classify, range and place the user; never raises on a bad path set."""
    th = th or ClassifierThresholds()
    usable = sorted((p for p in paths if p.valid), key=lambda p: -p.magnitude)
    if len(usable) < 2:
        return LocationFix(FixStatus.NO_DETECTION, reason="fewer than two valid paths")
    los, rest = usable[0], usable[1:]
    classes = [classify_path(p, th) for p in usable]
    counts = {c: sum(1 for k in classes[1:] if k is c) for c in PathClass}
    if classes[0] is not PathClass.LINE_OF_SIGHT:
        return LocationFix(FixStatus.NO_DETECTION, used_paths=counts, classes=classes,
                           reason="strongest path fails the line-of-sight test")
    try:
        clock = estimate_clock_offset(los, rest, classes[1:])
        position = locate_user(anchor, los, clock.tau0)
    except NoDetectionError as exc:
        return LocationFix(FixStatus.NO_DETECTION, used_paths=counts, classes=classes, reason=str(exc))
    return LocationFix(FixStatus.LOCATED, position, clock.tau0, counts, classes)
