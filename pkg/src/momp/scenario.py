"""Synthetic indoor ground truth: an empty axis-aligned room and image-method paths.

The anchor (access point) and the user share the room's axes; directions of
arrival are expressed at the anchor and directions of departure at the user.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from momp.errors import ConfigError
from momp.paths import PathClass, PathParams
from momp.units import SPEED_OF_LIGHT

#: Reflecting surfaces of the box as ``name -> (axis, which end)``.
SURFACES = {
    "wall_x0": (0, 0),
    "wall_x1": (0, 1),
    "wall_y0": (1, 0),
    "wall_y1": (1, 1),
    "floor": (2, 0),
    "ceiling": (2, 1),
}


@dataclass(frozen=True)
class Room:
    """Box ``[0, lx] x [0, ly] x [0, lz]`` in meters."""

    lx: float
    ly: float
    lz: float

    def __post_init__(self):
        if min(self.lx, self.ly, self.lz) <= 0:
            raise ConfigError(f"room extents must be positive, got {(self.lx, self.ly, self.lz)}")

    @property
    def extents(self) -> np.ndarray:
        return np.array([self.lx, self.ly, self.lz])

    def plane(self, surface: str) -> tuple[int, float]:
        axis, end = SURFACES[surface]
        return axis, float(self.extents[axis]) * end

    def mirror(self, point: np.ndarray, surface: str) -> np.ndarray:
        axis, value = self.plane(surface)
        out = np.array(point, dtype=float)
        out[axis] = 2.0 * value - out[axis]
        return out

    def contains(self, point: Sequence[float], strict: bool = True) -> bool:
        p = np.asarray(point, dtype=float)
        if strict:
            return bool(np.all(p > 0) and np.all(p < self.extents))
        return bool(np.all(p >= -1e-12) and np.all(p <= self.extents + 1e-12))


@dataclass(frozen=True)
class Placement:
    anchor: np.ndarray
    user: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "anchor", np.asarray(self.anchor, dtype=float).reshape(3))
        object.__setattr__(self, "user", np.asarray(self.user, dtype=float).reshape(3))
        if np.array_equal(self.anchor, self.user):
            raise ConfigError("anchor and user must not coincide")

    def validate(self, room: Room) -> None:
        for name in ("anchor", "user"):
            if not room.contains(getattr(self, name)):
                raise ConfigError(f"{name} {getattr(self, name)} is not strictly inside the room")


@dataclass(frozen=True)
class TracedPath(PathParams):
    """A path plus the ordered surfaces it bounced off (user side first)."""

    surfaces: tuple[str, ...] = field(default=())
    image: np.ndarray | None = None
    bounce_points: tuple[np.ndarray, ...] = ()

    @property
    def length(self) -> float:
        return self.delay * SPEED_OF_LIGHT


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _hit(room: Room, start: np.ndarray, end: np.ndarray, surface: str) -> np.ndarray | None:
    """Where the segment ``start -> end`` crosses ``surface``, if it does."""
    axis, value = room.plane(surface)
    span = end[axis] - start[axis]
    if span == 0:
        return None
    t = (value - start[axis]) / span
    if not 0 < t < 1:
        return None
    point = start + t * (end - start)
    point[axis] = value
    return point if room.contains(point, strict=False) else None


def path_gain(length: float, bounces: int, reflection_loss_db: float, wavelength: float) -> complex:
    """Free-space amplitude, per-bounce loss and propagation phase."""
    amp = wavelength / (4 * math.pi * length) * 10 ** (-bounces * reflection_loss_db / 20)
    return amp * complex(np.exp(-2j * math.pi * length / wavelength))


def _trace(room, placement, surfaces, reflection_loss_db, wavelength) -> TracedPath | None:
    a, u = placement.anchor, placement.user
    images = [u]
    for s in surfaces:
        images.append(room.mirror(images[-1], s))
    # unfold from the anchor side: the last bounce is the one nearest the anchor
    bounces: list[np.ndarray] = []
    start = a
    for s, target in zip(reversed(surfaces), reversed(images[1:])):
        point = _hit(room, start, target, s)
        if point is None:
            return None
        bounces.append(point)
        start = point
    bounces.reverse()
    image = images[-1]
    length = float(np.linalg.norm(image - a))
    first_hop = bounces[0] if bounces else a
    return TracedPath(
        gain=path_gain(length, len(surfaces), reflection_loss_db, wavelength),
        doa=_unit(image - a),
        dod=_unit(first_hop - u),
        delay=length / SPEED_OF_LIGHT,
        surfaces=tuple(surfaces),
        image=image,
        bounce_points=tuple(bounces),
    )


def trace_paths(
    room: Room,
    placement: Placement,
    reflection_loss_db: float = 6.0,
    carrier_hz: float = 60e9,
    second_order: bool = False,
    surfaces: Sequence[str] | None = None,
) -> list[TracedPath]:
    """LoS plus the six first-order reflections, optionally second-order ones.

    ``surfaces`` restricts which faces reflect (default: all six, in
    :data:`SURFACES` order).  Second-order paths are built for every ordered
    pair of distinct reflecting surfaces whose bounce points lie on the room
    faces; paths sharing an image point are kept once.
    """
    placement.validate(room)
    active = list(SURFACES) if surfaces is None else [s for s in SURFACES if s in surfaces]
    unknown = set(surfaces or ()) - set(SURFACES)
    if unknown:
        raise ConfigError(f"unknown surfaces {sorted(unknown)}; choose from {list(SURFACES)}")
    wavelength = SPEED_OF_LIGHT / carrier_hz
    out = [_trace(room, placement, (), reflection_loss_db, wavelength)]
    out += [_trace(room, placement, (s,), reflection_loss_db, wavelength) for s in active]
    if second_order:
        seen: list[np.ndarray] = []
        for pair in itertools.permutations(active, 2):
            path = _trace(room, placement, pair, reflection_loss_db, wavelength)
            if path is None or any(np.allclose(path.image, s, atol=1e-12) for s in seen):
                continue
            seen.append(path.image)
            out.append(path)
    return out


def ground_truth_classes(paths: Sequence[TracedPath]) -> list[PathClass]:
    """Class of each traced path, known from how it was generated."""
    classes = []
    for p in paths:
        if not p.surfaces:
            classes.append(PathClass.LINE_OF_SIGHT)
        elif len(p.surfaces) > 1:
            classes.append(PathClass.SPURIOUS)
        elif p.surfaces[0] in ("floor", "ceiling"):
            classes.append(PathClass.FLOOR_CEILING)
        else:
            classes.append(PathClass.WALL)
    return classes


def clock_offset(paths: Sequence[PathParams], margin: float = 0.0) -> float:
    """Receiver clock offset placing the LoS arrival ``margin`` seconds into the window."""
    return min(p.delay for p in paths) - margin


def random_placement(room: Room, rng: np.random.Generator, clearance: float = 0.1) -> Placement:
    """Anchor and user drawn uniformly from the room shrunk by ``clearance``."""
    lo = np.full(3, clearance)
    hi = room.extents - clearance
    return Placement(rng.uniform(lo, hi), rng.uniform(lo, hi))


def linear_trajectory(start: Sequence[float], stop: Sequence[float], steps: int) -> np.ndarray:
    """``steps`` equally spaced positions from ``start`` to ``stop`` inclusive."""
    if steps < 1:
        raise ConfigError("a trajectory needs at least one position")
    return np.linspace(np.asarray(start, float), np.asarray(stop, float), steps)
