"""Propagation-path records shared by the channel, scenario and locate modules.

Ground-truth paths serialize to a whitespace-separated text format, one path
per line::

    re_gain im_gain doa_x doa_y doa_z dod_x dod_y dod_z delay_s

Lines starting with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from momp.errors import DomainError

UNIT_TOL = 1e-12


def _unit(v, name: str, tol: float) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise DomainError(f"{name} must be a unit vector, got norm {np.linalg.norm(v)!r}")
    return v


@dataclass(frozen=True)
class PathParams:
    """One geometric path: complex gain, arrival/departure directions, absolute delay."""

    gain: complex
    doa: np.ndarray
    dod: np.ndarray
    delay: float

    def __post_init__(self):
        object.__setattr__(self, "gain", complex(self.gain))
        object.__setattr__(self, "doa", _unit(self.doa, "doa", UNIT_TOL))
        object.__setattr__(self, "dod", _unit(self.dod, "dod", UNIT_TOL))
        if not self.delay >= 0:
            raise DomainError(f"delay must be nonnegative, got {self.delay!r}")
        object.__setattr__(self, "delay", float(self.delay))


@dataclass(frozen=True)
class PathEstimate:
    """A recovered path; delays are relative to the unknown clock offset."""

    doa: np.ndarray
    dod: np.ndarray
    relative_delay: float
    gain: complex = 0.0
    valid: bool = True

    @property
    def magnitude(self) -> float:
        return abs(self.gain)

    @classmethod
    def from_params(cls, p: PathParams, tau0: float) -> "PathEstimate":
        return cls(p.doa.copy(), p.dod.copy(), p.delay - tau0, p.gain)


class PathClass(enum.Enum):
    LINE_OF_SIGHT = "los"
    WALL = "wall"
    FLOOR_CEILING = "floor_ceiling"
    SPURIOUS = "spurious"


def format_path(p: PathParams) -> str:
    fields = [p.gain.real, p.gain.imag, *p.doa, *p.dod, p.delay]
    return " ".join(repr(float(x)) for x in fields)


def _renormalize(v) -> np.ndarray:
    # hand-written files carry few digits; files we wrote round-trip untouched
    v = np.array(v, dtype=float)
    norm = math.sqrt(float(v @ v))
    return v if abs(norm - 1.0) <= UNIT_TOL else v / norm


def parse_path(line: str) -> PathParams:
    parts = line.split()
    if len(parts) != 9:
        raise ValueError(f"expected 9 fields per path record, got {len(parts)}: {line!r}")
    v = [float(x) for x in parts]
    return PathParams(complex(v[0], v[1]), _renormalize(v[2:5]), _renormalize(v[5:8]), v[8])


def write_paths(path: str | Path, paths: Iterable[PathParams]) -> None:
    lines = ["# re_gain im_gain doa_x doa_y doa_z dod_x dod_y dod_z delay_s"]
    lines += [format_path(p) for p in paths]
    Path(path).write_text("\n".join(lines) + "\n")


def read_paths(path: str | Path) -> list[PathParams]:
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(parse_path(line))
    return out
