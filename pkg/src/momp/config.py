"""Experiment configuration: an INI file with one section per concern.

Every key is optional and falls back to the default shown by
``momp presets``.  Vectors are whitespace separated; lists of vectors are
separated by ``;``.  Powers are in dBm, all other quantities in SI units.

``[scenario]``
    ``room`` (Lx Ly Lz), ``anchor`` (x y z), either ``positions`` or
    ``user_start``/``user_stop``/``steps`` for a linear trajectory,
    ``random_positions`` (draw that many users instead),
    ``reflection_loss_db``, ``carrier_hz``, ``second_order``,
    ``delay_margin_s`` (how far into the window the LoS arrives),
    ``surfaces`` (which of wall_x0 wall_x1 wall_y0 wall_y1 floor ceiling
    reflect).
``[arrays]``
    ``tx`` and ``rx`` (nx ny), ``tx_facing`` and ``rx_facing`` (+1/-1).
``[training]``
    ``rf_chains_rx``, ``rf_chains_tx``, ``symbols``, ``taps``,
    ``sampling_time_s``, ``tx_power_dbm``, ``noise_dbm``, ``frames``
    (``all`` or a count drawn from the full DFT set).
``[solver]``
    ``k_res``, ``sparsity``, ``refine_iters``, ``init_mode``,
    ``coarse_init_factor``, ``stop_tol``, ``omp_baseline`` (auto/on/off),
    ``omp_max_entries``.
``[localization]``
    ``r_az``, ``r_el``.
``[sweep]``
    ``tx_power_dbm``, ``k_res``, ``frames``: lists; every combination is
    one sweep point.  An absent axis uses the single base value.
``[output]``
    ``directory``, ``seed``, ``workers``, ``timings`` (write wall times to
    a separate file; off keeps outputs byte-reproducible).
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from momp.errors import ConfigError
from momp.scenario import SURFACES
from momp.units import SPEED_OF_LIGHT


@dataclass(frozen=True)
class ScenarioConfig:
    room: tuple[float, float, float] = (6.0, 8.0, 3.0)
    anchor: tuple[float, float, float] = (3.0, 4.0, 2.5)
    positions: tuple[tuple[float, float, float], ...] = ()
    user_start: tuple[float, float, float] = (1.0, 1.0, 1.3)
    user_stop: tuple[float, float, float] = (5.0, 7.0, 1.3)
    steps: int = 10
    random_positions: int = 0
    reflection_loss_db: float = 6.0
    carrier_hz: float = 60e9
    second_order: bool = False
    delay_margin_s: float = 0.0
    surfaces: tuple[str, ...] = ("wall_x0", "wall_x1", "wall_y0", "wall_y1", "floor", "ceiling")


@dataclass(frozen=True)
class ArrayConfig:
    tx: tuple[int, int] = (4, 4)
    rx: tuple[int, int] = (8, 8)
    tx_facing: int = 1
    rx_facing: int = -1


@dataclass(frozen=True)
class TrainingConfig:
    rf_chains_rx: int = 8
    rf_chains_tx: int = 1
    symbols: int = 96
    taps: int = 64
    sampling_time_s: float = 0.5e-9
    tx_power_dbm: float = 20.0
    noise_dbm: float = -81.0
    frames: int | None = None


@dataclass(frozen=True)
class SolverSection:
    k_res: float = 16.0
    sparsity: int = 5
    refine_iters: int = 3
    init_mode: str = "full"
    coarse_init_factor: float = 1.0
    stop_tol: float = 0.0
    omp_baseline: str = "auto"
    omp_max_entries: int = 2**26


@dataclass(frozen=True)
class LocalizationConfig:
    r_az: float = 0.1
    r_el: float = 0.05


@dataclass(frozen=True)
class SweepConfig:
    tx_power_dbm: tuple[float, ...] = ()
    k_res: tuple[float, ...] = ()
    frames: tuple[int, ...] = ()


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    seed: int = 0
    workers: int = 1
    timings: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    localization: LocalizationConfig = field(default_factory=LocalizationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def sweep_points(self) -> list[dict]:
        """Every combination of the sweep axes, in a fixed order."""
        powers = self.sweep.tx_power_dbm or (self.training.tx_power_dbm,)
        k_values = self.sweep.k_res or (self.solver.k_res,)
        frames = self.sweep.frames or (self.training.frames,)
        return [
            {"tx_power_dbm": p, "k_res": k, "frames": f}
            for p in powers for k in k_values for f in frames
        ]


_SECTION_TYPES = {
    "scenario": ScenarioConfig, "arrays": ArrayConfig, "training": TrainingConfig,
    "solver": SolverSection, "localization": LocalizationConfig, "sweep": SweepConfig,
    "output": OutputConfig,
}


def _vector(text: str, n: int | None, cast=float) -> tuple:
    parts = text.replace(",", " ").split()
    if n is not None and len(parts) != n:
        raise ValueError(f"expected {n} values, got {len(parts)}")
    return tuple(cast(p) for p in parts)


def _parse_value(name: str, default, text: str):
    text = text.strip()
    if name == "frames" and isinstance(default, (int, type(None))):
        return None if text.lower() == "all" else int(text)
    if name == "positions":
        return tuple(_vector(chunk, 3) for chunk in text.split(";") if chunk.strip())
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "yes", "1", "on")
    if isinstance(default, tuple):
        if name == "surfaces":
            return tuple(text.replace(",", " ").split())
        if name in ("frames",):
            return _vector(text, None, int)
        if name in ("tx", "rx"):
            return _vector(text, 2, int)
        return _vector(text, len(default) if default else None, float)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _build_section(cls, items: dict[str, str], section: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for key, text in items.items():
        if key not in known:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            kwargs[key] = _parse_value(key, getattr(defaults, key), text)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sections = {}
    for name in parser.sections():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown section [{name}]")
        sections[name] = _build_section(_SECTION_TYPES[name], dict(parser[name]), name)
    cfg = ExperimentConfig(**sections)
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text())


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks that a single key cannot express."""
    sc, ar, tr, so = cfg.scenario, cfg.arrays, cfg.training, cfg.solver
    if min(sc.room) <= 0:
        raise ConfigError("room extents must be positive")
    bad = set(sc.surfaces) - set(SURFACES)
    if bad:
        raise ConfigError(f"unknown surfaces {sorted(bad)}")
    if sc.steps < 1 or sc.random_positions < 0:
        raise ConfigError("steps must be >= 1 and random_positions >= 0")
    if min(*ar.tx, *ar.rx) < 1 or ar.tx_facing not in (1, -1) or ar.rx_facing not in (1, -1):
        raise ConfigError("arrays need positive sizes and facing +1 or -1")
    if (ar.rx[0] * ar.rx[1]) % tr.rf_chains_rx or (ar.tx[0] * ar.tx[1]) % tr.rf_chains_tx:
        raise ConfigError("RF chain counts must divide the array sizes")
    if tr.symbols < 1 or tr.taps < 1 or tr.sampling_time_s <= 0:
        raise ConfigError("symbols, taps and sampling time must be positive")
    for k in cfg.sweep.k_res or (so.k_res,):
        if k < 1:
            raise ConfigError(f"K_res must be >= 1, got {k}")
    n_frames = (ar.tx[0] * ar.tx[1] // tr.rf_chains_tx) * (ar.rx[0] * ar.rx[1] // tr.rf_chains_rx)
    for f in cfg.sweep.frames or (tr.frames,):
        if f is not None and not 1 <= f <= n_frames:
            raise ConfigError(f"frame count {f} outside 1..{n_frames}")
    if so.sparsity < 1 or so.refine_iters < 0 or not 0 < so.coarse_init_factor <= 1 or so.stop_tol < 0:
        raise ConfigError("invalid solver settings")
    if so.init_mode not in ("full", "numerator_only"):
        raise ConfigError(f"unknown init_mode {so.init_mode!r}")
    if so.omp_baseline not in ("auto", "on", "off"):
        raise ConfigError("omp_baseline must be auto, on or off")
    loc = cfg.localization
    if not (0 < loc.r_az < 2 and 0 < loc.r_el < 1):
        raise ConfigError("thresholds need 0 < r_az < 2 and 0 < r_el < 1")
    if cfg.output.workers < 1:
        raise ConfigError("workers must be >= 1")


def user_positions(cfg: ExperimentConfig) -> np.ndarray:
    """The user positions of the experiment, one row each."""
    sc = cfg.scenario
    if sc.positions:
        return np.array(sc.positions, dtype=float)
    if sc.random_positions:
        rng = np.random.default_rng([cfg.output.seed, 0xC0FFEE])
        room = np.array(sc.room)
        return rng.uniform(0.1, room - 0.1, size=(sc.random_positions, 3))
    return np.linspace(np.array(sc.user_start), np.array(sc.user_stop), sc.steps)


def to_ini(cfg: ExperimentConfig) -> str:
    """Render a configuration in the format :func:`parse_config` reads."""

    def fmt(v) -> str:
        if v is None:
            return "all"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            if v and isinstance(v[0], tuple):
                return "; ".join(fmt(x) for x in v)
            return " ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    lines = []
    for section in _SECTION_TYPES:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple) and not value:
                continue
            lines.append(f"{f.name} = {fmt(value)}")
        lines.append("")
    return "\n".join(lines)


def tiny_preset() -> ExperimentConfig:
    """Noiseless 2x2/4x4 LoS + one wall bounce, every parameter on the K_res=4 grid."""
    # LoS leaves the user at x cosine -1/2, the wall_x0 bounce at -3/4; both
    # are on the 2x2 device grid (step 1/4) and the 4x4 AP grid (step 1/8).
    # The sampling time makes the excess wall delay exactly one tap.
    drop = math.sqrt(3.0)  # anchor-user height difference for a 1 m offset
    wall_len = drop / math.sqrt(1 - 0.75**2)
    sum_x = 0.75 * wall_len
    anchor_x = (sum_x - 1.0) / 2
    anchor = (anchor_x, 1.0, 2.5)
    user = (anchor_x + 1.0, 1.0, 2.5 - drop)
    return ExperimentConfig(
        scenario=ScenarioConfig(room=(3.0, 2.0, 3.0), anchor=anchor, positions=(user,),
                                surfaces=("wall_x0",)),
        arrays=ArrayConfig(tx=(2, 2), rx=(4, 4)),
        training=TrainingConfig(rf_chains_rx=4, symbols=12, taps=8,
                                sampling_time_s=(wall_len - 2.0) / SPEED_OF_LIGHT,
                                tx_power_dbm=20.0, noise_dbm=float("-inf")),
        solver=SolverSection(k_res=4.0, sparsity=2),
        output=OutputConfig(directory="results-tiny"),
    )


def full_scale_preset() -> ExperimentConfig:
    """4x4 device, 8x8 AP with 8 RF chains, 128 DFT frames, 64 taps, 20 dBm / -81 dBm."""
    return ExperimentConfig(sweep=SweepConfig(k_res=(16.0, 128.0, 1024.0)))


PRESETS = {"tiny": tiny_preset, "full_scale": full_scale_preset}
