"""Batch experiment: scenario -> channel -> MOMP -> localization -> CSV tables.

Output layout (under ``output.directory``)::

    sweep_points.csv            one row per sweep point and its parameters
    metrics_point_NNN.csv       per-position error metrics
    locations_point_NNN.csv     per-position localization records
    summary.csv                 percentiles of every metric per sweep point
    ground_truth/pos_NNNN.txt   traced paths of every user position
    timings.csv                 wall times (only with output.timings)

Floats are written with :func:`repr`, so a rerun with the same configuration
produces byte-identical files.  Missing values are written as ``nan``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from momp.channel import (
    ArrayGeometry,
    build_dictionaries,
    build_training_dft,
    channel_taps,
    extract_paths,
    measure,
    reconstruct_taps,
)
from momp.config import ExperimentConfig, user_positions, validate
from momp.errors import ConfigError, MompError
from momp.locate import ClassifierThresholds, localize
from momp.metrics import angular_error, nmse_db, secondary_delay_error
from momp.paths import PathClass, write_paths
from momp.scenario import Placement, Room, clock_offset, trace_paths
from momp.solver import SolverConfig, SparseProblem, flatten_problem, momp_solve, omp_solve
from momp.units import dbm_to_watts

logger = logging.getLogger(__name__)

PERCENTILES = (10, 25, 50, 75, 90)
METRIC_COLUMNS = (
    "doa_error_rad",
    "dod_error_rad",
    "nmse_db",
    "secondary_delay_error_s",
    "localization_error_m",
    "omp_doa_error_rad",
    "omp_nmse_db",
)
LOCATION_COLUMNS = (
    "position_id", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z",
    "tau0_est_s", "status", "n_wall", "n_floorceil", "n_spurious",
)


class ExperimentError(MompError):
    """A user position could not be simulated."""


@dataclass
class PositionResult:
    position_id: int
    metrics: dict[str, float]
    detected: bool
    n_paths: int
    location: dict[str, object]
    wall_time_s: float


@dataclass
class ExperimentResult:
    directory: Path
    points: list[dict]
    results: list[list[PositionResult]] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "nan"
    return str(v)


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _frame_subset(n_total: int, n_keep: int | None, seed: int) -> np.ndarray | None:
    if n_keep is None or n_keep >= n_total:
        return None
    rng = np.random.default_rng([seed, 1, n_keep])
    return np.sort(rng.choice(n_total, size=n_keep, replace=False))


def _noise_seed(seed: int, position_id: int, point_id: int) -> int:
    return int(np.random.SeedSequence([seed, position_id, point_id]).generate_state(1)[0])


class _PointContext:
    """Objects shared by every position of one sweep point."""

    def __init__(self, cfg: ExperimentConfig, point: dict, point_id: int):
        ar, tr, so = cfg.arrays, cfg.training, cfg.solver
        self.cfg = cfg
        self.point_id = point_id
        self.tx = ArrayGeometry(*ar.tx, facing=ar.tx_facing)
        self.rx = ArrayGeometry(*ar.rx, facing=ar.rx_facing)
        power = dbm_to_watts(point["tx_power_dbm"])
        self.gain_scale = math.sqrt(power)
        training = build_training_dft(
            self.tx, self.rx, tr.rf_chains_rx, tr.symbols, tr.taps,
            rf_chains_tx=tr.rf_chains_tx, sampling_time=tr.sampling_time_s,
            tx_power=power, noise_var=dbm_to_watts(tr.noise_dbm),
        )
        subset = _frame_subset(training.n_frames, point["frames"], cfg.output.seed)
        self.training = training if subset is None else training.subset(subset)
        self.dicts = build_dictionaries(point["k_res"], self.tx, self.rx, tr.taps, tr.sampling_time_s)
        self.solver = SolverConfig(
            sparsity=so.sparsity, refine_iters=so.refine_iters, init_mode=so.init_mode,
            coarse_init_factor=so.coarse_init_factor, stop_tol=so.stop_tol,
        )
        self.thresholds = ClassifierThresholds(cfg.localization.r_az, cfg.localization.r_el)
        self.run_omp = self._omp_enabled()

    def _omp_enabled(self) -> bool:
        so = self.cfg.solver
        if so.omp_baseline == "off":
            return False
        n_obs = self.training.n_frames * self.training.rf_chains_rx * self.training.n_symbols
        n_entries = np.prod(self.dicts.atom_sizes, dtype=object)
        n_atoms = np.prod(self.dicts.atom_counts, dtype=object)
        largest = max(n_obs * n_entries, n_entries * n_atoms, n_obs * n_atoms)
        if largest > so.omp_max_entries:
            log = logger.warning if so.omp_baseline == "on" else logger.info
            log("OMP baseline disabled for sweep point %d: flattened problem needs %d entries (cap %d)",
                self.point_id, largest, so.omp_max_entries)
            return False
        return True


def _simulate(ctx: _PointContext, position_id: int, user: np.ndarray) -> PositionResult:
    cfg = ctx.cfg
    sc = cfg.scenario
    start = time.perf_counter()
    room = Room(*sc.room)
    placement = Placement(np.array(sc.anchor), user)
    paths = trace_paths(room, placement, sc.reflection_loss_db, sc.carrier_hz, sc.second_order, sc.surfaces)
    tau0 = clock_offset(paths, sc.delay_margin_s)
    tr = ctx.training
    taps = channel_taps(paths, ctx.tx, ctx.rx, tr.taps, tr.sampling_time, tau0)
    ms = measure(taps, tr, _noise_seed(cfg.output.seed, position_id, ctx.point_id))
    problem = SparseProblem(ms.observation, ms.tensor, ctx.dicts)
    sol = momp_solve(problem, ctx.solver)
    est = extract_paths(sol, ctx.dicts, ctx.tx, ctx.rx, ctx.gain_scale)
    fix = localize(est, sc.anchor, ctx.thresholds)

    by_gain = sorted(paths, key=lambda p: -abs(p.gain))
    los = paths[0]
    m = dict.fromkeys(METRIC_COLUMNS, math.nan)
    if est:
        m["doa_error_rad"] = angular_error(los.doa, est[0].doa)
        m["dod_error_rad"] = angular_error(los.dod, est[0].dod)
        if len(by_gain) > 1:
            m["secondary_delay_error_s"] = secondary_delay_error(
                by_gain[1].delay, [p.relative_delay for p in est], los.delay
            )
    m["nmse_db"] = nmse_db(taps, reconstruct_taps(sol, ctx.dicts, ctx.gain_scale))
    if fix.located:
        m["localization_error_m"] = float(np.linalg.norm(fix.position - user))
    if ctx.run_omp:
        flat_meas, flat_dict = flatten_problem(problem, cfg.solver.omp_max_entries)
        osol = omp_solve(ms.observation, flat_meas, flat_dict, ctx.solver,
                         ctx.dicts.atom_counts, cfg.solver.omp_max_entries)
        oest = extract_paths(osol, ctx.dicts, ctx.tx, ctx.rx, ctx.gain_scale)
        if oest:
            m["omp_doa_error_rad"] = angular_error(los.doa, oest[0].doa)
        m["omp_nmse_db"] = nmse_db(taps, reconstruct_taps(osol, ctx.dicts, ctx.gain_scale))

    est_pos = fix.position if fix.located else (None, None, None)
    location = dict(zip(LOCATION_COLUMNS, (
        position_id, *map(float, user), *(None if v is None else float(v) for v in est_pos),
        fix.tau0, fix.status.value, fix.used_paths.get(PathClass.WALL, 0),
        fix.used_paths.get(PathClass.FLOOR_CEILING, 0), fix.used_paths.get(PathClass.SPURIOUS, 0),
    )))
    return PositionResult(position_id, m, fix.located, len(est), location,
                          time.perf_counter() - start)


def summarize(results: list[PositionResult]) -> tuple[float, dict[str, tuple[int, list[float]]]]:
    """Detection rate and, per metric, the finite-value count and percentiles.

    Percentiles interpolate linearly between closest ranks
    (``numpy.percentile`` with ``method="linear"``); non-finite values are
    excluded.
    """
    detection = sum(r.detected for r in results) / len(results) if results else math.nan
    out = {}
    for col in METRIC_COLUMNS:
        vals = np.array([r.metrics[col] for r in results], dtype=float)
        vals = vals[np.isfinite(vals)]
        if vals.size:
            pct = [float(x) for x in np.percentile(vals, PERCENTILES, method="linear")]
        else:
            pct = [math.nan] * len(PERCENTILES)
        out[col] = (int(vals.size), pct)
    return detection, out


def _check_positions(cfg: ExperimentConfig, users: np.ndarray) -> None:
    room = Room(*cfg.scenario.room)
    for i, u in enumerate(users):
        try:
            Placement(np.array(cfg.scenario.anchor), u).validate(room)
        except ConfigError as exc:
            raise ConfigError(f"position {i}: {exc}") from exc


def run_experiment(cfg: ExperimentConfig, directory: str | Path | None = None) -> ExperimentResult:
    """Run every sweep point over every user position and write the result tables."""
    validate(cfg)
    users = user_positions(cfg)
    _check_positions(cfg, users)
    out = Path(directory if directory is not None else cfg.output.directory)
    (out / "ground_truth").mkdir(parents=True, exist_ok=True)
    points = cfg.sweep_points()
    result = ExperimentResult(out, points)

    sc = cfg.scenario
    for i, u in enumerate(users):
        paths = trace_paths(Room(*sc.room), Placement(np.array(sc.anchor), u),
                            sc.reflection_loss_db, sc.carrier_hz, sc.second_order, sc.surfaces)
        p = out / "ground_truth" / f"pos_{i:04d}.txt"
        write_paths(p, paths)
        result.files.append(p)

    result.files.append(_write_csv(
        out / "sweep_points.csv", ("point", "tx_power_dbm", "k_res", "frames"),
        [(k, float(pt["tx_power_dbm"]), float(pt["k_res"]), pt["frames"] or "all")
         for k, pt in enumerate(points)],
    ))

    summary_rows = []
    timing_rows = []
    for k, point in enumerate(points):
        ctx = _PointContext(cfg, point, k)

        def job(item, ctx=ctx):
            i, u = item
            try:
                return _simulate(ctx, i, u)
            except (MompError, ArithmeticError, ValueError) as exc:
                raise ExperimentError(f"position {i} at sweep point {k}: {exc}") from exc

        items = list(enumerate(users))
        if cfg.output.workers > 1:
            with ThreadPoolExecutor(cfg.output.workers) as pool:
                rows = list(pool.map(job, items))
        else:
            rows = [job(it) for it in items]
        result.results.append(rows)
        logger.info("sweep point %d/%d done (%d positions)", k + 1, len(points), len(rows))

        result.files.append(_write_csv(
            out / f"metrics_point_{k:03d}.csv",
            ("position_id", *METRIC_COLUMNS, "detected", "n_paths"),
            [(r.position_id, *(r.metrics[c] for c in METRIC_COLUMNS), r.detected, r.n_paths) for r in rows],
        ))
        result.files.append(_write_csv(
            out / f"locations_point_{k:03d}.csv", LOCATION_COLUMNS,
            [tuple(r.location[c] for c in LOCATION_COLUMNS) for r in rows],
        ))
        detection, stats = summarize(rows)
        for col, (count, pct) in stats.items():
            summary_rows.append((k, float(point["tx_power_dbm"]), float(point["k_res"]),
                                 point["frames"] or "all", col, count, *pct, detection))
        timing_rows += [(k, r.position_id, r.wall_time_s) for r in rows]

    result.files.append(_write_csv(
        out / "summary.csv",
        ("point", "tx_power_dbm", "k_res", "frames", "metric", "count",
         *(f"p{q}" for q in PERCENTILES), "detection_rate"),
        summary_rows,
    ))
    if cfg.output.timings:
        result.files.append(_write_csv(out / "timings.csv", ("point", "position_id", "wall_time_s"), timing_rows))
    return result
