"""Experiment orchestration: multi-seed strategy sweeps, CSV output, curve export.

One experiment loops over (seed, strategy) pairs; each pair builds its own
federation, initializes global parameters from the seed, runs the configured
number of rounds, and evaluates the global model on the held-out test center
after every round. Rows are sorted by (seed, strategy, round) before writing,
so output order never depends on scheduling. All columns except wall_ms are
byte-stable across reruns of the same config on the same build; wall clock
time is measurement, not simulation state.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .data import build_federation
from .fl import StrategyConfig, run_round
from .masks import delta_from_inverse_area, raw_difficulty
from .metrics import evaluate
from .model import ArchDescriptor, init_params
from .rng import SHUFFLE_STREAM, substream

CSV_VERSION_LINE = "# fedgs-sim v1"

CURVE_GRID_MIN = 1.0
CURVE_GRID_MAX = 1e7


@dataclass(frozen=True)
class ResultRow:
    seed: int
    strategy: str
    round: int
    dice: float
    dice_s: float | None
    dice_l: float | None
    mean_eta: float
    max_eta: float
    steps_total: int
    wall_ms: float


@dataclass(frozen=True)
class CurvePoint:
    inverse_area: float
    raw: float  # tanh(log^2), no small-lesion gate
    delta: float  # gated difficulty factor


def _run_one(cfg: ExperimentConfig, seed: int, strategy_kind: str) -> list[ResultRow]:
    federation = build_federation(list(cfg.client_specs), seed)
    arch = ArchDescriptor(hidden_channels=cfg.hidden_channels)
    params = init_params(arch, seed)
    strategy = StrategyConfig(
        kind=strategy_kind,  # type: ignore[arg-type]
        batch_size=cfg.batch_size,
        local_epochs=cfg.local_epochs,
        difficulty=cfg.difficulty if strategy_kind == "fedgs" else None,
    )
    rows = []
    for round_index in range(cfg.rounds):
        streams = [
            substream(seed, SHUFFLE_STREAM, round_index, client_index)
            for client_index in range(len(federation.clients))
        ]
        start = time.perf_counter()
        params, stats = run_round(params, federation.clients, strategy, cfg.optimizer, streams)
        report = evaluate(params, federation.test_set, cfg.difficulty)
        wall_ms = (time.perf_counter() - start) * 1000.0
        rows.append(
            ResultRow(
                seed=seed,
                strategy=strategy_kind,
                round=round_index,
                dice=report.dice,
                dice_s=report.dice_s,
                dice_l=report.dice_l,
                mean_eta=stats.mean_eta,
                max_eta=stats.max_eta,
                steps_total=stats.steps_total,
                wall_ms=wall_ms,
            )
        )
    return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Run every (seed, strategy) pair; deterministic up to the wall_ms column."""
    tasks = [(seed, strategy) for seed in cfg.seeds for strategy in cfg.strategies]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda t: _run_one(cfg, *t), tasks))
    else:
        chunks = [_run_one(cfg, seed, strategy) for seed, strategy in tasks]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r.seed, r.strategy, r.round))
    return rows


def _cell(value: object) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_results_csv(rows: Iterable[ResultRow], path: str | Path) -> None:
    names = [f.name for f in fields(ResultRow)]
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            writer.writerow([_cell(getattr(row, name)) for name in names])


def fedgs_overhead(rows: Sequence[ResultRow]) -> float | None:
    """Mean per-round wall-time overhead of fedgs relative to fedavg, or None.

    Informational only: the absolute number depends on model scale.
    """
    fedgs = [r.wall_ms for r in rows if r.strategy == "fedgs"]
    fedavg = [r.wall_ms for r in rows if r.strategy == "fedavg"]
    if not fedgs or not fedavg:
        return None
    return float(np.mean(fedgs) / np.mean(fedavg) - 1.0)


def geometric_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.geomspace(lo, hi, points)


def emit_difficulty_curve(
    log_base: float, threshold: float, grid: Sequence[float] | None = None
) -> list[CurvePoint]:
    """Evaluate the difficulty transform over a grid of inverse areas.

    Emits both the raw tanh(log^2) value and the threshold-gated difficulty
    factor, for plotting the shape of the curve alongside where the gate sits.
    """
    if grid is None:
        grid = geometric_grid(CURVE_GRID_MIN, CURVE_GRID_MAX, 141)
    points = []
    for a_inv in grid:
        a_inv = float(a_inv)
        if not CURVE_GRID_MIN <= a_inv <= CURVE_GRID_MAX:
            raise ValueError(f"grid value {a_inv} outside [{CURVE_GRID_MIN}, {CURVE_GRID_MAX}]")
        _, delta = delta_from_inverse_area(a_inv, log_base, threshold)
        points.append(CurvePoint(inverse_area=a_inv, raw=raw_difficulty(a_inv, log_base), delta=delta))
    return points


def write_curve_csv(points: Iterable[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_VERSION_LINE + "\n")
        writer = csv.writer(fh)
        writer.writerow(["inverse_area", "raw", "delta"])
        for p in points:
            writer.writerow([_cell(p.inverse_area), _cell(p.raw), _cell(p.delta)])
