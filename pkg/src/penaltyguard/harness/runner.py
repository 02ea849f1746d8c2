"""Run experiment plans point by point and collect :class:`RunRecord` objects."""

from __future__ import annotations

import logging
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .. import __version__
from ..analysis import (
    SystemFidelityProbe,
    dephasing_prediction,
    fidelity_points,
    protection_time,
)
from ..model import assemble
from ..propagate import diagonalize, evolve_pair
from .plans import ExperimentPlan

logger = logging.getLogger(__name__)

WORKERS_ENV = "PENALTYGUARD_WORKERS"
DEFAULT_MEMORY_BUDGET_GB = 4.0
# dense H, its eigenvectors and LAPACK workspace: about five dim x dim complex arrays
_BYTES_PER_POINT_FACTOR = 5 * 16


@dataclass
class RunRecord:
    """Outcome of one grid point.  ``error`` is set instead of results on failure."""

    plan_hash: str
    plan_name: str
    index: int
    overrides: dict
    config_hash: str
    seed: int
    e_penalty: float
    lam: float
    settings: dict
    times: list[float] = field(default_factory=list)
    f_total_sq: list[float] = field(default_factory=list)
    f_system_sq: list[float] = field(default_factory=list)
    p_codespace: list[float] = field(default_factory=list)
    scalars: dict[str, Any] = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def numeric_fields(self) -> tuple:
        """Everything expected to reproduce bit-identically on rerun."""
        return (self.config_hash, tuple(self.times), tuple(self.f_total_sq),
                tuple(self.f_system_sq), tuple(self.p_codespace),
                tuple(sorted(self.scalars.items())))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_point(plan: ExperimentPlan, index: int) -> RunRecord:
    """Evaluate one grid point; exceptions are caught and recorded."""
    cfg = plan.configs()[index]
    settings = plan.propagator_settings()
    rec = RunRecord(plan.hash(), plan.name, index, dict(plan.grid[index]), cfg.hash(), cfg.seed,
                    cfg.e_penalty, cfg.lam, dict(settings.__dict__))
    start = time.perf_counter()
    try:
        _evaluate(plan, cfg, settings, rec)
    except Exception as exc:  # noqa: BLE001 - isolate the failing point
        rec.error = f"{type(exc).__name__}: {exc}"
        logger.error("plan %s point %d failed: %s\n%s", plan.name, index, exc, traceback.format_exc())
    rec.wall_clock = time.perf_counter() - start
    return rec


def _evaluate(plan, cfg, settings, rec: RunRecord):
    inst = assemble(cfg)
    opts = plan.options
    sf = None
    if inst.time_independent and settings.method == "spectral":
        sf = diagonalize(inst.H(), inst.config_hash, settings.dense_limit)
    if "series" in plan.outputs:
        traj = evolve_pair(inst, plan.time_grid, settings=settings, spectral=sf)
        pts = fidelity_points(traj, inst)
        rec.times = [p.t for p in pts]
        rec.f_total_sq = [p.total_sq for p in pts]
        rec.f_system_sq = [p.system_sq for p in pts]
        rec.p_codespace = [p.codespace_prob for p in pts]
    if "t_prot" in plan.outputs or "longterm" in plan.outputs:
        probe = SystemFidelityProbe(inst, sf)
        if "t_prot" in plan.outputs:
            pt = protection_time(inst, threshold=float(opts.get("threshold", 0.9)), probe=probe,
                                 t_max=float(opts.get("t_max", 1e12)))
            rec.scalars["t_prot"] = pt.t
            rec.scalars["t_prot_floor"] = pt.floor
            rec.scalars["e_over_lambda_sq"] = cfg.e_penalty / cfg.lam**2 if cfg.lam else math.inf
        if "longterm" in plan.outputs:
            times = opts.get("averaging_times", [k * 1e5 for k in range(1, 11)])
            vals = probe.system_fidelity(times)
            c = inst.logical_coefficients()
            alpha = (c[0] + c[1]) / math.sqrt(2)
            rec.scalars["alpha_sq"] = float(abs(alpha) ** 2)
            rec.scalars["longterm_fs2"] = float(np.mean(vals))
            rec.scalars["longterm_prediction"] = dephasing_prediction(alpha)


def worker_count(memory_budget_gb: float = DEFAULT_MEMORY_BUDGET_GB, dim: int = 4096,
                 requested: int | None = None) -> int:
    """Parallel workers: env override, else available cores, capped by the memory budget."""
    env = os.environ.get(WORKERS_ENV)
    if requested is None and env:
        requested = int(env)
    if requested is None:
        requested = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
    per_point = _BYTES_PER_POINT_FACTOR * dim * dim / 1e9
    cap = max(1, int(memory_budget_gb // per_point))
    return max(1, min(requested, cap))


def run_experiment(plan: ExperimentPlan, workers: int | None = None,
                   memory_budget_gb: float = DEFAULT_MEMORY_BUDGET_GB) -> list[RunRecord]:
    """One :class:`RunRecord` per grid point, in grid order.

    The plan is fully validated before any compute.  A failing point yields
    a record with ``error`` set and never aborts its siblings.
    """
    plan.validate()
    dims = [2 ** (4 * c.n_logical + c.n_env) for c in plan.configs()]
    n_workers = worker_count(memory_budget_gb, max(dims), workers)
    indices = range(len(plan.grid))
    if n_workers == 1 or len(plan.grid) == 1:
        return [run_point(plan, i) for i in indices]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(run_point, [plan] * len(plan.grid), indices))
