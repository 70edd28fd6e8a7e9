"""Refinement ladders over tau, h or eps and their comparison criteria.

* ``tau``: tau_j = tau / 2^j with h fixed,
* ``h``:   h_j = h / 2^j with tau_j = h_j / 8,
* ``eps``: eps_j = eps / 10^j.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audit import weak_heat_residual
from .scheme import SchemeConfig, run

MODES = ("tau", "h", "eps")
DRIFT_RATIO = 0.75
MONITOR_FACTOR = 2.0
WEAK_FACTOR = 1.25
KINETIC_TOL = 0.10


def ladder(config: SchemeConfig, mode: str, levels: int) -> list[SchemeConfig]:
    if mode not in MODES:
        raise ValueError(f"unknown study mode {mode!r}; expected one of {MODES}")
    if levels < 1:
        raise ValueError("a study needs at least one level")
    out = []
    for j in range(levels):
        if mode == "tau":
            out.append(config.with_(tau=config.tau / 2 ** j))
        elif mode == "h":
            h = config.h / 2 ** j
            out.append(config.with_(h=h, tau=h / 8))
        else:
            out.append(config.with_(eps=config.eps / 10 ** j))
    return out


@dataclass
class LevelResult:
    level: int
    config: SchemeConfig
    summary: dict
    weak_residual: float
    kinetic_times: np.ndarray
    kinetic_window: np.ndarray
    wall_clock: float

    def row(self) -> dict:
        s = self.summary
        return {"level": self.level, "tau": self.config.tau, "h": self.config.h, "eps": self.config.eps,
                "max_abs_drift": s["max_abs_drift"], "max_abs_drift_scheme": s["max_abs_drift_scheme"],
                "max_G": s["max_G"], "V_final": s["V_final"], "eps_monitor": s["eps_monitor"],
                "eps_data_bound": s["eps_data_bound"], "weighted_H1": s["weighted_H1"],
                "weak_heat_residual": self.weak_residual, "min_det": s["min_det"],
                "min_theta": s["min_theta"], "wall_clock": self.wall_clock}


def run_level(args) -> LevelResult:
    level, config, backend = args
    start = time.perf_counter()
    traj, ledger = run(config, backend=backend)
    weak = weak_heat_residual(traj)
    times = ledger["t"].copy()
    return LevelResult(level, config, ledger.summary, weak, times, ledger["kinetic_window"].copy(),
                       time.perf_counter() - start)


@dataclass
class StudyResult:
    mode: str
    levels: list[LevelResult]
    criteria: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())

    def rows(self) -> list[dict]:
        return [lv.row() for lv in self.levels]


def _ratios(values) -> np.ndarray:
    v = np.abs(np.asarray(values, float))
    return v[1:] / np.maximum(v[:-1], 1e-300)


def kinetic_mismatch(coarse: LevelResult, fine: LevelResult) -> float:
    """Largest relative difference of the windowed kinetic energy at the coarse times."""
    fine_vals = np.interp(coarse.kinetic_times, fine.kinetic_times, fine.kinetic_window)
    scale = max(float(np.max(np.abs(coarse.kinetic_window))), 1e-300)
    return float(np.max(np.abs(fine_vals - coarse.kinetic_window)) / scale)


def evaluate(mode: str, levels: list[LevelResult]) -> dict:
    crit = {}
    if len(levels) < 2:
        return crit
    if mode == "tau":
        # the delay dissipation of the time-delayed inertia is added back to the drift
        drift = [lv.summary["max_abs_drift_scheme"] for lv in levels]
        crit["drift_ratio"] = bool(np.all(_ratios(drift) <= DRIFT_RATIO))
        for key in ("max_G", "V_final", "eps_monitor", "weighted_H1"):
            r = _ratios([lv.summary[key] for lv in levels])
            crit[f"{key}_stable"] = bool(np.all((r <= MONITOR_FACTOR) & (r >= 1 / MONITOR_FACTOR)))
    elif mode == "h":
        drift = [lv.summary["max_abs_drift"] for lv in levels]
        crit["drift_ratio"] = bool(np.all(_ratios(drift) <= DRIFT_RATIO))
        crit["kinetic_convergence"] = all(kinetic_mismatch(a, b) <= KINETIC_TOL
                                          for a, b in zip(levels, levels[1:]))
    else:
        bound = max(lv.summary["eps_data_bound"] for lv in levels)
        crit["eps_monitor_bounded"] = all(lv.summary["eps_monitor"] <= bound for lv in levels)
        crit["weak_residual_trend"] = bool(np.all(_ratios([lv.weak_residual for lv in levels]) <= WEAK_FACTOR))
    return crit


def run_study(config: SchemeConfig, mode: str, levels: int, backend: str | None = None,
              parallel: bool = False) -> StudyResult:
    jobs = [(j, cfg, backend) for j, cfg in enumerate(ladder(config, mode, levels))]
    if parallel and len(jobs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(run_level, jobs))
    else:
        results = [run_level(job) for job in jobs]
    return StudyResult(mode, results, evaluate(mode, results))
