"""CSV artifacts with stable schemas.

Floats are written with ``repr``-precision (17 significant digits) so that
reruns with the same seed produce byte-identical files. Each writer's
column list is its schema contract. Wall-clock timings go to separate
``runtime.csv`` files, the only artifacts that differ between reruns.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .qvi import LadderPolicy

LADDER_COLUMNS = ("agent", "R", "threshold_index", "m_threshold", "pasting_residual", "kind")
TRACE_COLUMNS = ("time", "kind", "agent", "payload")
VALUES_COLUMNS = ("agent", "mean", "se", "reps", "seed")
DURATION_COLUMNS = ("scenario", "duration", "empirical_cdf")
TOPOLOGY_COLUMNS = ("topology", "V0", "se")
COMPARE_COLUMNS = ("topology", "metric", "estimate", "se", "baseline")
NETWORKS_COLUMNS = ("bitmask", "feasible", "W", "V0")
STABILITY_COLUMNS = ("eps_mult", "eps", "bitmask", "stable", "class", "witness", "w_gap", "w_gap_lo", "w_gap_hi")
STATIC_COLUMNS = ("case", "biases", "v0", "blocked_measure", "y_silent", "lo", "hi")
SOLVER_COLUMNS = ("agent", "max_residual", "verification_gap", "waiting_verification_gap", "max_value_matching",
                  "max_pasting_gap", "doubling_shift_cells")
RUNTIME_COLUMNS = ("stage", "seconds")
SURFACE_COLUMNS = ("agent", "R", "m", "V", "MV")
CERTIFICATE_COLUMNS = ("agent", "beta", "mat_bound", "rep_bound", "gain", "sufficient", "beta_min", "rho_max",
                       "mat_quad", "rep_quad")
DELIVERY_COLUMNS = ("T", "fraction", "ci_low", "ci_high", "reps", "reference")
SWEEP_COLUMNS = ("parameter", "value", "agent", "R", "lower", "upper", "width", "cell")
TIMING_COLUMNS = ("scenario", "n_events", "mean", "median", "burstiness", "burstiness_se", "up_delay", "down_delay",
                  "gap", "gap_lo", "gap_hi")
STEEPNESS_COLUMNS = ("topology", "max_inaction_width", "bias_sorted")
IDENTITY_COLUMNS = ("check", "key", "computed", "reference", "abs_error", "tolerance")
SILENCE_COLUMNS = ("rep", "agent", "window_start", "window_end", "pi_range", "max_m_gap", "events_in_window")
ASSERTION_COLUMNS = ("preset", "assertion", "passed", "detail")


def output_dir(default: str | os.PathLike = "out") -> Path:
    """Output directory, overridable with ``LADDERLAB_OUT``."""
    return Path(os.environ.get("LADDERLAB_OUT", default))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: str | os.PathLike, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, schema has {len(columns)}")
            w.writerow([fmt(x) for x in row])
    return path


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def ladder_rows(policy: LadderPolicy) -> list[tuple]:
    """One row per threshold: disclosure switches first, then clock switches."""
    rows = []
    for j, r in enumerate(policy.r):
        gaps = policy.pasting_gap[j] if j < len(policy.pasting_gap) else []
        for k, th in enumerate(policy.thresholds[j]):
            res = gaps[k] if k < len(gaps) else float("nan")
            rows.append((policy.agent, float(r), k, float(th), float(res), "disclose"))
        for k, th in enumerate(policy.clock_thresholds[j]):
            rows.append((policy.agent, float(r), k, float(th), float("nan"), "clock"))
    return rows


def write_ladders(path, policies: Mapping[int, LadderPolicy]) -> Path:
    rows = [row for i in sorted(policies) for row in ladder_rows(policies[i])]
    return write_csv(path, LADDER_COLUMNS, rows)


def trace_rows(trace) -> list[tuple]:
    return [(e.time, e.kind, e.agent, json.dumps(e.payload, sort_keys=True)) for e in trace.events]


def values_rows(estimate) -> list[tuple]:
    rows = [(i, estimate.means[i], estimate.se[i], estimate.reps, estimate.seed) for i in sorted(estimate.means)]
    rows.append(("W", estimate.w, estimate.w_se, estimate.reps, estimate.seed))
    return rows


def duration_cdf_rows(scenario: str, durations: np.ndarray) -> list[tuple]:
    x = np.sort(np.asarray(durations, dtype=float))
    n = x.size
    return [(scenario, float(v), (k + 1) / n) for k, v in enumerate(x)]


def mask_string(mask: int, width: int) -> str:
    return format(mask, f"0{width}b") if width else "0"
