"""Cox-process disclosure opportunities gated by binary clock regimes.

An agent's opportunities arrive at rate ``lambda_bar`` while its clock is on
and at rate zero while it is off or inside an announced silence window. The
first arrival is found by inverting the cumulative intensity at an Exp(1) draw.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

OFF, ON = 0, 1


@dataclass(frozen=True)
class ClockPolicy:
    agent: int
    regime_fn: Callable[[object], int] = field(default=lambda state: ON)
    announced_windows: tuple[tuple[float, float], ...] = ()

    def in_window(self, t: float) -> bool:
        return any(s <= t < s + d for s, d in self.announced_windows)

    def regime(self, state, t: float) -> int:
        return OFF if self.in_window(t) else self.regime_fn(state)


@dataclass(frozen=True, order=True)
class OpportunityEvent:
    time: float
    agent: int


def apply_windows(segments: Sequence[tuple[float, float, int]], windows: Iterable[tuple[float, float]]):
    """Force the regime off on every announced window; returns new segments."""
    cuts = sorted({t for s, e, _ in segments for t in (s, e)}
                  | {t for s, d in windows for t in (s, s + d)})
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b) if math.isfinite(b) else a + 1.0
        reg = next((r for s, e, r in segments if s <= mid < e), None)
        if reg is None:
            continue
        if any(s <= mid < s + d for s, d in windows):
            reg = OFF
        out.append((a, b, reg))
    return out


def sample_next_arrival(lambda_bar: float, regime_path: Sequence[tuple[float, float, int]],
                        rng: np.random.Generator) -> float | None:
    """First Cox arrival on a piecewise-constant regime path.

    ``regime_path`` is a sorted list of ``(start, end, regime)`` segments; ``end``
    may be ``inf``. Returns ``None`` when the cumulative intensity over the path
    falls short of the Exp(1) draw.
    """
    e = rng.standard_exponential()
    acc = 0.0
    for start, end, reg in regime_path:
        if reg != ON or lambda_bar <= 0:
            continue
        seg = lambda_bar * (end - start)
        if acc + seg >= e:
            return start + (e - acc) / lambda_bar
        acc += seg
    return None


def sample_arrivals(lambda_bar: float, regime_path: Sequence[tuple[float, float, int]],
                    rng: np.random.Generator) -> list[float]:
    """All Cox arrivals on a finite regime path, by repeated time-change inversion."""
    out = []
    acc_target = rng.standard_exponential()
    acc = 0.0
    for start, end, reg in regime_path:
        if reg != ON or lambda_bar <= 0:
            continue
        while acc + lambda_bar * (end - start) >= acc_target:
            t = start + (acc_target - acc) / lambda_bar
            out.append(t)
            acc_target += rng.standard_exponential()
        acc += lambda_bar * (end - start)
    return out


def merge_event_streams(per_agent: dict[int, Sequence[float]] | Sequence[Sequence[float]],
                        checkpoints: Sequence[float] = ()) -> list[OpportunityEvent]:
    """Merge sorted per-agent arrival streams into one time-ordered queue.

    Ties go to the lowest agent id; checkpoints carry agent id ``-1`` and so
    precede agent events at the same time.
    """
    if not isinstance(per_agent, dict):
        per_agent = dict(enumerate(per_agent))
    streams = [[OpportunityEvent(float(t), int(a)) for t in ts] for a, ts in per_agent.items()]
    if len(checkpoints):
        streams.append([OpportunityEvent(float(t), -1) for t in checkpoints])
    return list(heapq.merge(*streams))
