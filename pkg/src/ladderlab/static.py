"""One-shot verifiable disclosure along a path with a Gaussian prior.

Every agent on the path can suppress the expert's hard evidence. Agent ``k``
with bias ``b`` strictly prefers the silent action ``y0`` over revealing ``theta``
exactly when ``(theta - y0)(theta - y0 + 2b) < 0``, an open interval of width
``2|b|`` adjacent to ``y0``. The DM's silent action is the prior mean over the
withheld set, which closes the fixed point.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr

from .model import check_bias_aligned


class StaticSolveError(RuntimeError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class GaussianPrior:
    mean: float = 0.0
    var: float = 1.0

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)


@dataclass(frozen=True)
class StaticOutcome:
    disclosed_set: str
    blocked_intervals: dict[int, tuple[float, float]]
    v0: float
    per_agent_payoffs: dict[int, float]
    y_silent: float = float("nan")
    blocked_measure: float = 0.0
    nonunique: bool = False
    sweeps: int = 0

    @property
    def full_disclosure(self) -> bool:
        return not self.blocked_intervals


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _std_tail_moments(a: float, b: float) -> tuple[float, float, float]:
    """Log mass, mean and second moment of a standard normal on ``(a, b)`` with ``0 <= a < b``.

    Written in terms of upper-tail ratios so that intervals far out in the
    tail keep full relative precision instead of underflowing.
    """
    la = float(log_ndtr(-a))
    lb = float(log_ndtr(-b)) if math.isfinite(b) else -math.inf
    keep = -math.expm1(lb - la)  # P(a < Z < b) / P(Z > a)
    mills = math.exp(-0.5 * a * a - 0.5 * math.log(2.0 * math.pi) - la)
    d = math.exp(-0.5 * (b - a) * (b + a)) if math.isfinite(b) else 0.0
    mean = mills * -math.expm1(-0.5 * (b - a) * (b + a)) / keep if math.isfinite(b) else mills
    bd = b * d if d > 0 else 0.0
    second = 1.0 + mills * (a - bd) / keep
    return la + math.log(keep), mean, second


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)


def _narrow_moments(a: float, b: float) -> tuple[float, float]:
    """Mean and variance on a narrow ``(a, b)`` computed about the midpoint.

    The closed forms subtract two nearly equal second moments when the
    interval is short; in centred coordinates the density is the smooth
    factor ``exp(-c u - u^2 / 2)`` and Gauss-Legendre is exact to rounding.
    """
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    u = h * _GL_NODES
    logw = -c * u - 0.5 * u * u
    w = _GL_WEIGHTS * np.exp(logw - logw.max())
    w /= w.sum()
    mu = float(w @ u)
    return c + mu, float(w @ (u - mu) ** 2)


def _std_moments(a: float, b: float) -> tuple[float, float, float]:
    """Log mass, mean and variance of a standard normal restricted to ``(a, b)``."""
    if math.isfinite(a) and math.isfinite(b) and b - a <= 0.5 and (b - a) * abs(a + b) <= 40.0:
        if a >= 0:
            lm = _std_tail_moments(a, b)[0]
        elif b <= 0:
            lm = _std_tail_moments(-b, -a)[0]
        else:
            lm = math.log(float(ndtr(b) - ndtr(a)))
        return (lm, *_narrow_moments(a, b))
    if a >= 0:
        lm, mean, second = _std_tail_moments(a, b)
    elif b <= 0:
        lm, mean, second = _std_tail_moments(-b, -a)
        mean = -mean
    else:
        mass = float(ndtr(b) - ndtr(a))
        pa, pb = float(_phi(a)), float(_phi(b))
        ta = 0.0 if math.isinf(a) else a * pa
        tb = 0.0 if math.isinf(b) else b * pb
        mean = (pa - pb) / mass
        return math.log(mass), mean, max(1.0 + (ta - tb) / mass - mean * mean, 0.0)
    return lm, mean, max(second - mean * mean, 0.0)


def interval_moments(prior: GaussianPrior, lo: float, hi: float) -> tuple[float, float, float]:
    """Mass, mean and second central moment of the prior restricted to ``(lo, hi)``.

    Truncated-normal formulas in a tail-stable form; a degenerate prior
    (zero variance) is handled as a point mass and an empty interval has
    zero mass at its midpoint.
    """
    if prior.var == 0:
        inside = lo < prior.mean < hi
        return (1.0, prior.mean, 0.0) if inside else (0.0, prior.mean, 0.0)
    if not hi > lo:
        return 0.0, 0.5 * (lo + hi), 0.0
    s = prior.sd
    log_mass, mean, var = _std_moments((lo - prior.mean) / s, (hi - prior.mean) / s)
    return math.exp(log_mass), prior.mean + s * mean, prior.var * var


def blocked_interval(b: float, y_silent: float) -> tuple[float, float]:
    """States that an agent with negative bias ``b`` strictly prefers to withhold.

    For ``b > 0`` use :func:`blocking_region`, which mirrors the interval.
    """
    if not b < 0:
        raise ValueError("blocked_interval requires b < 0")
    return (y_silent, y_silent - 2.0 * b)


def blocking_region(b: float, y_silent: float) -> tuple[float, float] | None:
    """Open interval where ``(theta - y0)(theta - y0 + 2b) < 0``; ``None`` when ``b == 0``."""
    if b < 0:
        return blocked_interval(b, y_silent)
    if b > 0:
        return (y_silent - 2.0 * b, y_silent)
    return None


def direct_unraveling(prior: GaussianPrior, alpha_e: float = 1.0, b_e: float = 0.0) -> StaticOutcome:
    """Expert linked directly to the DM: every state is revealed."""
    if prior.var < 0:
        raise ValueError("negative prior variance")
    return StaticOutcome("all", {}, 0.0, {0: -alpha_e * b_e**2}, y_silent=float("-inf") if b_e > 0 else float("inf"))


def _withheld(biases: Sequence[float], y: float) -> tuple[float, float]:
    bpos = max((b for b in biases if b > 0), default=0.0)
    bneg = min((b for b in biases if b < 0), default=0.0)
    return (y - 2.0 * bpos, y - 2.0 * bneg)


def _silent_roots(biases, prior) -> tuple[list[float], int]:
    """Every silent action equal to the prior mean of its own withheld set.

    ``g(y) = E[theta | withheld(y)] - y`` is positive far left and negative
    far right whenever the biases have mixed signs, so the bracket is grown
    until it changes sign and then scanned for every crossing. Returns the
    roots (sorted by distance to the prior mean) and the evaluation count of
    the first root solve.
    """
    def g(y):
        lo, hi = _withheld(biases, y)
        return interval_moments(prior, lo, hi)[1] - y

    m, s = prior.mean, prior.sd
    half = 8.0 * s
    while g(m + half) >= 0 or g(m - half) <= 0:
        half *= 2.0
        if half > 1e12 * s:
            raise StaticSolveError("no_convergence", "silent action bracket did not close")
    core = np.linspace(-8.0, 8.0, 801) * s
    outer = np.geomspace(8.0 * s, half, 200) if half > 8.0 * s else np.empty(0)
    ys = np.unique(np.concatenate([-outer[::-1], core, outer])) + m
    gs = np.array([g(y) for y in ys])
    roots, calls = [], 0
    for k in np.nonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) <= 0)[0]:
        if gs[k] == 0:
            roots.append(float(ys[k]))
            continue
        if gs[k + 1] == 0:
            continue
        y, info = brentq(g, ys[k], ys[k + 1], xtol=1e-14 * (1.0 + abs(ys[k])), full_output=True)
        roots.append(float(y))
        calls = calls or info.function_calls
    roots.sort(key=lambda y: (abs(y - m), y))
    return roots, calls


def static_path_solve(alphas: Sequence[float], biases: Sequence[float], prior: GaussianPrior,
                      grid: int = 401) -> StaticOutcome:
    """Equilibrium of the static path game.

    Aligned paths unravel completely. Otherwise the withheld set is the union
    of every agent's strict blocking interval at the silent action; the union
    is the single interval ``(y0 - 2 b_max, y0 - 2 b_min)`` and the silent
    action is its conditional prior mean. ``grid`` sets the resolution of the
    reported blocked measure check and must be at least 100.
    """
    if grid < 100:
        raise ValueError("grid must be at least 100")
    if len(alphas) != len(biases) or not biases:
        raise ValueError("alphas and biases must be non-empty and of equal length")
    if check_bias_aligned(biases):
        return StaticOutcome(
            "all", {}, 0.0, {k: -a * b**2 for k, (a, b) in enumerate(zip(alphas, biases))}
        )
    roots, sweeps = _silent_roots(biases, prior)
    y = roots[0]
    nonunique = any(abs(a - y) > 1e-6 * (1.0 + abs(y)) for a in roots[1:])
    lo, hi = _withheld(biases, y)
    mass, mean, var = interval_moments(prior, lo, hi)
    loss = mass * (var + (mean - y) ** 2)
    bias_gap = mass * (y - mean)
    payoffs = {k: -a * (loss - 2.0 * b * bias_gap + b * b) for k, (a, b) in enumerate(zip(alphas, biases))}
    blocked = {k: blocking_region(b, y) for k, b in enumerate(biases) if b != 0}
    return StaticOutcome(
        f"complement of ({lo:.6g}, {hi:.6g})", blocked, -loss, payoffs,
        y_silent=y, blocked_measure=mass, nonunique=nonunique, sweeps=sweeps,
    )


def brute_force_path(biases: Sequence[float], prior: GaussianPrior, points: int = 401,
                     subcells: int = 64, max_iter: int = 10_000) -> tuple[float, float]:
    """Equilibrium on a quantized state space by exhaustive best responses.

    The prior is quantized to ``points`` cells over six standard deviations,
    each resolved into ``subcells`` equal-width states so that cells straddling
    a blocking boundary are split rather than rounded. Each agent blocks
    exactly the states it strictly prefers to withhold given the current
    silent action; the silent action is the weighted mean of the withheld
    states. Returns ``(v0, y_silent)``.
    """
    centers = np.linspace(prior.mean - 6 * prior.sd, prior.mean + 6 * prior.sd, points)
    h = centers[1] - centers[0]
    offsets = (np.arange(subcells) + 0.5) / subcells - 0.5
    theta = (centers[:, None] + h * offsets[None, :]).ravel()
    w = _phi((theta - prior.mean) / prior.sd)
    w = w / w.sum()
    y = prior.mean
    for _ in range(max_iter):
        withhold = np.zeros(theta.size, dtype=bool)
        for b in biases:
            withhold |= (theta - y) * (theta - y + 2.0 * b) < 0
        if not withhold.any():
            return 0.0, y
        y_new = float(np.sum(w[withhold] * theta[withhold]) / w[withhold].sum())
        if abs(y_new - y) < 1e-12:
            break
        y = 0.5 * (y + y_new)
    v0 = -float(np.sum(w[withhold] * (y - theta[withhold]) ** 2))
    return v0, y


@dataclass(frozen=True)
class TreeRank:
    sorted_order: tuple[float, ...]
    v0_by_permutation: dict[tuple[float, ...], float] = field(default_factory=dict)
    aligned: bool = False


def static_tree_rank(biases: Sequence[float], prior: GaussianPrior, alphas: Sequence[float] | None = None,
                     expert_bias: float | None = None) -> TreeRank:
    """Bias-sorted line plus the DM value of every ordering of the intermediaries.

    When ``expert_bias`` is given the expert heads every line; otherwise only
    the intermediaries are on the path.
    """
    if alphas is None:
        alphas = [1.0] * len(biases)
    order = tuple(sorted(biases))
    if len(biases) > 7:
        raise ValueError("exhaustive ranking is limited to 7 intermediaries")
    out = {}
    for perm in itertools.permutations(range(len(biases))):
        bs = [biases[k] for k in perm]
        al = [alphas[k] for k in perm]
        if expert_bias is not None:
            bs, al = [expert_bias] + bs, [1.0] + al
        out[tuple(biases[k] for k in perm)] = static_path_solve(al, bs, prior).v0
    aligned = check_bias_aligned(list(biases) + ([expert_bias] if expert_bias is not None else []))
    if aligned:
        assert all(v == 0.0 for v in out.values())
    return TreeRank(order, out, aligned)
