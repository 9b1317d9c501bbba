"""Exact OU transitions and the public posterior (m, v) between and at disclosures.

The public observes the fundamental only through disclosures and, optionally,
a news channel ``dZ = h X dt + dW``. Between disclosures the posterior follows
the Kalman-Bucy equations; a disclosure of the current state collapses it to
``(X, 0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import OUParams


@dataclass(frozen=True)
class BeliefState:
    m: float
    v: float
    t: float = 0.0


def ou_mean(ou: OUParams, x, dt):
    """Conditional mean of X_{t+dt} given X_t = x."""
    return ou.xbar + np.exp(-ou.kappa * dt) * (np.asarray(x, dtype=float) - ou.xbar)


def ou_var(ou: OUParams, dt):
    """Conditional variance of X_{t+dt} given X_t (independent of X_t)."""
    return ou.sigma**2 * (-np.expm1(-2.0 * ou.kappa * np.asarray(dt, dtype=float))) / (2.0 * ou.kappa)


def ou_transition_sample(ou: OUParams, x, dt: float, rng: np.random.Generator, size=None):
    """Draw X_{t+dt} from the exact Gaussian transition law.

    ``x`` may be a scalar or an array; ``dt == 0`` returns ``x`` unchanged.
    """
    if dt < 0:
        raise ValueError("negative dt")
    if dt == 0:
        return x
    mean = ou_mean(ou, x, dt)
    sd = math.sqrt(float(ou_var(ou, dt)))
    shape = size if size is not None else np.shape(mean)
    out = mean + sd * rng.standard_normal(shape)
    return float(out) if np.ndim(out) == 0 else out


def riccati_rhs(ou: OUParams, v):
    h = ou.news_precision
    return ou.sigma**2 - 2.0 * ou.kappa * v - h**2 * v**2


def stationary_variance(ou: OUParams) -> float:
    """Stationary posterior variance: the non-negative root of the Riccati right-hand side."""
    h = ou.news_precision
    if h == 0:
        return ou.sigma**2 / (2.0 * ou.kappa)
    # rationalized form avoids cancellation when h*sigma << kappa
    return ou.sigma**2 / (math.sqrt(ou.kappa**2 + h**2 * ou.sigma**2) + ou.kappa)


def _substeps(ou: OUParams, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(dt / (0.01 / ou.kappa) - 1e-12))
    return n, dt / n


def filter_advance(ou: OUParams, b: BeliefState, dt: float, news_increment: float | None = None) -> BeliefState:
    """Advance the posterior over ``dt``.

    With ``h == 0`` or no news, the mean and variance follow the deterministic
    prediction ODEs; the mean uses the exact OU decay, the variance uses the
    closed-form solution when ``h == 0`` and explicit Euler substeps otherwise.
    A news increment ``dZ`` over the whole step is spread evenly across the
    substeps.
    """
    if dt < 0:
        raise ValueError("negative dt")
    if dt == 0:
        return b
    h = ou.news_precision
    if h == 0:
        vbar = ou.sigma**2 / (2.0 * ou.kappa)
        decay = math.exp(-2.0 * ou.kappa * dt)
        v = vbar + (b.v - vbar) * decay
        return BeliefState(float(ou_mean(ou, b.m, dt)), max(v, 0.0), b.t + dt)
    n, step = _substeps(ou, dt)
    m, v = b.m, b.v
    dz = None if news_increment is None else news_increment / n
    for _ in range(n):
        if dz is None:
            dm = ou.kappa * (ou.xbar - m) * step
        else:
            dm = ou.kappa * (ou.xbar - m) * step + h * v * (dz - h * m * step)
        v = max(v + riccati_rhs(ou, v) * step, 0.0)
        m = m + dm
    return BeliefState(m, v, b.t + dt)


def filter_disclose(b: BeliefState, x_revealed: float) -> BeliefState:
    """Fully revealing disclosure: the posterior jumps to ``(x, 0)``."""
    return replace(b, m=float(x_revealed), v=0.0)


def stale_disclosure(ou: OUParams, x_origin: float, age: float) -> tuple[float, float]:
    """Posterior after a disclosure of ``X`` observed ``age`` time units ago."""
    return float(ou_mean(ou, x_origin, age)), float(ou_var(ou, age))


def gap_coefficients(ou: OUParams) -> tuple[float, float]:
    """Mean-reversion rate and variance rate of the gap ``m - X`` at the stationary filter."""
    v = stationary_variance(ou) if ou.news_precision > 0 else 0.0
    h = ou.news_precision
    return ou.kappa + h**2 * v, ou.sigma**2 + (h * v) ** 2
