"""Public posterior over an agent's binary type and its reputational capital.

A high type discloses at an opportunity with probability ``p_high`` and a low
type with ``p_low``. Observed silence while the clock is on and disclosure is
expected lowers the posterior continuously; a disclosure raises it by Bayes'
rule. Reputational capital is affine in the posterior.
"""

from __future__ import annotations

import math

import numpy as np

from .model import ReputationParams


def rep_from_pi(rep: ReputationParams, pi):
    """Affine map from the posterior to reputational capital."""
    out = rep.phi_low + (rep.phi_high - rep.phi_low) * np.asarray(pi, dtype=float)
    return float(out) if out.ndim == 0 else out


def pi_from_rep(rep: ReputationParams, r):
    return (np.asarray(r, dtype=float) - rep.phi_low) / (rep.phi_high - rep.phi_low)


def silence_drift(rep: ReputationParams, pi: float, lambda_bar: float, disclosing_region: bool, dt: float) -> float:
    """Posterior after ``dt`` of silence.

    The drift ``-pi (1 - pi) lambda_bar (p_high - p_low)`` is a logistic ODE
    in the log-odds, so it is integrated exactly rather than by substeps.
    """
    if dt < 0:
        raise ValueError("negative dt")
    if not disclosing_region or pi <= 0.0 or pi >= 1.0 or dt == 0:
        return float(pi)
    c = lambda_bar * (rep.p_high - rep.p_low)
    logit = math.log(pi) - math.log1p(-pi) - c * dt
    return float(min(max(1.0 / (1.0 + math.exp(-logit)), 0.0), 1.0))


def silence_drift_array(rep: ReputationParams, pi: np.ndarray, lambda_bar: float, mask: np.ndarray, dt: float) -> np.ndarray:
    """Vectorized :func:`silence_drift` applied where ``mask`` is true."""
    pi = np.asarray(pi, dtype=float)
    c = lambda_bar * (rep.p_high - rep.p_low) * dt
    interior = mask & (pi > 0) & (pi < 1)
    out = pi.copy()
    p = pi[interior]
    out[interior] = 1.0 / (1.0 + (1.0 - p) / p * math.exp(c))
    return out


def disclosure_jump(rep: ReputationParams, pi):
    """Bayes update of the posterior after an observed disclosure."""
    pi = np.asarray(pi, dtype=float)
    num = pi * rep.p_high
    den = num + (1.0 - pi) * rep.p_low
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), pi)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def rep_after_disclosure(rep: ReputationParams, r):
    """Reputational capital after a disclosure, as a function of capital before."""
    return rep_from_pi(rep, disclosure_jump(rep, pi_from_rep(rep, r)))
