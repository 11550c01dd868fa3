"""Instantaneous projective readout of the monitor photon number.

When the monitor mode is found to hold exactly ``k`` photons at time ``t``,
the joint AB state reduces to a *pure* state: the evolved state reweighted by
``N^k exp(-(chi t)^2 N^2 / 2)`` in the total photon number N.  The count
statistics are a Poisson mixture with per-component mean ``(chi t N)^2``,
which makes every moment an explicit function of the moments of N^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .fock import (
    ImpossibleOutcomeError,
    TwoModeState,
    apply_beam_splitter,
    fix_global_phase,
    number_weights,
)

PROBABILITY_FLOOR = 1e-300
TAIL_MASS = 1e-12


class DegenerateEstimatorError(ValueError):
    """The intensity estimator's denominator vanished (4 k_mean = (chi t)^2)."""


class NonPhysicalInferenceWarning(UserWarning):
    """An inferred physical quantity came out negative."""


@dataclass(frozen=True)
class PmOutcome:
    """Result of post-selecting on a projective count of k photons."""

    k: int
    t: float
    probability: float
    post_state: TwoModeState


def _check_kt(t: float, k: int) -> None:
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    if k < 0 or int(k) != k:
        raise ValueError(f"k must be a nonnegative integer, got {k!r}")


def mixture_pmf(weights: np.ndarray, means: np.ndarray, k: int) -> float:
    """P(k) of a mixture of Poisson distributions."""
    return float(np.sum(weights * poisson.pmf(k, means)))


def mixture_pmf_row(weights: np.ndarray, means: np.ndarray, k_max: int) -> np.ndarray:
    """P(k) for all k = 0..k_max at once (same mixture as `mixture_pmf`)."""
    ks = np.arange(k_max + 1)
    return poisson.pmf(ks[:, None], means[None, :]) @ weights


def k_cutoff(mean_max: float, tail: float = TAIL_MASS) -> int:
    """Count cutoff K with Poisson tail mass beyond K below ``tail`` for
    every mixture component (the largest mean dominates the tail)."""
    if mean_max <= 0:
        return 1
    return int(poisson.isf(tail, mean_max)) + 2


def pm_probability(state0: TwoModeState, chi: float, t: float, k: int) -> float:
    """Probability of finding k photons in the monitor at time t,
    sum_N P_N Poisson(k; (chi t N)^2)."""
    _check_kt(t, k)
    weights = number_weights(state0)
    n = np.arange(len(weights), dtype=float)
    return mixture_pmf(weights, (chi * t * n) ** 2, k)


def pm_count_cutoff(state0: TwoModeState, chi: float, t: float, tail: float = TAIL_MASS) -> int:
    return k_cutoff((chi * t * state0.n_max) ** 2, tail)


def pm_distribution_row(state0: TwoModeState, chi: float, t: float, k_max: int) -> np.ndarray:
    """P(k, t) for k = 0..k_max; row-vectorized version of `pm_probability`."""
    _check_kt(t, k_max)
    weights = number_weights(state0)
    n = np.arange(len(weights), dtype=float)
    return mixture_pmf_row(weights, (chi * t * n) ** 2, k_max)


def pm_postselect(state0: TwoModeState, lam: float, chi: float, t: float, k: int) -> PmOutcome:
    """Pure post-measurement state after counting k monitor photons at t.

    The returned state is the beam-splitter-evolved input reweighted by
    ``N^k exp(-(chi t)^2 N^2 / 2)``, normalized, with its global phase fixed
    so the largest-modulus coefficient is real positive.  For number-state
    inputs the reweighting is a scalar, so the result is the freely evolved
    state, independent of k.
    """
    _check_kt(t, k)
    probability = pm_probability(state0, chi, t, k)
    if probability < PROBABILITY_FLOOR:
        raise ImpossibleOutcomeError(
            f"outcome k={k} at t={t} has probability below {PROBABILITY_FLOOR:g}"
        )
    evolved = apply_beam_splitter(state0, lam, t)
    d_a, d_b = evolved.d_a, evolved.d_b
    totals = (np.arange(d_a)[:, None] + np.arange(d_b)[None, :]).astype(float)
    log_w = np.full_like(totals, -np.inf)
    positive = totals > 0
    log_w[positive] = k * np.log(totals[positive]) - (chi * t) ** 2 * totals[positive] ** 2 / 2
    if k == 0:
        log_w[~positive] = 0.0
    support = np.isfinite(log_w) & (evolved.coeffs != 0)
    if not np.any(support):
        raise ImpossibleOutcomeError(f"no support for outcome k={k}")
    shift = np.max(log_w[support])
    weights = np.where(np.isfinite(log_w), np.exp(log_w - shift), 0.0)
    coeffs = weights * evolved.coeffs
    coeffs = fix_global_phase(coeffs / np.linalg.norm(coeffs))
    return PmOutcome(k=k, t=t, probability=probability, post_state=TwoModeState(coeffs))


def pm_mean_variance(state0: TwoModeState, chi: float, t: float) -> tuple[float, float]:
    """Mean and variance of the projective count distribution.

    The mean is ``(chi t)^2 <N^2>``; the variance satisfies
    ``Var(k) - k_mean = (chi t)^4 Var(N^2)`` (Poisson mixture), which is
    re-verified against direct summation in the test suite.  Note the
    variance returned here is that of the full distribution, i.e. it
    includes the Poisson shot-noise term ``k_mean``.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    weights = number_weights(state0)
    total = float(np.sum(weights))
    n = np.arange(len(weights), dtype=float)
    n2 = float(np.sum(weights * n**2) / total)
    n4 = float(np.sum(weights * n**4) / total)
    k_mean = (chi * t) ** 2 * n2
    k_var = k_mean + (chi * t) ** 4 * (n4 - n2**2)
    return k_mean, k_var


def infer_total_mean_photons(k_mean: float, excess_var: float, chi: float, t: float) -> float:
    """Invert the coherent-product count moments for F = |alpha|^2 + |beta|^2.

    ``excess_var`` is the variance of the count distribution in excess of its
    mean, Var(k) - k_mean = (chi t)^4 (4F^3 + 6F^2 + F); together with
    k_mean = (chi t)^2 F (F + 1) this gives

        F = [excess_var/(chi t)^4 - 2 k_mean/(chi t)^2] / [4 k_mean/(chi t)^2 - 1]

    The right-hand side is time-independent.  A negative result is returned
    but flagged with ``NonPhysicalInferenceWarning``; a vanishing denominator
    raises ``DegenerateEstimatorError``.
    """
    ct2 = (chi * t) ** 2
    if ct2 <= 0:
        raise ValueError("chi * t must be nonzero")
    scaled_mean = k_mean / ct2
    denom = 4.0 * scaled_mean - 1.0
    if abs(denom) < 1e-12 * max(1.0, abs(4.0 * scaled_mean)):
        raise DegenerateEstimatorError(
            f"estimator degenerate: 4 k_mean = (chi t)^2 within tolerance (k_mean={k_mean})"
        )
    f = (excess_var / ct2**2 - 2.0 * scaled_mean) / denom
    if f < 0:
        warnings.warn(
            f"inferred total intensity is negative ({f:.6g}); moments are inconsistent "
            "with a coherent-product preparation",
            NonPhysicalInferenceWarning,
            stacklevel=2,
        )
    return f


def coherent_count_moments(f: float, chi: float, t: float) -> tuple[float, float]:
    """Closed-form (k_mean, excess_var) for a coherent product with total
    intensity F = |alpha|^2 + |beta|^2: k_mean = (chi t)^2 F(F+1) and
    excess_var = (chi t)^4 (4F^3 + 6F^2 + F)."""
    k_mean = (chi * t) ** 2 * f * (f + 1.0)
    excess = (chi * t) ** 4 * (4.0 * f**3 + 6.0 * f**2 + f)
    return k_mean, excess


def sample_pm_counts(
    state0: TwoModeState, chi: float, t: float, n_samples: int, seed: int
) -> np.ndarray:
    """Draw k-samples from the projective count distribution (seeded).

    Sampling is exact for the truncated state: first the total photon number
    N is drawn from its renormalized distribution, then k ~ Poisson((chi t N)^2).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    weights = number_weights(state0)
    probs = weights / np.sum(weights)
    n = rng.choice(len(weights), size=n_samples, p=probs)
    return rng.poisson((chi * t * n) ** 2)
