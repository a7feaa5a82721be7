"""Constrained ML estimation of the sequence phasors and the frequency deviation.

The null hypothesis restricts the negative-sequence phasor to the disc
``|C_-| <= r``; the alternative to its complement. For a fixed deviation both
constrained maximizers are radial projections of the unconstrained estimate,
so the phase of the estimate never depends on the constraint.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .pmu import SequenceMeasurements
from .whitening import FrequencyContext, NoiseCovariance, build_context, whiten_measurements


class Hypothesis(str, enum.Enum):
    H0 = "H0"
    H1 = "H1"
    UNCONSTRAINED = "unconstrained"


@dataclass(frozen=True)
class PhasorEstimates:
    C_plus: np.ndarray
    C_minus: np.ndarray
    delta_hat: np.ndarray
    hypothesis: Hypothesis
    kkt_multiplier: np.ndarray | None = None


def unconstrained_cminus(ctx: FrequencyContext) -> np.ndarray:
    ctx.require_nondegenerate()
    return (ctx.kappa1 * ctx.z_minus - ctx.kappa2 * np.conj(ctx.z_plus)) / ctx.gram_det


def cplus_given_cminus(ctx: FrequencyContext, c_minus) -> np.ndarray:
    """Maximizer over ``C_+`` for a fixed ``C_-``: ``(z_+ - kappa2 C_-^*) / kappa1``."""
    return (ctx.z_plus - ctx.kappa2 * np.conj(c_minus)) / ctx.kappa1


def unconstrained_phasors(ctx: FrequencyContext) -> PhasorEstimates:
    c_minus = unconstrained_cminus(ctx)
    return PhasorEstimates(
        cplus_given_cminus(ctx, c_minus), c_minus, ctx.delta, Hypothesis.UNCONSTRAINED
    )


def _radial_projection(c_uc: np.ndarray, r: float) -> np.ndarray:
    mag = np.abs(c_uc)
    # zero estimate has no direction; fall back to phase 0
    unit = np.where(mag > 0, c_uc / np.where(mag > 0, mag, 1.0), 1.0 + 0j)
    return r * unit


def cml_phasors(ctx: FrequencyContext, r: float, hypothesis: Hypothesis | str) -> PhasorEstimates:
    """Constrained ML phasors under ``H0: |C_-| <= r`` or ``H1: |C_-| > r``.

    Under H0 the KKT multiplier ``mu0^2 = (kappa / r)(|C_uc| - r)`` is
    returned when the constraint is active and 0 otherwise.
    """
    hypothesis = Hypothesis(hypothesis)
    if r < 0:
        raise ValueError(f"authorized imbalance r must be >= 0, got {r}")
    c_uc = unconstrained_cminus(ctx)
    mag = np.abs(c_uc)
    if hypothesis is Hypothesis.UNCONSTRAINED:
        return unconstrained_phasors(ctx)
    projected = _radial_projection(c_uc, r)
    if hypothesis is Hypothesis.H0:
        keep = mag <= r
        c_minus = np.where(keep, c_uc, projected)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu2 = np.where(keep, 0.0, ctx.kappa / r * (mag - r))
        if r == 0:
            c_minus = np.zeros_like(c_uc)
            mu2 = np.where(mag > 0, np.inf, 0.0)
        multiplier = mu2
    else:
        c_minus = np.where(mag > r, c_uc, projected)
        multiplier = None
    c_plus = cplus_given_cminus(ctx, c_minus)
    return PhasorEstimates(c_plus, c_minus, ctx.delta, hypothesis, multiplier)


def _sqnorm(x: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(x) ** 2, axis=-1)


def log_likelihood(ctx: FrequencyContext, c_plus, c_minus) -> np.ndarray:
    """``2K log(pi) - ||nu_+ - ...||^2 - ||nu_- - ...||^2`` (constant kept as displayed)."""
    c_plus = np.asarray(c_plus)[..., None]
    c_minus = np.asarray(c_minus)[..., None]
    P, Q = ctx.P[..., None], ctx.Q[..., None]
    res_p = ctx.nu_plus - P * c_plus * ctx.e1 - Q * np.conj(c_minus) * ctx.e2
    res_m = ctx.nu_minus - P * c_minus * ctx.e1 - Q * np.conj(c_plus) * ctx.e2
    K = ctx.nu_plus.shape[-1]
    return 2 * K * np.log(np.pi) - _sqnorm(res_p) - _sqnorm(res_m)


def frequency_objective(ctx: FrequencyContext, r: float, hypothesis: Hypothesis | str) -> np.ndarray:
    """Concentrated log-likelihood in ``delta`` (up to an additive data constant)."""
    est = cml_phasors(ctx, r, hypothesis)
    c_uc = unconstrained_cminus(ctx)
    c = est.C_minus
    return (
        np.abs(ctx.z_plus) ** 2 / ctx.kappa1
        - ctx.kappa * np.abs(c) ** 2
        + 2.0 * ctx.kappa * np.real(c * np.conj(c_uc))
    )


@dataclass(frozen=True)
class GridSpec:
    """Search interval for the deviation, in rad/s, plus the refinement rule.

    ``refine`` is ``"parabolic"`` (three-point vertex, vectorized),
    ``"golden"`` (bounded scalar search inside the winning cell) or ``None``.
    """

    lower: float = -5.0 * 2.0 * np.pi
    upper: float = 5.0 * 2.0 * np.pi
    points: int = 2001
    refine: str | None = "parabolic"

    def __post_init__(self):
        if self.points < 1:
            raise ValueError("frequency grid is empty")
        if not self.upper >= self.lower:
            raise ValueError("grid upper bound must be >= lower bound")
        if self.refine not in (None, "parabolic", "golden"):
            raise ValueError(f"unknown refinement {self.refine!r}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.points)

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / (self.points - 1) if self.points > 1 else 0.0


def _grid_objective(meas: SequenceMeasurements, cov: NoiseCovariance, r, hypothesis, deltas):
    ctx = build_context(deltas.reshape(deltas.shape + (1,) * (meas.positive.ndim - 1)), meas, cov)
    obj = frequency_objective(ctx, r, hypothesis)
    # degenerate deviations cannot be the estimate
    return np.where(ctx.degenerate, -np.inf, obj)


def ml_frequency(
    meas: SequenceMeasurements,
    cov: NoiseCovariance,
    r: float,
    hypothesis: Hypothesis | str,
    grid: GridSpec | None = None,
) -> np.ndarray:
    """Grid-search ML deviation estimate (rad/s) under the given hypothesis.

    Works on a batch: ``meas`` arrays of shape ``(..., K)`` give estimates of
    shape ``(...)``. Ties on the grid go to the lowest index.
    """
    grid = grid or GridSpec()
    if not meas.is_whitened:
        meas = whiten_measurements(meas, cov)
    deltas = grid.values
    obj = _grid_objective(meas, cov, r, hypothesis, deltas)
    best = np.argmax(obj, axis=0)
    est = deltas[best]
    if grid.refine is None or grid.points < 3:
        return est
    if grid.refine == "parabolic":
        i = np.clip(best, 1, grid.points - 2)
        f = [np.take_along_axis(obj, (i + s)[None, ...], axis=0)[0] for s in (-1, 0, 1)]
        denom = f[0] - 2.0 * f[1] + f[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = 0.5 * (f[0] - f[2]) / denom
        ok = np.isfinite(shift) & (denom < 0) & (np.abs(shift) <= 1.0)
        refined = deltas[i] + np.where(ok, shift, 0.0) * grid.step
        at_edge = (best == 0) | (best == grid.points - 1)
        return np.where(at_edge, est, refined)
    return _golden_refine(meas, cov, r, hypothesis, grid, est)


def _golden_refine(meas, cov, r, hypothesis, grid, est):
    flat_est = np.atleast_1d(est).ravel()
    lead = meas.positive.shape[:-1]
    out = np.empty_like(flat_est)
    for idx, d0 in enumerate(flat_est):
        sub = meas[np.unravel_index(idx, lead)] if lead else meas
        lo = max(grid.lower, d0 - grid.step)
        hi = min(grid.upper, d0 + grid.step)

        def neg(d):
            return -float(_grid_objective(sub, cov, r, hypothesis, np.array([d]))[0])

        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
        out[idx] = res.x if res.fun <= neg(d0) else d0
    return out.reshape(np.shape(est))


def suboptimal_frequency(meas: SequenceMeasurements, corrected: bool = False) -> np.ndarray:
    """Positive-sequence phase-increment estimator of the deviation (rad/s).

    The default divides the K-1 one-step phase increments by K, which leaves
    a ``(K-1)/K`` shrinkage on noiseless data; ``corrected=True`` divides by
    K-1 instead.
    """
    v = meas.positive
    K = v.shape[-1]
    if K < 2:
        raise ValueError("need at least two windows to estimate the deviation")
    if np.any(v == 0):
        raise ValueError("positive-sequence phasor is exactly zero; its angle is undefined")
    increments = np.angle(v[..., 1:] * np.conj(v[..., :-1]))
    gamma = 2.0 * np.pi / meas.samples_per_cycle
    divisor = K - 1 if corrected else K
    return meas.nominal_frequency / gamma * np.sum(increments, axis=-1) / divisor


__all__ = [
    "GridSpec",
    "Hypothesis",
    "PhasorEstimates",
    "cml_phasors",
    "cplus_given_cminus",
    "frequency_objective",
    "log_likelihood",
    "ml_frequency",
    "suboptimal_frequency",
    "unconstrained_cminus",
    "unconstrained_phasors",
]
