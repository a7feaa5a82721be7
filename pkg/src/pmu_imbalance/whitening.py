"""DFT-noise covariance, whitening, and per-frequency sufficient statistics.

Every statistic downstream depends on the covariance only through bilinear
forms in ``R^{-1}``, so any factor ``W`` with ``W^H W = R^{-1}`` gives the
same estimates and detector outputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import diric

from .pmu import SequenceMeasurements

DEGENERATE_RTOL = 1e-12


class DegenerateNoiseError(ValueError):
    """Whitening requested for a zero-variance noise model."""


class DegenerateGramError(ArithmeticError):
    """``kappa1^2 - |kappa2|^2`` is too small to solve for the phasors."""


@dataclass(frozen=True)
class NoiseCovariance:
    window_count: int
    samples_per_cycle: int
    sigma2: float
    matrix: np.ndarray
    factor: np.ndarray
    method: str

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Apply the whitening factor along the last axis."""
        return x @ self.factor.T


def covariance_matrix(K: int, N: int, sigma2: float) -> np.ndarray:
    lag = np.abs(np.subtract.outer(np.arange(K), np.arange(K)))
    return 2.0 * sigma2 / (3.0 * N**2) * np.clip(N - lag, 0, None).astype(float)


def build_covariance(K: int, N: int, sigma2: float, method: str = "symmetric") -> NoiseCovariance:
    """Build ``R`` and a whitening factor.

    ``method="symmetric"`` gives ``R^{-1/2}`` from an eigendecomposition;
    ``method="cholesky"`` gives ``L^{-1}`` with ``R = L L^T``.
    """
    if K < 1 or N < 1:
        raise ValueError(f"K and N must be >= 1, got K={K}, N={N}")
    if not sigma2 > 0:
        raise DegenerateNoiseError(f"whitening needs sigma2 > 0, got {sigma2}")
    R = covariance_matrix(K, N, sigma2)
    if method == "symmetric":
        w, U = np.linalg.eigh(R)
        factor = (U / np.sqrt(w)) @ U.T
    elif method == "cholesky":
        L = np.linalg.cholesky(R)
        factor = solve_triangular(L, np.eye(K), lower=True)
    else:
        raise ValueError(f"unknown whitening method {method!r}")
    return NoiseCovariance(K, N, float(sigma2), R, factor, method)


def covariance_for(K: int, N: int, sigma2: float, method: str = "symmetric") -> NoiseCovariance:
    """Like :func:`build_covariance`, but noiseless records use a unit-variance ``R``.

    The estimators are invariant to the scale of ``R``, so the substitute only
    changes conditioning.
    """
    return build_covariance(K, N, sigma2 if sigma2 > 0 else 1.0, method)


def compute_P_Q(delta, N: int, omega0: float):
    """Dirichlet leakage factors of the fundamental (P) and its mirror image (Q)."""
    gamma = 2.0 * np.pi / N
    x1 = gamma * np.asarray(delta, dtype=float) / omega0
    x2 = gamma * (2.0 * omega0 + np.asarray(delta, dtype=float)) / omega0
    P = diric(x1, N) * np.exp(1j * x1 * (N - 1) / 2.0)
    Q = diric(x2, N) * np.exp(-1j * x2 * (N - 1) / 2.0)
    return P, Q


def steering_vectors(delta, K: int, N: int, omega0: float):
    """Raw steering vectors ``e1[k] = exp(j g D k / w0)``, ``e2[k] = exp(-j g (2 w0 + D) k / w0)``."""
    gamma = 2.0 * np.pi / N
    d = np.asarray(delta, dtype=float)[..., None]
    k = np.arange(K)
    e1 = np.exp(1j * gamma * d / omega0 * k)
    e2 = np.exp(-1j * gamma * (2.0 * omega0 + d) / omega0 * k)
    return e1, e2


def whiten_measurements(meas: SequenceMeasurements, cov: NoiseCovariance) -> SequenceMeasurements:
    if meas.window_count != cov.window_count:
        raise ValueError(f"measurements have K={meas.window_count}, covariance K={cov.window_count}")
    return meas.with_(
        zero_w=cov.whiten(meas.zero),
        positive_w=cov.whiten(meas.positive),
        negative_w=cov.whiten(meas.negative),
    )


def _inner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a^H b`` over the last axis, broadcasting leading axes."""
    return np.sum(np.conj(a) * b, axis=-1)


@dataclass(frozen=True)
class FrequencyContext:
    """Everything fixed by a candidate frequency deviation (broadcast over trials)."""

    delta: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    e1_raw: np.ndarray
    e2_raw: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    kappa: np.ndarray
    z_plus: np.ndarray
    z_minus: np.ndarray
    nu_plus: np.ndarray
    nu_minus: np.ndarray
    degenerate: np.ndarray

    @property
    def gram_det(self) -> np.ndarray:
        return self.kappa1**2 - np.abs(self.kappa2) ** 2

    def require_nondegenerate(self) -> None:
        if np.any(self.degenerate):
            raise DegenerateGramError(
                "kappa1^2 - |kappa2|^2 below tolerance; phasors are not identifiable at this deviation"
            )


def gram_terms(delta, cov: NoiseCovariance, omega0: float):
    """Data-independent part of the context: P, Q, steering vectors and kappas."""
    K, N = cov.window_count, cov.samples_per_cycle
    delta = np.asarray(delta, dtype=float)
    P, Q = compute_P_Q(delta, N, omega0)
    e1_raw, e2_raw = steering_vectors(delta, K, N, omega0)
    e1, e2 = cov.whiten(e1_raw), cov.whiten(e2_raw)
    kappa1 = np.abs(P) ** 2 * _inner(e1, e1).real + np.abs(Q) ** 2 * _inner(e2, e2).real
    kappa2 = 2.0 * np.conj(P) * Q * _inner(e1, e2)
    return P, Q, e1_raw, e2_raw, e1, e2, kappa1, kappa2


def build_context(delta, meas: SequenceMeasurements, cov: NoiseCovariance) -> FrequencyContext:
    """Sufficient statistics ``z_+``, ``z_-`` and Gram terms at deviation ``delta``.

    ``delta`` broadcasts against the leading axes of ``meas``: a scalar, one
    value per trial, or a grid of shape ``(G, 1)`` against ``B`` trials.
    """
    if not meas.is_whitened:
        meas = whiten_measurements(meas, cov)
    P, Q, e1_raw, e2_raw, e1, e2, kappa1, kappa2 = gram_terms(delta, cov, meas.nominal_frequency)
    nu_p, nu_m = meas.positive_w, meas.negative_w
    z_plus = np.conj(P) * _inner(e1, nu_p) + Q * _inner(nu_m, e2)
    z_minus = np.conj(P) * _inner(e1, nu_m) + Q * _inner(nu_p, e2)
    det = kappa1**2 - np.abs(kappa2) ** 2
    kappa1_b = np.broadcast_to(kappa1, np.shape(z_plus))
    kappa2_b = np.broadcast_to(kappa2, np.shape(z_plus))
    det_b = np.broadcast_to(det, np.shape(z_plus))
    degenerate = det_b < DEGENERATE_RTOL * kappa1_b**2
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa = det_b / kappa1_b
    return FrequencyContext(
        delta=np.asarray(delta, dtype=float),
        P=P,
        Q=Q,
        e1_raw=e1_raw,
        e2_raw=e2_raw,
        e1=e1,
        e2=e2,
        kappa1=kappa1_b,
        kappa2=kappa2_b,
        kappa=kappa,
        z_plus=z_plus,
        z_minus=z_minus,
        nu_plus=nu_p,
        nu_minus=nu_m,
        degenerate=degenerate,
    )
