"""PMU front-end: one-cycle sliding DFT and symmetrical components."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .scenario import SYM_MATRIX, TWO_PI, TimeSeriesFrame

SYM_MATRIX_INV = np.linalg.inv(SYM_MATRIX)


@dataclass(frozen=True)
class PhasorSequences:
    """Per-phase phasor sequences ``V_a[k], V_b[k], V_c[k]``; shape ``(..., 3, K)``."""

    phasors: np.ndarray

    @property
    def window_count(self) -> int:
        return self.phasors.shape[-1]


@dataclass(frozen=True)
class SequenceMeasurements:
    """Zero/positive/negative sequence vectors, raw and (optionally) whitened.

    Arrays have shape ``(..., K)``. The whitened fields stay ``None`` until
    :func:`pmu_imbalance.whitening.whiten_measurements` fills them.
    """

    zero: np.ndarray
    positive: np.ndarray
    negative: np.ndarray
    samples_per_cycle: int
    nominal_frequency: float
    zero_w: np.ndarray | None = None
    positive_w: np.ndarray | None = None
    negative_w: np.ndarray | None = None

    def __post_init__(self):
        shape = self.positive.shape
        for name in ("zero", "negative", "zero_w", "positive_w", "negative_w"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @property
    def window_count(self) -> int:
        return self.positive.shape[-1]

    @property
    def is_whitened(self) -> bool:
        return self.positive_w is not None

    def with_(self, **changes) -> "SequenceMeasurements":
        return replace(self, **changes)

    def __getitem__(self, index) -> "SequenceMeasurements":
        """Select trials along the leading (batch) axes."""
        pick = lambda a: None if a is None else a[index]  # noqa: E731
        return replace(
            self,
            zero=self.zero[index],
            positive=self.positive[index],
            negative=self.negative[index],
            zero_w=pick(self.zero_w),
            positive_w=pick(self.positive_w),
            negative_w=pick(self.negative_w),
        )


def dft_phasor(x, k: int, N: int) -> complex:
    """``X[k] = (sqrt(2)/N) * sum_{n=k}^{k+N-1} x[n] exp(-j 2pi n / N)``."""
    x = np.asarray(x, dtype=float)
    if k < 0 or k + N > x.shape[-1]:
        raise IndexError(f"DFT window [{k}, {k + N - 1}] outside signal of length {x.shape[-1]}")
    n = np.arange(k, k + N)
    return np.sqrt(2.0) / N * np.sum(x[..., k : k + N] * np.exp(-1j * TWO_PI / N * n), axis=-1)


def dft_matrix(K: int, N: int) -> np.ndarray:
    """Rows are the K sliding one-cycle DFT windows over ``K-1+N`` samples."""
    n = np.arange(K - 1 + N)
    kernel = np.sqrt(2.0) / N * np.exp(-1j * TWO_PI / N * n)
    D = np.zeros((K, K - 1 + N), dtype=complex)
    for k in range(K):
        D[k, k : k + N] = kernel[k : k + N]
    return D


def phasor_sequences(frame: TimeSeriesFrame) -> PhasorSequences:
    sc = frame.scenario
    D = dft_matrix(sc.window_count, sc.samples_per_cycle)
    return PhasorSequences(frame.samples @ D.T)


def symmetrical_transform(phasors, axis: int = 0) -> np.ndarray:
    """``(1/3) H [V_a, V_b, V_c]^T`` along ``axis`` (which must have length 3)."""
    arr = np.moveaxis(np.asarray(phasors, dtype=complex), axis, -1)
    out = arr @ SYM_MATRIX.T / 3.0
    return np.moveaxis(out, -1, axis)


def inverse_symmetrical_transform(sequences, axis: int = 0) -> np.ndarray:
    arr = np.moveaxis(np.asarray(sequences, dtype=complex), axis, -1)
    out = arr @ (3.0 * SYM_MATRIX_INV).T
    return np.moveaxis(out, -1, axis)


def extract_sequences(frame: TimeSeriesFrame) -> SequenceMeasurements:
    sc = frame.scenario
    if frame.samples.shape[-1] < sc.frame_length:
        raise IndexError("frame too short for the requested number of windows")
    seq = symmetrical_transform(phasor_sequences(frame).phasors, axis=-2)
    return SequenceMeasurements(
        zero=seq[..., 0, :],
        positive=seq[..., 1, :],
        negative=seq[..., 2, :],
        samples_per_cycle=sc.samples_per_cycle,
        nominal_frequency=sc.nominal_frequency,
    )
