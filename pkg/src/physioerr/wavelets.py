"""Periodized orthogonal discrete wavelet transform (Daubechies-4).

The analysis/synthesis pair is built from the canonical 8-tap db4 scaling
coefficients; with periodic extension the transform matrix is orthogonal,
so reconstruction is exact and coefficient energy equals signal energy for
lengths divisible by 2^levels. Odd intermediate lengths are handled by
repeating the final sample before analysis and truncating after synthesis,
which preserves perfect reconstruction (but not strict energy equality).

All routines operate on the last axis, so a whole window of EEG channels
decomposes in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthError

# db4 scaling filter in increasing index order; sums to sqrt(2).
DB4_SCALING = np.array(
    [
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ]
)
# Quadrature mirror: h[n] = (-1)^n g[L-1-n].
DB4_WAVELET = (DB4_SCALING[::-1] * np.array([1.0, -1.0] * 4)).copy()


@dataclass(frozen=True)
class WaveletCoeffs:
    """Multi-level decomposition: details[0] is level 1 (finest)."""

    details: tuple[np.ndarray, ...]
    approx: np.ndarray
    input_lengths: tuple[int, ...]  # length entering each analysis level

    @property
    def levels(self) -> int:
        return len(self.details)


def _analyze_level(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = x.shape[-1]
    half = n // 2
    base = 2 * np.arange(half)
    approx = np.zeros(x.shape[:-1] + (half,))
    detail = np.zeros_like(approx)
    for tap in range(DB4_SCALING.size):
        picked = x[..., (base + tap) % n]
        approx += DB4_SCALING[tap] * picked
        detail += DB4_WAVELET[tap] * picked
    return approx, detail


def _synthesize_level(approx: np.ndarray, detail: np.ndarray) -> np.ndarray:
    half = approx.shape[-1]
    n = 2 * half
    base = 2 * np.arange(half)
    x = np.zeros(approx.shape[:-1] + (n,))
    for tap in range(DB4_SCALING.size):
        idx = (base + tap) % n  # distinct indices for fixed tap
        x[..., idx] += DB4_SCALING[tap] * approx + DB4_WAVELET[tap] * detail
    return x


def wavedec(x: np.ndarray, levels: int) -> WaveletCoeffs:
    """Decompose the last axis into `levels` detail bands plus an approximation."""
    x = np.asarray(x, dtype=np.float64)
    if levels < 1:
        raise LengthError(f"levels must be >= 1, got {levels}")
    if x.shape[-1] < 2**levels:
        raise LengthError(
            f"signal length {x.shape[-1]} < 2^{levels} required for {levels} levels"
        )
    details: list[np.ndarray] = []
    lengths: list[int] = []
    current = x
    for _ in range(levels):
        lengths.append(current.shape[-1])
        if current.shape[-1] % 2 == 1:
            current = np.concatenate([current, current[..., -1:]], axis=-1)
        current, detail = _analyze_level(current)
        details.append(detail)
    return WaveletCoeffs(
        details=tuple(details), approx=current, input_lengths=tuple(lengths)
    )


def waverec(coeffs: WaveletCoeffs) -> np.ndarray:
    """Invert wavedec exactly (orthogonal synthesis, then odd-length trims)."""
    current = coeffs.approx
    for detail, length in zip(coeffs.details[::-1], coeffs.input_lengths[::-1]):
        current = _synthesize_level(current, detail)
        if current.shape[-1] == length + 1:
            current = current[..., :length]
    return current


def soft_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    return np.sign(values) * np.maximum(np.abs(values) - threshold, 0.0)


def universal_threshold(finest_detail: np.ndarray, n_samples: int) -> float:
    """sigma * sqrt(2 ln N) with the MAD noise estimate sigma = median|d1| / 0.6745."""
    sigma = np.median(np.abs(finest_detail)) / 0.6745
    return float(sigma * np.sqrt(2.0 * np.log(n_samples)))
