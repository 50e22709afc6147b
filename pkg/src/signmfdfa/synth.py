"""Synthetic series with known scaling: binomial cascades and fractional Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmbeddingNotPositive, UsageError
from .series import ReturnSeries, SplitMix64

__all__ = [
    "CascadeSpec",
    "FgnSpec",
    "binomial_cascade",
    "sign_randomize",
    "analytic_binomial_hurst",
    "analytic_binomial_tau",
    "analytic_binomial_alpha",
    "fgn_autocovariance",
    "fgn",
]

MAX_LEVELS = 26


@dataclass(frozen=True)
class CascadeSpec:
    levels: int
    a: float = 0.75
    seed: int | None = None

    def __post_init__(self):
        if not 1 <= int(self.levels) <= MAX_LEVELS:
            raise UsageError(f"levels must be in [1, {MAX_LEVELS}]")
        if not 0.5 < self.a < 1:
            raise UsageError("cascade weight a must lie in (0.5, 1)")
        if self.seed is not None and self.seed < 0:
            raise UsageError("seed must be non-negative")


@dataclass(frozen=True)
class FgnSpec:
    hurst: float
    length: int
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.hurst < 1:
            raise UsageError("hurst must lie in (0, 1)")
        if self.length < 1:
            raise UsageError("length must be positive")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")


def _cascade_values(levels: int, a: float) -> np.ndarray:
    x = np.ones(1)
    for _ in range(levels):
        x = np.stack([x * a, x * (1.0 - a)], axis=1).ravel()
    return x


def sign_randomize(values, seed: int) -> np.ndarray:
    """Multiply each value by an independent fair +-1, one SplitMix64 bit each."""
    x = np.asarray(values, dtype=float)
    rng = SplitMix64(seed)
    words = np.array([rng.next() for _ in range((len(x) + 63) // 64)], dtype=np.uint64)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[: len(x)]
    return np.where(bits == 1, -x, x)


def binomial_cascade(spec: CascadeSpec) -> ReturnSeries:
    """Deterministic binomial measure on 2**levels cells.

    Each cell's mass splits into fractions ``a`` (left) and ``1 - a`` (right)
    at every level. With ``spec.seed`` set the values get random signs.
    """
    x = _cascade_values(int(spec.levels), float(spec.a))
    if spec.seed is not None:
        x = sign_randomize(x, spec.seed)
    return ReturnSeries.from_values(x)


def analytic_binomial_hurst(q, a: float):
    """Exact h(q) of the binomial cascade.

    h(q) = 1/q - log2(a**q + (1-a)**q) / q, evaluated as
    -log2(mean(a**q, (1-a)**q)) / q, with the limit
    -(log2 a + log2(1-a)) / 2 at q = 0.
    """
    if not 0.5 < a < 1:
        raise UsageError("cascade weight a must lie in (0.5, 1)")
    q = np.asarray(q, dtype=float)
    la, lb = np.log(a), np.log1p(-a)
    ln2 = np.log(2)
    small = np.abs(q) < 1e-300
    qs = np.where(small, 1.0, q)
    # expm1 keeps precision near q = 0, log-sum-exp keeps it for large |q|
    with np.errstate(divide="ignore", over="ignore"):
        near = -np.log1p(0.5 * (np.expm1(qs * la) + np.expm1(qs * lb)))
    far = ln2 - np.logaddexp(qs * la, qs * lb)
    h = np.where(np.abs(qs) < 1, near, far) / (qs * ln2)
    h = np.where(small, -(la + lb) / (2 * ln2), h)
    return float(h) if h.ndim == 0 else h


def analytic_binomial_tau(q, a: float):
    q = np.asarray(q, dtype=float)
    b = 1.0 - a
    out = -np.log2(a**q + b**q)
    return float(out) if out.ndim == 0 else out


def analytic_binomial_alpha(q, a: float):
    """d tau / dq of the binomial cascade, in closed form."""
    q = np.asarray(q, dtype=float)
    b = 1.0 - a
    wa, wb = a**q, b**q
    out = -(wa * np.log2(a) + wb * np.log2(b)) / (wa + wb)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, hurst: float) -> np.ndarray:
    k = np.abs(np.asarray(k, dtype=float))
    e = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k**e + np.abs(k - 1) ** e)


def _embedding_eigenvalues(m: int, hurst: float) -> np.ndarray:
    gamma = fgn_autocovariance(np.arange(m + 1), hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    return np.fft.rfft(row).real


def fgn(spec: FgnSpec) -> ReturnSeries:
    """Unit-variance fractional Gaussian noise by circulant embedding.

    The covariance is embedded in a circulant of size 2m, m the next power
    of two >= length; the sample is truncated to ``length``. Gaussian draws
    come from numpy's PCG64 seeded with ``spec.seed``.
    """
    n = int(spec.length)
    m = 1 << max(0, (n - 1).bit_length())
    for _ in range(4):
        lam = _embedding_eigenvalues(m, spec.hurst)
        if lam.min() >= -1e-10 * lam.max():
            break
        m *= 2
    else:
        raise EmbeddingNotPositive(f"circulant embedding not non-negative for H={spec.hurst}")
    lam = np.clip(lam, 0.0, None)
    full = np.concatenate([lam, lam[-2:0:-1]])
    size = len(full)
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    y = np.fft.fft(np.sqrt(full / size) * z)
    return ReturnSeries.from_values(y.real[:n])
