"""Scaling exponents tau(q) and the singularity spectrum f(alpha)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import HurstSpectrum
from .errors import GridMismatch, GridTooSmall

__all__ = [
    "TauFunction",
    "SingularitySpectrum",
    "SpectrumMetrics",
    "ChannelComparison",
    "tau_from_hurst",
    "legendre",
    "spectrum_metrics",
    "compare_channels",
    "read_spectrum_csv",
]

CONCAVITY_TOL = 1e-6
SPECTRUM_COLUMNS = ("q", "h", "tau", "alpha", "f_alpha")


@dataclass(frozen=True)
class TauFunction:
    channel: str
    q: np.ndarray
    values: np.ndarray
    h: np.ndarray | None = None

    def concavity_violations(self, tol: float = CONCAVITY_TOL) -> np.ndarray:
        """Interior grid indices whose second difference exceeds ``tol``."""
        if len(self.q) < 3:
            return np.array([], dtype=int)
        slopes = np.diff(self.values) / np.diff(self.q)
        return np.flatnonzero(np.diff(slopes) > tol) + 1

    @property
    def is_concave(self) -> bool:
        return len(self.concavity_violations()) == 0


def tau_from_hurst(h: HurstSpectrum | TauFunction) -> TauFunction:
    q = np.asarray(h.q, dtype=float)
    hv = np.asarray(h.h, dtype=float)
    return TauFunction(h.channel, q, q * hv - 1.0, hv)


@dataclass(frozen=True)
class SpectrumMetrics:
    alpha_max: float
    delta_alpha: float
    left_width: float
    right_width: float
    asymmetry: float
    concave: bool
    alpha_monotone: bool


@dataclass(frozen=True)
class SingularitySpectrum:
    """Points (q, alpha(q), f(alpha(q))) with tau and h carried alongside."""

    channel: str
    q: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    h: np.ndarray | None = None
    concave: bool = True

    @property
    def metrics(self) -> SpectrumMetrics:
        return spectrum_metrics(self)

    def to_csv(self) -> str:
        h = self.h if self.h is not None else np.full(len(self.q), np.nan)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SPECTRUM_COLUMNS)
        for row in zip(self.q, h, self.tau, self.alpha, self.f):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def read_spectrum_csv(path: str | Path, channel: str) -> SingularitySpectrum:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if tuple(rows[0]) != SPECTRUM_COLUMNS:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    cols = np.array([[float(v) for v in r] for r in rows[1:]]).T
    q, h, tau, alpha, f = cols
    return SingularitySpectrum(channel, q, tau, alpha, f, h)


def legendre(tau: TauFunction) -> SingularitySpectrum:
    """alpha = dtau/dq by second-order differences, f = q*alpha - tau.

    Central differences inside the grid, one-sided second-order stencils at
    the two ends; non-uniform grids are handled.
    """
    q = np.asarray(tau.q, dtype=float)
    t = np.asarray(tau.values, dtype=float)
    if len(q) < 3:
        raise GridTooSmall(f"need at least 3 q values, got {len(q)}")
    alpha = np.gradient(t, q, edge_order=2)
    f = q * alpha - t
    return SingularitySpectrum(tau.channel, q, t, alpha, f, tau.h, tau.is_concave)


def _alpha_at_zero(spec: SingularitySpectrum) -> float:
    q = spec.q
    hit = np.flatnonzero(q == 0)
    if len(hit):
        return float(spec.alpha[hit[0]])
    # grid without q = 0: interpolate, or take the nearest end
    return float(np.interp(0.0, q, spec.alpha))


def spectrum_metrics(spec: SingularitySpectrum) -> SpectrumMetrics:
    """alpha_max is alpha at q = 0; widths are taken at the ends of the q grid."""
    a = np.asarray(spec.alpha)
    a0 = _alpha_at_zero(spec)
    a_lo_q, a_hi_q = float(a[0]), float(a[-1])
    width = a_lo_q - a_hi_q
    left = a0 - a_hi_q
    right = a_lo_q - a0
    asym = (right - left) / width if width != 0 else 0.0
    tol = 1e-9 * max(1.0, float(np.abs(a).max()))
    return SpectrumMetrics(
        alpha_max=a0,
        delta_alpha=width,
        left_width=left,
        right_width=right,
        asymmetry=asym,
        concave=spec.concave,
        alpha_monotone=bool(np.all(np.diff(a) <= tol)),
    )


@dataclass(frozen=True)
class ChannelComparison:
    """Negative-channel value minus positive-channel value, throughout."""

    delta_alpha_max: float
    width_difference: float
    q: np.ndarray
    alpha_difference: np.ndarray


def compare_channels(spec_p: SingularitySpectrum, spec_n: SingularitySpectrum) -> ChannelComparison:
    if len(spec_p.q) != len(spec_n.q) or not np.array_equal(spec_p.q, spec_n.q):
        raise GridMismatch("spectra are on different q grids")
    mp, mn = spec_p.metrics, spec_n.metrics
    return ChannelComparison(
        delta_alpha_max=mn.alpha_max - mp.alpha_max,
        width_difference=mn.delta_alpha - mp.delta_alpha,
        q=np.asarray(spec_p.q).copy(),
        alpha_difference=np.asarray(spec_n.alpha) - np.asarray(spec_p.alpha),
    )
