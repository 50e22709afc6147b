"""Sign-separated and classical MFDFA.

In ``signed`` mode each segment yields two profiles, the running sums of its
positive and of its negative returns taken in temporal order. Each profile is
detrended against its own index with an order-``l`` polynomial and the
residual sum of squares is normalised by the segment length ``s`` (or by the
profile length). ``standard`` mode is classical MFDFA on the profile of all
mean-subtracted returns.

Per-segment variances are combined into q-order fluctuation functions and
log-log slopes give the generalized Hurst exponents ``h(q)``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    AllSegmentsExcluded,
    InsufficientScales,
    MFDFAError,
    NonFiniteSurface,
    ScaleTooLarge,
    TooFewPoints,
    UsageError,
)
from .series import ReturnSeries

__all__ = [
    "DEFAULT_Q_GRID",
    "EngineConfig",
    "Segment",
    "SignProfiles",
    "SegmentStats",
    "FluctuationSurface",
    "HurstSpectrum",
    "ChannelResult",
    "MFDFAResult",
    "q_grid",
    "default_scales",
    "segment_starts",
    "segment",
    "sign_profiles",
    "detrended_variance",
    "fluctuation_function",
    "hurst_exponents",
    "compute_surfaces",
    "run_mfdfa",
]

MODES = ("standard", "signed")
ZERO_POLICIES = ("exclude", "to_positive", "to_negative")
NORMALIZATIONS = ("paper_1_over_s", "subset_1_over_N")
CHANNELS = {"standard": ("unsigned",), "signed": ("positive", "negative")}

# residual rms below this fraction of the profile rms counts as zero variance
ZERO_VARIANCE_RTOL = 1e-12
MAX_MISSING_FRACTION = 0.2
MIN_FIT_SCALES = 4


def q_grid(q_min: float = -10.0, q_max: float = 10.0, step: float = 0.25) -> tuple[float, ...]:
    """Evenly spaced moments from ``q_min`` to ``q_max`` inclusive."""
    if step <= 0 or q_max <= q_min:
        raise UsageError("q grid needs q_max > q_min and a positive step")
    n = int(round((q_max - q_min) / step))
    if not np.isclose(q_min + n * step, q_max, rtol=0, atol=1e-9 * max(1.0, abs(q_max))):
        raise UsageError("q range is not a whole number of steps")
    q = np.round(q_min + step * np.arange(n + 1), 12) + 0.0  # +0.0 turns -0.0 into 0.0
    return tuple(float(v) for v in q)


DEFAULT_Q_GRID = q_grid()


@dataclass(frozen=True)
class EngineConfig:
    """Estimator settings.

    ``scales`` fixes the segment lengths explicitly; when it is ``None`` they
    are ``scales_count`` log-spaced integers between ``scales_min`` (default
    ``max(16, 2(l+2))``) and ``scales_max`` (default ``N // 4``).
    ``fit_range`` bounds the scales used in the log-log fits.
    """

    scales: tuple[int, ...] | None = None
    q_grid: tuple[float, ...] = DEFAULT_Q_GRID
    poly_order: int = 2
    mode: str = "signed"
    zero_policy: str = "exclude"
    min_points_per_fit: int | None = None
    variance_normalization: str = "paper_1_over_s"
    scales_min: int | None = None
    scales_max: int | None = None
    scales_count: int = 20
    fit_range: tuple[int | None, int | None] | None = None
    workers: int = 1

    def __post_init__(self):
        l = self.poly_order
        if not isinstance(l, (int, np.integer)) or l < 0:
            raise UsageError("poly_order must be a non-negative integer")
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}")
        if self.zero_policy not in ZERO_POLICIES:
            raise UsageError(f"zero_policy must be one of {ZERO_POLICIES}")
        if self.variance_normalization not in NORMALIZATIONS:
            raise UsageError(f"variance_normalization must be one of {NORMALIZATIONS}")
        q = np.asarray(self.q_grid, dtype=float)
        if q.ndim != 1 or len(q) < 1 or not np.all(np.isfinite(q)):
            raise UsageError("q_grid must be a non-empty list of finite reals")
        if np.any(np.diff(q) <= 0):
            raise UsageError("q_grid must be strictly increasing")
        object.__setattr__(self, "q_grid", tuple(float(v) for v in q))
        floor = 2 * (l + 2)
        if self.scales is not None:
            s = [int(v) for v in self.scales]
            if any(a >= b for a, b in zip(s, s[1:])):
                raise UsageError("scales must be strictly increasing")
            if not s or s[0] < floor:
                raise UsageError(f"every scale must be >= 2(l+2) = {floor}")
            object.__setattr__(self, "scales", tuple(s))
        if self.scales_min is not None and self.scales_min < floor:
            raise UsageError(f"scales_min must be >= 2(l+2) = {floor}")
        if self.scales_count < 2:
            raise UsageError("scales_count must be at least 2")
        if self.min_points_per_fit is not None and self.min_points_per_fit < l + 2:
            raise UsageError("min_points_per_fit must be >= poly_order + 2")
        if self.fit_range is not None:
            lo, hi = (None if v is None else int(v) for v in self.fit_range)
            if lo is not None and hi is not None and lo > hi:
                raise UsageError("fit_range must satisfy s_min <= s_max")
            object.__setattr__(self, "fit_range", (lo, hi))
        if self.workers < 1:
            raise UsageError("workers must be >= 1")

    @property
    def min_points(self) -> int:
        return self.min_points_per_fit if self.min_points_per_fit is not None else self.poly_order + 2

    @property
    def channels(self) -> tuple[str, ...]:
        return CHANNELS[self.mode]

    def resolve_scales(self, n: int) -> tuple[int, ...]:
        cap = n // 4
        if self.scales is not None:
            if self.scales[-1] > n:
                raise ScaleTooLarge(f"scale {self.scales[-1]} exceeds series length {n}")
            if self.scales[-1] > cap:
                raise ScaleTooLarge(f"largest scale {self.scales[-1]} exceeds N/4 = {cap}")
            return self.scales
        lo = self.scales_min if self.scales_min is not None else max(16, 2 * (self.poly_order + 2))
        hi = self.scales_max if self.scales_max is not None else cap
        if hi > cap:
            raise ScaleTooLarge(f"scales_max {hi} exceeds N/4 = {cap}")
        return default_scales(lo, hi, self.scales_count)


def default_scales(s_min: int, s_max: int, count: int = 20) -> tuple[int, ...]:
    """Up to ``count`` distinct log-spaced integers in ``[s_min, s_max]``."""
    if s_max < s_min:
        raise InsufficientScales(f"no scales fit between {s_min} and {s_max}")
    grid = np.unique(np.round(np.geomspace(s_min, s_max, count)).astype(int))
    return tuple(int(v) for v in grid)


# -- segmentation and profiles ----------------------------------------------

class Segment(NamedTuple):
    start: int
    stop: int
    direction: str  # "forward" or "backward"
    values: np.ndarray


def segment_starts(n: int, s: int) -> np.ndarray:
    """Start indices of the ``2 * (n // s)`` windows, forward then backward."""
    if s < 1:
        raise UsageError("scale must be positive")
    if s > n:
        raise ScaleTooLarge(f"scale {s} exceeds series length {n}")
    m = n // s
    fwd = np.arange(m) * s
    bwd = n - (np.arange(m) + 1) * s
    return np.concatenate([fwd, bwd])


def segment(series: ReturnSeries | Sequence[float], s: int) -> list[Segment]:
    x = _values(series)
    starts = segment_starts(len(x), s)
    m = len(starts) // 2
    return [
        Segment(int(a), int(a) + s, "forward" if i < m else "backward", x[a:a + s])
        for i, a in enumerate(starts)
    ]


@dataclass(frozen=True)
class SignProfiles:
    """Profiles of one segment's positive and negative returns."""

    positive: np.ndarray
    negative: np.ndarray
    positive_positions: np.ndarray
    negative_positions: np.ndarray
    index: int | None = None
    direction: str | None = None

    @property
    def n_positive(self) -> int:
        return len(self.positive)

    @property
    def n_negative(self) -> int:
        return len(self.negative)


def _sign_masks(x: np.ndarray, zero_policy: str) -> tuple[np.ndarray, np.ndarray]:
    if zero_policy == "to_positive":
        return x >= 0, x < 0
    if zero_policy == "to_negative":
        return x > 0, x <= 0
    if zero_policy == "exclude":
        return x > 0, x < 0
    raise UsageError(f"zero_policy must be one of {ZERO_POLICIES}")


def sign_profiles(
    segment: Sequence[float] | Segment,
    zero_policy: str = "exclude",
    *,
    index: int | None = None,
) -> SignProfiles:
    direction = None
    if isinstance(segment, Segment):
        direction, segment = segment.direction, segment.values
    x = np.asarray(segment, dtype=float)
    pos, neg = _sign_masks(x, zero_policy)
    qpos = np.flatnonzero(pos)
    rpos = np.flatnonzero(neg)
    return SignProfiles(
        np.cumsum(x[qpos]), np.cumsum(x[rpos]), qpos, rpos, index, direction
    )


# -- detrending -------------------------------------------------------------

@lru_cache(maxsize=8192)
def _trend_basis(n: int, order: int) -> np.ndarray:
    """Orthonormal basis of polynomials of degree <= order sampled at n points.

    The abscissa is mapped to [-1, 1]; the fitted subspace, and so the
    residual, is the same as for k = 1..n but far better conditioned.
    """
    x = np.linspace(-1.0, 1.0, n)
    q, _ = np.linalg.qr(np.vander(x, order + 1, increasing=True))
    q.flags.writeable = False
    return q


def _residual_ss(profiles: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Residual and total sums of squares, one per row of ``profiles``."""
    basis = _trend_basis(profiles.shape[1], order)
    resid = profiles - (profiles @ basis) @ basis.T
    return np.einsum("ij,ij->i", resid, resid), np.einsum("ij,ij->i", profiles, profiles)


def detrended_variance(
    profile: Sequence[float],
    l: int,
    s: int,
    normalization: str = "paper_1_over_s",
) -> float:
    """Mean squared residual of ``profile`` about its best order-``l`` polynomial.

    The sum of squared residuals is divided by ``s`` (``paper_1_over_s``) or
    by the profile length (``subset_1_over_N``).
    """
    y = np.asarray(profile, dtype=float)
    if y.ndim != 1 or len(y) < l + 2:
        raise TooFewPoints(f"profile of {len(y)} points cannot be detrended at order {l}")
    if normalization not in NORMALIZATIONS:
        raise UsageError(f"normalization must be one of {NORMALIZATIONS}")
    ss, _ = _residual_ss(y[None, :], l)
    return float(ss[0] / (s if normalization == "paper_1_over_s" else len(y)))


# -- fluctuation functions --------------------------------------------------

def _log_generalized_mean(log_f2: np.ndarray, q: np.ndarray) -> np.ndarray:
    """ln F_q for each q, from ln F^2 of the included segments.

    Evaluated with a shifted log-sum-exp so q = +-10 neither overflows nor
    underflows; q = 0 takes the geometric-mean limit.
    """
    k = len(log_f2)
    out = np.empty(len(q))
    nz = q != 0
    if nz.any():
        z = np.multiply.outer(q[nz] / 2.0, log_f2)
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        out[nz] = (lse - np.log(k)) / q[nz]
    out[~nz] = log_f2.sum() / (2.0 * k)
    return out


def fluctuation_function(variances: Sequence[float], q: float | Sequence[float]):
    """q-order fluctuation function of per-segment variances.

    Non-positive and NaN variances are dropped before averaging. Returns a
    float for scalar ``q`` and an array otherwise.
    """
    v = np.asarray(variances, dtype=float)
    v = v[np.isfinite(v) & (v > 0)]
    if len(v) == 0:
        raise AllSegmentsExcluded("no segment with positive variance")
    qa = np.atleast_1d(np.asarray(q, dtype=float))
    f = np.exp(_log_generalized_mean(np.log(v), qa))
    return float(f[0]) if np.ndim(q) == 0 else f


# -- surfaces ---------------------------------------------------------------

@dataclass(frozen=True)
class SegmentStats:
    scale: int
    total: int
    too_few_points: int
    zero_variance: int

    @property
    def used(self) -> int:
        return self.total - self.too_few_points - self.zero_variance

    def as_dict(self) -> dict:
        return {
            "scale": self.scale,
            "total": self.total,
            "too_few_points": self.too_few_points,
            "zero_variance": self.zero_variance,
            "used": self.used,
        }


@dataclass(frozen=True)
class FluctuationSurface:
    """F_q(s) for one channel; ``values[i, j]`` is q[i] at scales[j].

    Missing cells (no usable segment at that scale) hold NaN.
    ``variances[j]`` lists F^2 for every segment at scales[j], in segment
    order, with NaN where the profile was too short to detrend; ``used[j]``
    marks the segments that entered the average.
    """

    channel: str
    scales: np.ndarray
    q: np.ndarray
    values: np.ndarray
    variances: tuple[np.ndarray, ...] = ()
    used: tuple[np.ndarray, ...] = ()
    segment_stats: tuple[SegmentStats, ...] = ()

    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.values)

    def is_monotone(self, rtol: float = 1e-12) -> bool:
        """F_q(s) non-decreasing in q at every scale, up to rounding."""
        f = self.values[:, ~self.missing().any(axis=0)]
        if f.shape[1] == 0:
            return True
        return bool(np.all(np.diff(f, axis=0) >= -rtol * f[:-1]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scale"] + [repr(float(v)) for v in self.q])
        for j, s in enumerate(self.scales):
            w.writerow([int(s)] + [repr(float(v)) for v in self.values[:, j]])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path: str | Path, channel: str) -> "FluctuationSurface":
        rows = list(csv.reader(Path(path).read_text().splitlines()))
        q = np.array([float(v) for v in rows[0][1:]])
        scales = np.array([int(r[0]) for r in rows[1:]])
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).T
        return cls(channel, scales, q, values.reshape(len(q), len(scales)))


@dataclass(frozen=True)
class HurstSpectrum:
    """Generalized Hurst exponents with per-q OLS diagnostics."""

    channel: str
    q: np.ndarray
    h: np.ndarray
    stderr: np.ndarray
    r_squared: np.ndarray
    n_scales: np.ndarray
    fit_range: tuple[int, int]

    def as_dict(self) -> dict[float, float]:
        return {float(a): float(b) for a, b in zip(self.q, self.h)}

    def monotonicity_violations(self, n_sigma: float = 3.0) -> np.ndarray:
        """Indices i where h rises from q[i] to q[i+1] beyond n_sigma stderrs."""
        rise = np.diff(self.h)
        allowed = n_sigma * (self.stderr[:-1] + self.stderr[1:])
        return np.flatnonzero(rise > allowed + 1e-12)


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    resid = dy - slope * dx
    sse = float(resid @ resid)
    sst = float(dy @ dy)
    dof = len(x) - 2
    stderr = float(np.sqrt(sse / dof / sxx)) if dof > 0 else float("nan")
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    return slope, stderr, r2


def hurst_exponents(
    surface: FluctuationSurface, fit_range: tuple[int | None, int | None] | None = None
) -> HurstSpectrum:
    """OLS slope of ln F_q(s) against ln s over the scales inside ``fit_range``.

    A ``None`` bound (or no range) means the end of the scale grid.
    """
    scales = np.asarray(surface.scales)
    lo, hi = fit_range if fit_range is not None else (None, None)
    lo = int(scales[0]) if lo is None else int(lo)
    hi = int(scales[-1]) if hi is None else int(hi)
    inside = (scales >= lo) & (scales <= hi)
    if inside.sum() < MIN_FIT_SCALES:
        raise InsufficientScales(
            f"{surface.channel}: {int(inside.sum())} scales in fit range [{lo}, {hi}], need {MIN_FIT_SCALES}"
        )
    if surface.segment_stats:
        stats = [st for st, ok in zip(surface.segment_stats, inside) if ok]
        zeros = sum(st.zero_variance for st in stats)
        fittable = sum(st.total - st.too_few_points for st in stats)
        if fittable and zeros / fittable > MAX_MISSING_FRACTION:
            raise NonFiniteSurface(
                f"{surface.channel}: {zeros} of {fittable} segments have zero variance in the fit range"
            )
    x_all = np.log(scales[inside].astype(float))
    nq = len(surface.q)
    h, se, r2, ns = (np.empty(nq) for _ in range(4))
    for i, q in enumerate(surface.q):
        f = surface.values[i, inside]
        ok = np.isfinite(f) & (f > 0)
        if 1 - ok.mean() > MAX_MISSING_FRACTION:
            raise NonFiniteSurface(
                f"{surface.channel}: {int((~ok).sum())} of {len(f)} cells missing at q={q:g}"
            )
        if ok.sum() < MIN_FIT_SCALES:
            raise InsufficientScales(f"{surface.channel}: {int(ok.sum())} usable scales at q={q:g}")
        h[i], se[i], r2[i] = _ols(x_all[ok], np.log(f[ok]))
        ns[i] = ok.sum()
    return HurstSpectrum(surface.channel, np.asarray(surface.q, float), h, se, r2, ns.astype(int), (lo, hi))


# -- pipeline ---------------------------------------------------------------

@dataclass(frozen=True)
class ChannelResult:
    surface: FluctuationSurface
    hurst: HurstSpectrum


@dataclass(frozen=True)
class MFDFAResult:
    config: EngineConfig
    scales: tuple[int, ...]
    length: int
    channels: dict[str, ChannelResult] = field(default_factory=dict)
    errors: dict[str, MFDFAError] = field(default_factory=dict)

    def __getitem__(self, channel: str) -> ChannelResult:
        return self.channels[channel]


class _Cell(NamedTuple):
    variances: np.ndarray
    used: np.ndarray
    log_f: np.ndarray | None
    stats: SegmentStats


def _values(series) -> np.ndarray:
    if isinstance(series, ReturnSeries):
        return np.asarray(series.values, dtype=float)
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise UsageError("series must be one-dimensional")
    return x


def _channel_cell(
    segs: np.ndarray, channel: str, cfg: EngineConfig, s: int, q: np.ndarray, mean: float
) -> _Cell:
    n_seg = segs.shape[0]
    l = cfg.poly_order
    if channel == "unsigned":
        # within-segment running sums differ from the global profile only by a
        # constant per segment, which the fit absorbs
        profiles = np.cumsum(segs - mean, axis=1)
        counts = np.full(n_seg, s)
    else:
        pos, neg = _sign_masks(segs, cfg.zero_policy)
        mask = pos if channel == "positive" else neg
        counts = mask.sum(axis=1)
        order = np.argsort(~mask, axis=1, kind="stable")
        picked = np.take_along_axis(segs, order, axis=1)
        picked[np.arange(s)[None, :] >= counts[:, None]] = 0.0
        profiles = np.cumsum(picked, axis=1)

    f2 = np.full(n_seg, np.nan)
    zero = np.zeros(n_seg, dtype=bool)
    for n in np.unique(counts):
        if n < cfg.min_points:
            continue
        rows = np.flatnonzero(counts == n)
        ss, tot = _residual_ss(profiles[rows, :n], l)
        denom = s if cfg.variance_normalization == "paper_1_over_s" else n
        f2[rows] = ss / denom
        zero[rows] = ss <= (ZERO_VARIANCE_RTOL**2) * tot
    fitted = np.isfinite(f2)
    used = fitted & ~zero
    stats = SegmentStats(s, n_seg, int((~fitted).sum()), int(zero.sum()))
    log_f = _log_generalized_mean(np.log(f2[used]), q) if used.any() else None
    return _Cell(f2, used, log_f, stats)


def _scale_cells(x: np.ndarray, s: int, cfg: EngineConfig, q: np.ndarray, mean: float) -> list[_Cell]:
    starts = segment_starts(len(x), s)
    segs = x[starts[:, None] + np.arange(s)[None, :]]
    return [_channel_cell(segs, ch, cfg, s, q, mean) for ch in cfg.channels]


def compute_surfaces(
    series: ReturnSeries | Sequence[float], config: EngineConfig | None = None
) -> dict[str, FluctuationSurface]:
    """Fluctuation surfaces for every channel of the mode, without fitting.

    Scales are processed independently (``config.workers`` threads) and
    reassembled in scale order, so results do not depend on the worker count.
    """
    cfg = config or EngineConfig()
    x = _values(series)
    scales = cfg.resolve_scales(len(x))
    q = np.asarray(cfg.q_grid, dtype=float)
    mean = float(x.mean())

    def job(s: int) -> list[_Cell]:
        return _scale_cells(x, s, cfg, q, mean)

    if cfg.workers > 1 and len(scales) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_scale = list(pool.map(job, scales))
    else:
        per_scale = [job(s) for s in scales]

    surfaces = {}
    for c, name in enumerate(cfg.channels):
        cells = [cells_s[c] for cells_s in per_scale]
        values = np.full((len(q), len(scales)), np.nan)
        for j, cell in enumerate(cells):
            if cell.log_f is not None:
                values[:, j] = np.exp(cell.log_f)
        surfaces[name] = FluctuationSurface(
            channel=name,
            scales=np.asarray(scales),
            q=q.copy(),
            values=values,
            variances=tuple(cell.variances for cell in cells),
            used=tuple(cell.used for cell in cells),
            segment_stats=tuple(cell.stats for cell in cells),
        )
    return surfaces


def run_mfdfa(series: ReturnSeries | Sequence[float], config: EngineConfig | None = None) -> MFDFAResult:
    """Surfaces and Hurst spectra for every channel of the mode.

    Channels that cannot be estimated are reported in ``errors``; if no
    channel succeeds the first error is raised.
    """
    cfg = config or EngineConfig()
    x = _values(series)
    surfaces = compute_surfaces(x, cfg)
    channels: dict[str, ChannelResult] = {}
    errors: dict[str, MFDFAError] = {}
    for name, surface in surfaces.items():
        try:
            if not np.isfinite(surface.values).any():
                raise AllSegmentsExcluded(f"{name}: no usable segment at any scale")
            channels[name] = ChannelResult(surface, hurst_exponents(surface, cfg.fit_range))
        except MFDFAError as exc:
            errors[name] = exc
    if not channels:
        raise next(iter(errors.values()))
    scales = tuple(int(v) for v in next(iter(surfaces.values())).scales)
    return MFDFAResult(cfg, scales, len(x), channels, errors)
