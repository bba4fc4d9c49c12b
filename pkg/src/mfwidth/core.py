"""Multifractal detrended fluctuation analysis.

The engine runs in five stages, each exposed as a function so it can be
checked on its own:

1. :func:`build_profile` accumulates the mean-removed samples.
2. :func:`segment_bounds` and :func:`local_fluctuation` cut the profile into
   windows of ``s`` samples and measure the residual variance left after a
   least-squares polynomial of order ``m`` is removed from each window.
3. :func:`fluctuation_function` averages those variances into the q-order
   fluctuation function ``F_q(s)``.
4. :func:`hurst_exponents` regresses ``ln F_q(s)`` on ``ln s``.
5. :func:`singularity_spectrum` maps ``h(q)`` to ``(alpha, f(alpha))`` and
   measures the width of the spectrum.

:func:`analyze` chains them.  Per-window variances are computed once per
scale and shared by every moment order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    AllZeroSegments,
    BadScale,
    DegenerateFit,
    InsufficientScales,
    NoRealRoots,
    NonFinite,
    NonPositiveFluctuation,
    ParabolaUpward,
    TooShort,
    ValidationError,
    ZeroVariance,
)

SEGMENTATIONS = ("one_ended", "two_ended")
WIDTH_METHODS = ("quadratic_fit", "endpoint_span")

MIN_SCALES = 4
DEFAULT_MIN_SCALE = 16
DEFAULT_MAX_DIVISOR = 8

# monotonicity slack used when flagging h(q)
H_MONOTONE_TOL = 1e-6


@dataclass(frozen=True)
class Series:
    """A real-valued sample sequence with optional sampling metadata."""

    samples: np.ndarray
    sample_rate_hz: float | None = None
    label: str | None = None

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError(f"series must be one-dimensional, got shape {arr.shape}")
        object.__setattr__(self, "samples", arr)
        if self.sample_rate_hz is not None and not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be positive")

    def __len__(self):
        return self.samples.shape[0]

    def with_samples(self, samples) -> "Series":
        return replace(self, samples=np.asarray(samples, dtype=np.float64))


def as_series(x) -> Series:
    return x if isinstance(x, Series) else Series(np.asarray(x, dtype=np.float64))


def _checked_samples(x, min_length=2) -> np.ndarray:
    arr = as_series(x).samples
    if arr.shape[0] < min_length:
        raise TooShort(f"need at least {min_length} samples, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("series contains NaN or Inf")
    return arr


def default_q_grid() -> np.ndarray:
    # rounding keeps q = 0 exactly on the grid
    return np.round(np.arange(-20, 21) * 0.25, 12)


def default_scale_grid(n: int, n_scales: int | None = None,
                       s_min: int = DEFAULT_MIN_SCALE, s_max: int | None = None) -> np.ndarray:
    """Integer scales between ``s_min`` and ``s_max`` (default ``n // 8``).

    With ``n_scales=None`` the scales are ``s_min * 2**j`` (one per octave);
    otherwise ``n_scales`` log-spaced values, with rounding collisions
    dropped.
    """
    if s_max is None:
        s_max = n // DEFAULT_MAX_DIVISOR
    if s_max < s_min:
        raise TooShort(f"series of {n} samples cannot host scales from {s_min} (max {s_max})")
    if n_scales is None:
        n_oct = int(np.floor(np.log2(s_max / s_min) + 1e-9))
        return s_min * 2 ** np.arange(n_oct + 1, dtype=np.int64)
    return np.unique(np.round(np.geomspace(s_min, s_max, n_scales)).astype(np.int64))


@dataclass(frozen=True)
class AnalysisConfig:
    """Hyper-parameters of the analysis.

    ``scale_grid=None`` means "derive from the series length" with
    :func:`default_scale_grid` using ``min_scale``, ``max_scale`` and
    ``n_scales``.  ``fit_min_f`` restricts the quadratic fit to
    spectrum points with ``f >= fit_min_f`` (the neighbourhood of the peak).
    """

    q_grid: tuple[float, ...] = tuple(default_q_grid().tolist())
    scale_grid: tuple[int, ...] | None = None
    detrend_order: int = 1
    segmentation: str = "two_ended"
    width_method: str = "quadratic_fit"
    fit_min_f: float | None = None
    n_scales: int | None = None
    min_scale: int = DEFAULT_MIN_SCALE
    max_scale: int | None = None

    def __post_init__(self):
        q = np.asarray(self.q_grid, dtype=np.float64)
        if q.ndim != 1 or q.size < 3:
            raise ValidationError("q_grid needs at least 3 values")
        if not np.all(np.isfinite(q)):
            raise ValidationError("q_grid must be finite")
        if np.any(np.diff(q) <= 0):
            raise ValidationError("q_grid must be strictly increasing")
        if not np.any(q == 0.0):
            raise ValidationError("q_grid must contain q = 0")
        if int(self.detrend_order) != self.detrend_order or self.detrend_order < 1:
            raise ValidationError("detrend_order must be a positive integer")
        if self.segmentation not in SEGMENTATIONS:
            raise ValidationError(f"segmentation must be one of {SEGMENTATIONS}")
        if self.width_method not in WIDTH_METHODS:
            raise ValidationError(f"width_method must be one of {WIDTH_METHODS}")
        if self.scale_grid is not None:
            s = np.asarray(self.scale_grid)
            if s.size < MIN_SCALES:
                raise ValidationError(f"scale_grid needs at least {MIN_SCALES} scales")
            if np.any(np.diff(s) <= 0):
                raise ValidationError("scale_grid must be strictly increasing")
            if np.any(s < self.detrend_order + 2):
                raise ValidationError("every scale must be at least detrend_order + 2")
        if self.n_scales is not None and self.n_scales < MIN_SCALES:
            raise ValidationError(f"n_scales must be at least {MIN_SCALES}")
        if self.min_scale < self.detrend_order + 2:
            raise ValidationError("min_scale must be at least detrend_order + 2")
        if self.max_scale is not None and self.max_scale < self.min_scale:
            raise ValidationError("max_scale must not be below min_scale")

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.q_grid, dtype=np.float64)

    def scales_for(self, n: int) -> np.ndarray:
        """Concrete scale grid for a series of ``n`` samples, validated."""
        cap = n // 4
        if self.scale_grid is None:
            s_max = n // DEFAULT_MAX_DIVISOR if self.max_scale is None else min(self.max_scale, cap)
            scales = default_scale_grid(n, self.n_scales, self.min_scale, s_max)
        else:
            scales = np.asarray(self.scale_grid, dtype=np.int64)
        if scales.size < MIN_SCALES:
            raise InsufficientScales(
                f"only {scales.size} distinct scales fit a series of {n} samples")
        if scales[-1] > cap:
            raise BadScale(f"scale {scales[-1]} exceeds n // 4 = {cap}")
        return scales


# --------------------------------------------------------------------------
# profile and segmentation


def build_profile(x) -> np.ndarray:
    """Cumulative sum of the mean-removed samples.

    >>> build_profile([1, 2, 3])
    array([-1., -1.,  0.])
    """
    arr = _checked_samples(x)
    return np.cumsum(arr - arr.mean())


def anchored_profile(profile: np.ndarray) -> np.ndarray:
    """Profile with the walk's starting point 0 prepended.

    Over ``N + 1`` points the profile of the reversed series is exactly the
    negated reverse of this one, which makes two-ended segmentation
    invariant under time reversal.
    """
    return np.concatenate(([0.0], np.asarray(profile, dtype=np.float64)))


def segment_bounds(n: int, s: int, mode: str = "two_ended") -> list[tuple[int, int]]:
    """Half-open ``(start, end)`` windows of ``s`` samples over ``n`` points.

    ``one_ended`` yields ``n // s`` windows from the head; ``two_ended``
    appends the same number counted back from the tail.
    """
    if s < 2 or s > n:
        raise BadScale(f"scale {s} outside [2, {n}]")
    if mode not in SEGMENTATIONS:
        raise ValidationError(f"segmentation must be one of {SEGMENTATIONS}")
    ns = n // s
    bounds = [(v * s, (v + 1) * s) for v in range(ns)]
    if mode == "two_ended":
        bounds += [(n - (v + 1) * s, n - v * s) for v in range(ns)]
    return bounds


def _windows(profile: np.ndarray, s: int, mode: str) -> np.ndarray:
    """All windows at scale ``s`` as a ``(n_windows, s)`` array, ordered like
    :func:`segment_bounds`."""
    n = profile.shape[0]
    ns = n // s
    head = profile[: ns * s].reshape(ns, s)
    if mode == "one_ended":
        return head
    tail = profile[n - ns * s:].reshape(ns, s)[::-1]
    return np.concatenate((head, tail), axis=0)


_basis_cache: dict[tuple[int, int], np.ndarray] = {}


def _poly_basis(s: int, m: int) -> np.ndarray:
    """Orthonormal basis of polynomials of degree <= m on abscissae 1..s."""
    key = (s, m)
    q = _basis_cache.get(key)
    if q is None:
        t = np.arange(1, s + 1, dtype=np.float64)
        u = (t - t.mean()) / max(t.mean() - 1.0, 1.0)
        q, _ = np.linalg.qr(np.vander(u, m + 1, increasing=True))
        q.setflags(write=False)
        _basis_cache[key] = q
    return q


def _detrend_rss(windows: np.ndarray, m: int) -> np.ndarray:
    """Mean squared residual of each row after removing its order-``m`` fit.

    Residuals below the rounding floor of the window are reported as exact
    zeros.
    """
    s = windows.shape[1]
    q = _poly_basis(s, m)
    resid = windows - (windows @ q) @ q.T
    f2 = np.einsum("ij,ij->i", resid, resid) / s
    floor = (4.0 * s * np.finfo(np.float64).eps * np.max(np.abs(windows), axis=1)) ** 2
    f2[f2 <= floor] = 0.0
    return f2


def local_fluctuation(window: Sequence[float], m: int = 1) -> float:
    """Residual variance of one profile window after order-``m`` detrending."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] < m + 2:
        raise DegenerateFit(f"window of {w.shape[0]} points cannot be fit with order {m}")
    return float(_detrend_rss(w[None, :], m)[0])


def segment_fluctuations(profile: np.ndarray, s: int, m: int = 1,
                         mode: str = "two_ended") -> np.ndarray:
    """``F^2(s, v)`` for every window at scale ``s``."""
    profile = np.asarray(profile, dtype=np.float64)
    if s < m + 2:
        raise DegenerateFit(f"scale {s} too small for detrending order {m}")
    segment_bounds(profile.shape[0], s, mode)  # validates s
    return _detrend_rss(_windows(profile, s, mode), m)


# --------------------------------------------------------------------------
# q-order moments


def _log_moments(f2: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``ln F_q`` for one scale and a vector of q, computed in log space.

    Zero variances count as zero for q > 0 and are left out for q <= 0.
    """
    f2 = np.asarray(f2, dtype=np.float64)
    nz = f2 > 0
    if not np.any(nz):
        raise AllZeroSegments("every segment has zero fluctuation at this scale")
    log_f2 = np.log(f2[nz])
    n_all = f2.shape[0]
    n_nz = log_f2.shape[0]
    out = np.empty(q.shape[0])
    for i, qi in enumerate(q):
        if qi == 0:
            out[i] = 0.5 * log_f2.mean()
        else:
            n = n_all if qi > 0 else n_nz
            out[i] = (logsumexp(0.5 * qi * log_f2) - np.log(n)) / qi
    return out


def fluctuation_function(f2: Sequence[float], q: float) -> float:
    """q-order average of the segment variances ``f2`` at one scale."""
    return float(np.exp(_log_moments(np.asarray(f2, dtype=np.float64),
                                     np.array([float(q)]))[0]))


@dataclass
class FluctuationSurface:
    """``F_q(s)`` over the (q, scale) grid plus the per-segment variances."""

    scales: np.ndarray
    q: np.ndarray
    fq: np.ndarray  # shape (n_q, n_scales)
    f2: list[np.ndarray] = field(default_factory=list)
    n_zero: np.ndarray | None = None
    n_detrended: int = 0

    @classmethod
    def from_fq(cls, scales, q, fq) -> "FluctuationSurface":
        """Surface built directly from given ``F_q(s)`` values."""
        return cls(np.asarray(scales, dtype=np.float64), np.asarray(q, dtype=np.float64),
                   np.asarray(fq, dtype=np.float64))


def fluctuation_surface(profile: np.ndarray, scales: Sequence[int], q: Sequence[float],
                        m: int = 1, mode: str = "two_ended") -> FluctuationSurface:
    profile = np.asarray(profile, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.int64)
    q = np.asarray(q, dtype=np.float64)
    log_fq = np.empty((q.shape[0], scales.shape[0]))
    f2_all = []
    n_zero = np.zeros(scales.shape[0], dtype=np.int64)
    n_detrended = 0
    for j, s in enumerate(scales):
        f2 = segment_fluctuations(profile, int(s), m, mode)
        n_detrended += f2.shape[0]
        f2_all.append(f2)
        n_zero[j] = int(np.count_nonzero(f2 == 0))
        log_fq[:, j] = _log_moments(f2, q)
    return FluctuationSurface(scales=scales.astype(np.float64), q=q, fq=np.exp(log_fq),
                              f2=f2_all, n_zero=n_zero, n_detrended=n_detrended)


# --------------------------------------------------------------------------
# scaling exponents


@dataclass
class HurstSpectrum:
    q: np.ndarray
    h: np.ndarray
    intercept: np.ndarray
    r2: np.ndarray
    fit_range: tuple[float, float]
    diagnostics: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[float, float]:
        return {float(qi): float(hi) for qi, hi in zip(self.q, self.h)}

    def at(self, q: float) -> float:
        idx = np.flatnonzero(np.isclose(self.q, q, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(q)
        return float(self.h[idx[0]])


def hurst_exponents(surface: FluctuationSurface, cfg: AnalysisConfig | None = None) -> HurstSpectrum:
    """Least-squares slope of ``ln F_q(s)`` against ``ln s`` for every q."""
    scales = np.asarray(surface.scales, dtype=np.float64)
    fq = np.atleast_2d(np.asarray(surface.fq, dtype=np.float64))
    if scales.shape[0] < MIN_SCALES:
        raise InsufficientScales(f"need at least {MIN_SCALES} scales, got {scales.shape[0]}")
    if not np.all(np.isfinite(fq)) or np.any(fq <= 0):
        raise NonPositiveFluctuation("F_q(s) must be finite and positive for the log-log fit")
    x = np.log(scales)
    y = np.log(fq)
    xc = x - x.mean()
    sxx = xc @ xc
    yc = y - y.mean(axis=1, keepdims=True)
    slope = yc @ xc / sxx
    intercept = y.mean(axis=1) - slope * x.mean()
    ss_res = np.sum((yc - slope[:, None] * xc[None, :]) ** 2, axis=1)
    ss_tot = np.sum(yc ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    diagnostics = []
    if np.any(np.diff(slope) > H_MONOTONE_TOL):
        diagnostics.append("h_not_monotone")
    if surface.n_zero is not None and np.any(surface.n_zero):
        diagnostics.append(f"zero_segments={int(np.sum(surface.n_zero))}")
    return HurstSpectrum(q=np.asarray(surface.q, dtype=np.float64), h=slope,
                         intercept=intercept, r2=r2,
                         fit_range=(float(scales[0]), float(scales[-1])),
                         diagnostics=diagnostics)


# --------------------------------------------------------------------------
# singularity spectrum and width


@dataclass
class SingularitySpectrum:
    q: np.ndarray
    alpha: np.ndarray
    f: np.ndarray
    alpha0: float
    quad: tuple[float, float, float] | None
    width: float | None
    width_method: str
    hurst: HurstSpectrum | None = None
    surface: FluctuationSurface | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.alpha.tolist(), self.f.tolist()))

    @property
    def diagnostics(self) -> list[str]:
        base = list(self.hurst.diagnostics) if self.hurst is not None else []
        return base + list(self.notes)


def fit_quadratic(alpha: np.ndarray, f: np.ndarray, alpha0: float,
                  mask: np.ndarray | None = None) -> tuple[float, float, float]:
    """Least-squares ``f = A u^2 + B u + 1`` with ``u = alpha - alpha0``."""
    u = np.asarray(alpha, dtype=np.float64) - alpha0
    y = np.asarray(f, dtype=np.float64) - 1.0
    if mask is not None:
        u, y = u[mask], y[mask]
    if u.size < 2 or np.max(np.abs(u), initial=0.0) <= 1e-12:
        return 0.0, 0.0, 1.0
    design = np.column_stack((u * u, u))
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(a), float(b), 1.0


def quadratic_width(a: float, b: float, c: float = 1.0) -> float:
    """Distance between the real roots of ``a u^2 + b u + c``."""
    if a >= 0:
        raise ParabolaUpward(f"fitted parabola opens upward or is flat (A = {a:.6g})")
    disc = b * b - 4.0 * a * c
    if disc <= 0:
        raise NoRealRoots(f"fitted parabola has no real roots (B^2 - 4AC = {disc:.6g})")
    return float(np.sqrt(disc) / abs(a))


def singularity_spectrum(hs: HurstSpectrum, cfg: AnalysisConfig | None = None) -> SingularitySpectrum:
    """Legendre map of ``h(q)`` to ``(alpha, f)`` and the spectrum width.

    ``h'(q)`` is taken by central differences (one-sided at the ends of the
    q grid).  Raises :class:`ParabolaUpward` / :class:`NoRealRoots` when the
    quadratic width is requested but undefined; the exception carries the
    spectrum points in ``.spectrum``.
    """
    cfg = cfg or AnalysisConfig()
    q = np.asarray(hs.q, dtype=np.float64)
    h = np.asarray(hs.h, dtype=np.float64)
    if q.shape[0] < 3:
        raise ValidationError("need h(q) on at least 3 q values")
    zero = np.flatnonzero(q == 0.0)
    if zero.size == 0:
        raise ValidationError("q grid must contain q = 0")
    dh = np.gradient(h, q, edge_order=1)
    alpha = h + q * dh
    f = q * (alpha - h) + 1.0
    i0 = int(zero[0])
    alpha0 = float(alpha[i0])
    f[i0] = 1.0

    mask = None if cfg.fit_min_f is None else f >= cfg.fit_min_f
    a, b, c = fit_quadratic(alpha, f, alpha0, mask)
    spec = SingularitySpectrum(q=q, alpha=alpha, f=f, alpha0=alpha0, quad=(a, b, c),
                               width=None, width_method=cfg.width_method, hurst=hs)
    if cfg.width_method == "endpoint_span":
        spec.width = float(np.max(alpha) - np.min(alpha))
        return spec
    try:
        spec.width = quadratic_width(a, b, c)
    except (ParabolaUpward, NoRealRoots) as exc:
        exc.spectrum = spec
        raise
    return spec


# --------------------------------------------------------------------------
# full pipeline


def compute_surface(x, cfg: AnalysisConfig | None = None) -> FluctuationSurface:
    """Profile and fluctuation surface of ``x`` under ``cfg``."""
    cfg = cfg or AnalysisConfig()
    arr = _checked_samples(x)
    if np.ptp(arr) == 0:
        raise ZeroVariance("constant series has no defined scaling")
    scales = cfg.scales_for(arr.shape[0])
    profile = anchored_profile(build_profile(arr))
    return fluctuation_surface(profile, scales, cfg.q, cfg.detrend_order, cfg.segmentation)


def analyze(x, cfg: AnalysisConfig | None = None) -> SingularitySpectrum:
    """Run the whole analysis on ``x``.

    The returned spectrum carries the intermediate ``hurst`` and ``surface``.
    """
    cfg = cfg or AnalysisConfig()
    surface = compute_surface(x, cfg)
    hs = hurst_exponents(surface, cfg)
    try:
        spec = singularity_spectrum(hs, cfg)
    except (ParabolaUpward, NoRealRoots) as exc:
        if exc.spectrum is not None:
            exc.spectrum.surface = surface
        raise
    spec.surface = surface
    return spec


def analyze_with_fallback(x, cfg: AnalysisConfig | None = None) -> SingularitySpectrum:
    """Like :func:`analyze`, but an undefined quadratic width falls back to
    the endpoint span.

    The fallback is recorded in ``notes`` as ``width_fallback=<reason>``.
    """
    cfg = cfg or AnalysisConfig()
    try:
        return analyze(x, cfg)
    except (ParabolaUpward, NoRealRoots) as exc:
        spec = exc.spectrum
        spec.width = float(np.max(spec.alpha) - np.min(spec.alpha))
        spec.width_method = "endpoint_span"
        spec.notes.append(f"width_fallback={type(exc).__name__}")
        return spec
