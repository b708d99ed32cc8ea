"""Histogramming of time-tag streams and interference metrics.

correlate() builds the cross-correlation histogram of all pairwise tag
differences with a two-pointer sliding window (compiled kernel when
available); integrate_peaks() and metrics() turn histograms into peak
areas and the coalescence / classical-limit scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import correlate_kernel
from .correlation import (
    PeakAreas,
    ValueWithError,
    coalescence_probability,
    coincidence_ratio,
)
from .montecarlo import TimeTagStream


@dataclass(frozen=True)
class CorrelationHistogram:
    """Binned coincidence counts over a symmetric tau range."""

    bin_width: float  # ps
    counts: np.ndarray  # int64, odd length, bin 0 centered on tau=0
    n_tags: tuple  # (len(stream1), len(stream2))
    span: float  # ps, total duration covered by the input streams

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if self.bin_width <= 0:
            raise ValueError(f"bin_width must be > 0, got {self.bin_width}")
        if counts.ndim != 1 or counts.size % 2 != 1:
            raise ValueError("counts must be a 1-d array of odd length")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def bin_centers(self) -> np.ndarray:
        n_half = self.counts.size // 2
        return np.arange(-n_half, n_half + 1, dtype=float) * self.bin_width

    @property
    def max_tau(self) -> float:
        return (self.counts.size // 2) * self.bin_width


@dataclass(frozen=True)
class InterferenceMetrics:
    """Coalescence and classical-limit scalars with 1-sigma errors."""

    pc: ValueWithError
    pc_post: ValueWithError
    ratio_par_b: ValueWithError
    window: float  # ps, peak integration window
    post_window: float  # ps, post-selection window


def _check_sorted(tags: np.ndarray, name: str) -> np.ndarray:
    tags = np.asarray(tags, dtype=np.int64)
    if tags.size > 1 and np.any(np.diff(tags) < 0):
        raise ValueError(f"{name} tags must be sorted ascending")
    return tags


def correlate(
    s1: TimeTagStream, s2: TimeTagStream, bin_width: float, max_tau: float
) -> CorrelationHistogram:
    """Histogram of all pairwise differences s2.tags - s1.tags.

    Bins are centered on multiples of bin_width; a difference tau falls
    in the bin whose center is nearest (ties away from zero), and pairs
    with |tau| beyond (n_half + 1/2) * bin_width are excluded, where
    n_half = floor(max_tau / bin_width). O(n * k) via a sliding window.
    """
    if bin_width <= 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    if max_tau < bin_width:
        raise ValueError("max_tau must be at least one bin wide")
    t1 = _check_sorted(s1.tags, "stream 1")
    t2 = _check_sorted(s2.tags, "stream 2")
    bw = int(round(bin_width))
    n_half = int(max_tau // bw)
    counts = correlate_kernel(t1, t2, bw, n_half)
    return CorrelationHistogram(
        bin_width=float(bw),
        counts=counts,
        n_tags=(int(t1.size), int(t2.size)),
        span=float(max(s1.duration, s2.duration)),
    )


def _peak_bin_slices(
    h: CorrelationHistogram, rep_period: float, window: float
) -> dict[int, slice]:
    """Equal-width bin ranges centered on each complete peak.

    The window is realized as an odd number of bins (2h+1 with
    h = floor(window / (2 * bin_width))), identical for every peak, so
    peak areas of a uniform histogram are exactly equal.
    """
    if window > rep_period:
        raise ValueError(
            f"window {window} ps exceeds rep_period {rep_period} ps; peaks overlap"
        )
    if window < h.bin_width:
        raise ValueError("window must be at least one bin wide")
    half_bins = int(window / (2.0 * h.bin_width))
    n_half = h.counts.size // 2
    slices: dict[int, slice] = {}
    k = 0
    while True:
        center_bin = int(round(k * rep_period / h.bin_width))
        if center_bin + half_bins > n_half:
            break
        for m in (k, -k) if k else (0,):
            cb = int(round(m * rep_period / h.bin_width))
            slices[m] = slice(n_half + cb - half_bins, n_half + cb + half_bins + 1)
        k += 1
    if len(slices) < 5:
        raise ValueError("histogram must span at least two side peaks per side")
    return slices


def integrate_peaks(
    h: CorrelationHistogram, rep_period: float, window: float, label: str = "orthogonal"
) -> PeakAreas:
    """Sum counts in equal windows around tau=0 and each complete side peak."""
    slices = _peak_bin_slices(h, rep_period, window)
    a_center = float(h.counts[slices[0]].sum())
    side = [
        float(h.counts[slices[k]].sum()) for k in sorted(slices) if k != 0
    ]
    return PeakAreas(a_center=a_center, side_areas=np.array(side), label=label)


def _post_counts(h: CorrelationHistogram, post_window: float) -> float:
    half_bins = int(post_window / (2.0 * h.bin_width))
    n_half = h.counts.size // 2
    return float(h.counts[n_half - half_bins : n_half + half_bins + 1].sum())


def metrics(
    areas_perp: PeakAreas,
    areas_par: PeakAreas,
    h_perp: CorrelationHistogram,
    h_par: CorrelationHistogram,
    post_window: float,
    window: float = 0.0,
) -> InterferenceMetrics:
    """Assemble Pc, P'c, and A_par/B with propagated Poisson errors."""
    if h_perp.bin_width != h_par.bin_width or h_perp.counts.size != h_par.counts.size:
        raise ValueError("orthogonal and parallel histograms must share binning")
    if post_window < h_perp.bin_width:
        raise ValueError("post_window must be at least one bin wide")
    pc = coalescence_probability(areas_perp, areas_par)
    g_perp = _post_counts(h_perp, post_window)
    g_par = _post_counts(h_par, post_window)
    if g_perp <= 0:
        pc_post = ValueWithError(float("nan"), float("inf"))
    else:
        val = (g_perp - g_par) / g_perp
        sigma = math.sqrt(
            (g_par / g_perp**2) ** 2 * g_perp + (1.0 / g_perp) ** 2 * g_par
        )
        pc_post = ValueWithError(val, sigma)
    ratio = coincidence_ratio(areas_par)
    return InterferenceMetrics(
        pc=pc,
        pc_post=pc_post,
        ratio_par_b=ratio,
        window=window,
        post_window=post_window,
    )


def hbt_purity(
    h: CorrelationHistogram, rep_period: float, window: float
) -> ValueWithError:
    """Single-source multi-photon residual: center area / mean side area."""
    areas = integrate_peaks(h, rep_period, window)
    a = areas.a_center
    b = areas.b_side_mean
    if b <= 0:
        raise ValueError("mean side-peak area must be > 0")
    val = a / b
    sigma = math.sqrt(
        (areas.a_center_sigma / b) ** 2
        + (a / b**2) ** 2 * areas.b_side_mean_sigma**2
    )
    return ValueWithError(val, sigma)


def merge_histograms(
    a: CorrelationHistogram, b: CorrelationHistogram
) -> CorrelationHistogram:
    """Elementwise sum of histograms from disjoint stream segments."""
    if a.bin_width != b.bin_width or a.counts.size != b.counts.size:
        raise ValueError("histograms must share binning to merge")
    return CorrelationHistogram(
        bin_width=a.bin_width,
        counts=a.counts + b.counts,
        n_tags=(a.n_tags[0] + b.n_tags[0], a.n_tags[1] + b.n_tags[1]),
        span=a.span + b.span,
    )
