"""Analytic two-source correlation functions and coalescence metrics.

The model: each emitter produces, per excitation pulse, a single-photon
wavepacket with intensity envelope p(t) = G*exp(-G*t) (G = 1/t1) and a
first-order coherence that decays at 1/t2 = G/2 + gamma_star, offset in
frequency by its detuning. Both wavepackets meet on a 50/50 splitter;
coincidences between the two outputs are histogrammed versus the
detection-time difference tau.

Closed forms used throughout (K = G1*G2/(G1+G2), gT = 1/t2a + 1/t2b,
D = detuning difference, M = mode overlap):

    C_perp(tau) = (1/4) K (exp(-G1|tau|) + exp(-G2|tau|))
    C_par(tau)  = C_perp(tau) - (M/2) K exp(-gT|tau|) cos(D tau)

scaled by the product of efficiencies. Multi-photon residuals and
background/dark counts enter as uniform accidental levels.

All functions are pure; inputs are immutable parameter records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .params import DetectorParams, EmitterParams, SetupParams

GHZ_TO_PER_PS = 1e-3  # 1 GHz = 1e-3 cycles per ps

# Grid-adequacy bounds (relative to the fastest timescale involved).
GRID_SPACING_T2_FACTOR = 10.0
GRID_SPACING_IRF_FACTOR = 8.0


class ValueWithError(NamedTuple):
    """A scalar measurement with its 1-sigma uncertainty."""

    value: float
    sigma: float


@dataclass(frozen=True)
class CorrelationCurve:
    """Analytic coincidence density on a uniform tau grid."""

    tau: np.ndarray  # ps, strictly increasing, uniform spacing
    density: np.ndarray  # coincidences per ps, >= 0
    label: str  # "parallel" | "orthogonal"

    def __post_init__(self) -> None:
        tau = np.asarray(self.tau, dtype=float)
        density = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "density", density)
        if tau.ndim != 1 or tau.size < 2:
            raise ValueError("tau grid must be a 1-d array of length >= 2")
        if density.shape != tau.shape:
            raise ValueError("density must have the same shape as tau")
        steps = np.diff(tau)
        if np.any(steps <= 0):
            raise ValueError("tau grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ValueError("tau grid must be uniformly spaced")
        if np.any(density < -1e-12 * max(density.max(initial=0.0), 1.0)):
            raise ValueError("density must be non-negative")

    @property
    def spacing(self) -> float:
        return float(self.tau[1] - self.tau[0])

    def area(self) -> float:
        """Total integrated density (trapezoidal)."""
        return float(np.trapezoid(self.density, self.tau))


@dataclass(frozen=True)
class PeakAreas:
    """Integrated correlation peak areas with Poisson uncertainties."""

    a_center: float
    side_areas: np.ndarray
    label: str = "orthogonal"

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "side_areas", np.asarray(self.side_areas, dtype=float)
        )
        if self.a_center < 0 or np.any(self.side_areas < 0):
            raise ValueError("peak areas must be non-negative")
        if self.side_areas.size == 0:
            raise ValueError("at least one side peak area is required")

    @property
    def a_center_sigma(self) -> float:
        return math.sqrt(self.a_center)

    @property
    def side_sigmas(self) -> np.ndarray:
        return np.sqrt(self.side_areas)

    @property
    def b_side_mean(self) -> float:
        return float(self.side_areas.mean())

    @property
    def b_side_mean_sigma(self) -> float:
        return math.sqrt(float(self.side_areas.sum())) / self.side_areas.size


def pure_dephasing_rate(e: EmitterParams) -> float:
    """Excess coherence decay gamma* = 1/t2 - 1/(2*t1), per ps.

    Zero for a lifetime-limited emitter; EmitterParams rejects negative
    values (t2 > 2*t1) at construction, so the result is clamped at the
    tolerance floor.
    """
    rate = 1.0 / e.t2 - 1.0 / (2.0 * e.t1)
    return max(rate, 0.0)


def t2_from_linewidth(fwhm_ghz: float) -> float:
    """Coherence time in ps from a Lorentzian linewidth FWHM in GHz."""
    if fwhm_ghz <= 0:
        raise ValueError(f"linewidth must be > 0, got {fwhm_ghz}")
    return 1.0 / (math.pi * fwhm_ghz * GHZ_TO_PER_PS)


def linewidth_from_t2(t2_ps: float) -> float:
    """Lorentzian FWHM in GHz from a coherence time in ps."""
    if t2_ps <= 0:
        raise ValueError(f"t2 must be > 0, got {t2_ps}")
    return 1.0 / (math.pi * t2_ps * GHZ_TO_PER_PS)


def _rate_k(e1: EmitterParams, e2: EmitterParams) -> float:
    g1, g2 = e1.decay_rate, e2.decay_rate
    return g1 * g2 / (g1 + g2)


def _center_shape(
    tau: np.ndarray, e1: EmitterParams, e2: EmitterParams, setup: SetupParams
) -> np.ndarray:
    """Center-peak coincidence density without uniform offsets."""
    g1, g2 = e1.decay_rate, e2.decay_rate
    k = _rate_k(e1, e2)
    atau = np.abs(tau)
    eta = e1.efficiency * e2.efficiency
    dens = 0.25 * eta * k * (np.exp(-g1 * atau) + np.exp(-g2 * atau))
    if setup.polarization == "parallel":
        gt = 1.0 / e1.t2 + 1.0 / e2.t2
        delta = e2.detuning - e1.detuning
        dens = dens - 0.5 * eta * setup.mode_overlap * k * np.exp(
            -gt * atau
        ) * np.cos(delta * tau)
    return dens


def _pair_cross_correlation(
    tau: np.ndarray, ta: float, tb: float
) -> np.ndarray:
    """Cross-correlation of two exponential envelopes with lifetimes ta, tb.

    Density of (second emission time) - (first emission time) when the
    first photon has lifetime ta and the second tb; normalized to unit
    area, asymmetric in tau unless ta == tb.
    """
    ga, gb = 1.0 / ta, 1.0 / tb
    k = ga * gb / (ga + gb)
    return k * np.where(tau >= 0, np.exp(-gb * np.maximum(tau, 0.0)),
                        np.exp(ga * np.minimum(tau, 0.0)))


def _side_shape(
    tau: np.ndarray, e1: EmitterParams, e2: EmitterParams
) -> np.ndarray:
    """One side peak's density (no uniform offsets), tau from peak center.

    Sum over the four ordered pairings of photons from two different
    pulses; single-pairing terms are asymmetric for unequal lifetimes
    but the total is symmetric.
    """
    eta1, eta2 = e1.efficiency, e2.efficiency
    dens = (
        eta1 * eta1 * _pair_cross_correlation(tau, e1.t1, e1.t1)
        + eta1 * eta2 * _pair_cross_correlation(tau, e1.t1, e2.t1)
        + eta1 * eta2 * _pair_cross_correlation(tau, e2.t1, e1.t1)
        + eta2 * eta2 * _pair_cross_correlation(tau, e2.t1, e2.t1)
    )
    return 0.25 * dens


def ideal_side_peak_area(e1: EmitterParams, e2: EmitterParams) -> float:
    """Structural (peaked) area of one side peak, (eta1+eta2)^2 / 4."""
    return 0.25 * (e1.efficiency + e2.efficiency) ** 2


def multiphoton_level(
    e1: EmitterParams, e2: EmitterParams, setup: SetupParams
) -> float:
    """Uniform accidental density from multi-photon residuals, per ps.

    Extra photons are uncorrelated with the pulse train, so every pair
    involving one contributes a flat coincidence density: with per-pulse
    primary mean Ep and extra mean Ee, the level is
    (2*Ee*Ep + Ee^2) / (4 * rep_period).
    """
    ep = e1.efficiency + e2.efficiency
    ee = e1.extra_photon_probability + e2.extra_photon_probability
    return (2.0 * ee * ep + ee * ee) / (4.0 * setup.rep_period)


def background_level(
    e1: EmitterParams, e2: EmitterParams, setup: SetupParams
) -> float:
    """Uniform background density implied by setup.background_rate, per ps."""
    return (
        setup.background_rate
        * ideal_side_peak_area(e1, e2)
        / setup.rep_period
    )


def dark_count_level(
    e1: EmitterParams, e2: EmitterParams, setup: SetupParams, d: DetectorParams
) -> float:
    """Uniform accidental density from detector dark counts, per ps.

    Dark counts at rate L per ps per channel pair with every photon
    (mean m per pulse across both channels) and with each other:
    L*m + L^2 * rep_period per ps per pulse.
    """
    lam = d.dark_rate
    m = (
        e1.efficiency
        + e2.efficiency
        + e1.extra_photon_probability
        + e2.extra_photon_probability
    )
    return lam * m + lam * lam * setup.rep_period


def center_peak_density(
    tau, e1: EmitterParams, e2: EmitterParams, setup: SetupParams
) -> np.ndarray:
    """Unnormalized coincidence density of the tau=0 peak, per ps.

    Includes the multi-photon and background uniform terms; symmetric in
    tau for zero net detuning and non-negative for mode_overlap <= 1.
    """
    tau = np.asarray(tau, dtype=float)
    dens = _center_shape(tau, e1, e2, setup)
    dens = dens + multiphoton_level(e1, e2, setup) + background_level(e1, e2, setup)
    return dens


def side_peak_density(
    tau_from_peak_center, e1: EmitterParams, e2: EmitterParams, setup: SetupParams
) -> np.ndarray:
    """Coincidence density of one non-central peak, per ps."""
    tau = np.asarray(tau_from_peak_center, dtype=float)
    dens = _side_shape(tau, e1, e2)
    dens = dens + multiphoton_level(e1, e2, setup) + background_level(e1, e2, setup)
    return dens


def make_tau_grid(tau_max: float, spacing: float) -> np.ndarray:
    """Symmetric uniform grid over [-tau_max, tau_max] containing tau=0."""
    if spacing <= 0:
        raise ValueError(f"grid spacing must be > 0, got {spacing}")
    n = int(round(tau_max / spacing))
    if n < 1:
        raise ValueError("grid must contain at least one step on each side")
    return np.arange(-n, n + 1, dtype=float) * spacing


def full_correlation(
    e1: EmitterParams,
    e2: EmitterParams,
    setup: SetupParams,
    tau_max: float,
    spacing: float,
    n_side_peaks: int = 3,
) -> CorrelationCurve:
    """Center peak plus side peaks at multiples of the repetition period.

    The grid must cover at least (n_side_peaks + 1/2) repetition periods
    on each side, and the spacing must resolve the interference dip
    (spacing <= min(t2)/10).
    """
    if n_side_peaks < 0:
        raise ValueError("n_side_peaks must be >= 0")
    t2_min = min(e1.t2, e2.t2)
    if spacing > t2_min / GRID_SPACING_T2_FACTOR:
        raise ValueError(
            f"grid spacing {spacing} ps too coarse: must be <= min(t2)/"
            f"{GRID_SPACING_T2_FACTOR:g} = {t2_min / GRID_SPACING_T2_FACTOR:g} ps"
        )
    required = (n_side_peaks + 0.5) * setup.rep_period
    if tau_max < required:
        raise ValueError(
            f"tau_max {tau_max} ps must cover at least "
            f"(n_side_peaks + 1/2) * rep_period = {required} ps"
        )
    tau = make_tau_grid(tau_max, spacing)
    dens = _center_shape(tau, e1, e2, setup)
    for k in range(1, n_side_peaks + 1):
        dens = dens + _side_shape(tau - k * setup.rep_period, e1, e2)
        dens = dens + _side_shape(tau + k * setup.rep_period, e1, e2)
    dens = dens + multiphoton_level(e1, e2, setup) + background_level(e1, e2, setup)
    return CorrelationCurve(tau, dens, setup.polarization)


def irf_pair_kernel(d: DetectorParams, spacing: float) -> np.ndarray:
    """Discrete two-detector time-difference response, unit total mass.

    The pairwise response is the single-detector IRF convolved with its
    time reverse. Returns a symmetric odd-length kernel sampled on the
    given grid spacing.
    """
    if d.irf_shape == "delta":
        return np.array([1.0])
    if spacing > d.combined_fwhm / GRID_SPACING_IRF_FACTOR:
        raise ValueError(
            f"grid spacing {spacing} ps undersamples the IRF: must be <= "
            f"combined_fwhm/{GRID_SPACING_IRF_FACTOR:g} = "
            f"{d.combined_fwhm / GRID_SPACING_IRF_FACTOR:g} ps"
        )
    if d.irf_shape == "gaussian":
        sigma = d.combined_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        half = int(math.ceil(6.0 * sigma / spacing))
        x = np.arange(-half, half + 1) * spacing
        kern = np.exp(-0.5 * (x / sigma) ** 2)
    else:  # two_sided_exponential per detector, self-convolved
        a = d.irf_fwhm / (2.0 * math.log(2.0))
        half = int(math.ceil(20.0 * a / spacing))
        x = np.abs(np.arange(-half, half + 1) * spacing)
        kern = (1.0 + x / a) * np.exp(-x / a)
    return kern / kern.sum()


def convolve_with_irf(curve: CorrelationCurve, d: DetectorParams) -> CorrelationCurve:
    """Convolve a correlation curve with the two-detector response.

    Mass-preserving for curves that decay to their uniform floor well
    inside the grid; a delta response returns the input unchanged.
    """
    if d.irf_shape == "delta":
        return curve
    kern = irf_pair_kernel(d, curve.spacing)
    # Pad with edge values so the uniform background level is preserved
    # at the grid boundaries.
    half = kern.size // 2
    padded = np.concatenate(
        [np.full(half, curve.density[0]), curve.density, np.full(half, curve.density[-1])]
    )
    dens = np.convolve(padded, kern, mode="valid")
    return CorrelationCurve(curve.tau, dens, curve.label)


def binned_expected_density(
    e1: EmitterParams,
    e2: EmitterParams,
    setup: SetupParams,
    d: DetectorParams,
    bin_centers: np.ndarray,
    bin_width: float,
    n_side_peaks: int = 3,
) -> np.ndarray:
    """Expected histogram density per bin: the analytic curve evaluated on
    a fine grid, convolved with the detector pair response, plus the dark
    count accidental level, averaged over each bin.

    The result is a density (per ps per pulse); scale by total counts to
    compare with a measured CorrelationHistogram.
    """
    fine = min(e1.t2, e2.t2) / (2.0 * GRID_SPACING_T2_FACTOR)
    if d.irf_shape != "delta":
        fine = min(fine, d.combined_fwhm / (2.0 * GRID_SPACING_IRF_FACTOR))
    fine = bin_width / max(int(math.ceil(bin_width / fine)), 1)
    tau_max = max(
        float(np.abs(bin_centers).max()) + bin_width,
        (n_side_peaks + 0.5) * setup.rep_period,
    )
    curve = full_correlation(e1, e2, setup, tau_max, fine, n_side_peaks)
    curve = convolve_with_irf(curve, d)
    dens = curve.density + dark_count_level(e1, e2, setup, d)
    half = bin_width / 2.0
    out = np.empty(len(bin_centers))
    for i, c in enumerate(np.asarray(bin_centers, dtype=float)):
        mask = np.abs(curve.tau - c) <= half * (1.0 + 1e-12)
        out[i] = dens[mask].mean()
    return out


def coalescence_probability(
    areas_perp: PeakAreas, areas_par: PeakAreas
) -> ValueWithError:
    """Pc = (A_perp - A_par) / A_perp with propagated Poisson error.

    May be negative for noisy input; reported as-is.
    """
    a_perp = areas_perp.a_center
    a_par = areas_par.a_center
    if a_perp <= 0:
        raise ValueError("orthogonal center-peak area must be > 0")
    pc = (a_perp - a_par) / a_perp
    sigma = math.sqrt(
        (a_par / a_perp**2) ** 2 * areas_perp.a_center_sigma**2
        + (1.0 / a_perp) ** 2 * areas_par.a_center_sigma**2
    )
    return ValueWithError(pc, sigma)


def postselected_coalescence(
    curve_perp: CorrelationCurve, curve_par: CorrelationCurve, window: float
) -> float:
    """P'c from curve values within +-window/2 of tau = 0.

    A window of one grid step reproduces the tau=0 point evaluation.
    """
    if curve_perp.tau.shape != curve_par.tau.shape or not np.allclose(
        curve_perp.tau, curve_par.tau
    ):
        raise ValueError("curves must share an identical tau grid")
    if window < curve_perp.spacing:
        raise ValueError(
            f"window {window} ps must be at least one grid step "
            f"({curve_perp.spacing} ps)"
        )
    mask = np.abs(curve_perp.tau) <= window / 2.0 * (1.0 + 1e-12)
    g_perp = float(curve_perp.density[mask].sum())
    g_par = float(curve_par.density[mask].sum())
    if g_perp <= 0:
        raise ValueError("orthogonal curve is zero within the window")
    return (g_perp - g_par) / g_perp


def coincidence_ratio(areas_par: PeakAreas) -> ValueWithError:
    """A_par / B with propagated Poisson error; B is the side-peak mean."""
    b = areas_par.b_side_mean
    if b <= 0:
        raise ValueError("mean side-peak area must be > 0")
    a = areas_par.a_center
    ratio = a / b
    sigma = math.sqrt(
        (areas_par.a_center_sigma / b) ** 2
        + (a / b**2) ** 2 * areas_par.b_side_mean_sigma**2
    )
    return ValueWithError(ratio, sigma)


def max_coalescence(e1: EmitterParams, e2: EmitterParams) -> float:
    """Closed-form upper bound on Pc for perfect overlap and no noise.

    Pc_max = 2 * [G1 G2 / (G1 + G2)] * gT / (gT^2 + D^2) with
    gT = 1/t2a + 1/t2b and D the detuning difference; equals the area
    deficit of the parallel center peak relative to orthogonal.
    """
    k = _rate_k(e1, e2)
    gt = 1.0 / e1.t2 + 1.0 / e2.t2
    delta = e2.detuning - e1.detuning
    return 2.0 * k * gt / (gt * gt + delta * delta)
