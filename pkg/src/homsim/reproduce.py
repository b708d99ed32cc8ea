"""Built-in reference experiment and the reproduction report.

Encodes the reference parameter set (two quantum dots: T1 = 610/950 ps,
T2 = 580/390 ps, multi-photon residuals 9%/7%, 13.14 ns repetition
period, 640 ps pairwise detector response, 95% mode overlap) and runs
the full pipeline against the published target values.

The raw-data targets (total coalescence 18.1% and coincidence ratio
0.481) depend on background and residual mode overlap that are not
published, so the interference visibility and background level are
*calibrated* to those targets; the report labels such rows "calibrated"
rather than "predicted". All other rows are predictions.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import analysis, correlation, fitting, montecarlo
from .io import AnalysisSettings, RunConfig, SimulationSettings, config_to_dict
from .params import DarkState, DetectorParams, EmitterParams, SetupParams

REP_PERIOD = 13140.0  # ps (76.1 MHz)
PAIRWISE_IRF_FWHM = 640.0  # ps, two-detector time-difference response
SPECTROMETER_FWHM_GHZ = 0.150
MODE_OVERLAP = 0.95

QD1 = EmitterParams(t1=610.0, t2=580.0, multiphoton_residual=0.09)
QD2 = EmitterParams(
    t1=950.0,
    t2=390.0,
    multiphoton_residual=0.07,
    dark_state=DarkState(slow_lifetime=4000.0, slow_fraction=0.2),
)
# The analytic interference model uses prompt single-exponential
# envelopes, so correlation runs drop QD2's dark-state component; it is
# exercised by the lifetime-fit rows.
QD1_PROMPT = QD1
QD2_PROMPT = dataclasses.replace(QD2, dark_state=None)

LINEWIDTH_QD1_GHZ = 0.55
LINEWIDTH_QD2_GHZ = 0.81

PC_TARGET = 0.181
RATIO_TARGET = 0.481

CURVE_SPACING = 30.0  # ps, fine grid for analytic curves


@dataclass(frozen=True)
class ReportRow:
    name: str
    quantity: str
    paper_value: float
    paper_sigma: float
    computed: float
    computed_sigma: float
    tol_lo: float
    tol_hi: float
    calibrated: bool = False

    @property
    def within(self) -> bool:
        return self.tol_lo <= self.computed <= self.tol_hi


@dataclass(frozen=True)
class ReproductionReport:
    rows: tuple
    seed: int
    n_pulses: int
    calibration: dict
    provenance: dict = field(default_factory=dict)

    @property
    def all_within(self) -> bool:
        return all(r.within for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "name": r.name,
                    "quantity": r.quantity,
                    "paper_value": r.paper_value,
                    "paper_sigma": r.paper_sigma,
                    "computed": r.computed,
                    "computed_sigma": r.computed_sigma,
                    "tolerance": [r.tol_lo, r.tol_hi],
                    "within_tolerance": r.within,
                    "calibrated": r.calibrated,
                }
                for r in self.rows
            ],
            "all_within_tolerance": self.all_within,
            "seed": self.seed,
            "n_pulses": self.n_pulses,
            "calibration": self.calibration,
            "provenance": self.provenance,
        }

    def table(self) -> str:
        lines = [
            f"{'quantity':38s} {'paper':>14s} {'computed':>16s} "
            f"{'tolerance':>18s} {'status':>8s}"
        ]
        for r in self.rows:
            paper = f"{r.paper_value:.4g}"
            if r.paper_sigma:
                paper += f" ± {r.paper_sigma:.2g}"
            comp = f"{r.computed:.4g}"
            if r.computed_sigma:
                comp += f" ± {r.computed_sigma:.2g}"
            tol = f"[{r.tol_lo:.4g}, {r.tol_hi:.4g}]"
            status = "pass" if r.within else "FAIL"
            tag = " (calibrated)" if r.calibrated else ""
            lines.append(
                f"{r.quantity:38s} {paper:>14s} {comp:>16s} {tol:>18s} "
                f"{status:>8s}{tag}"
            )
        return "\n".join(lines)


def _window_areas(curve: correlation.CorrelationCurve, rep_period: float) -> dict:
    """Integrated curve areas in one-period windows around each peak."""
    out = {}
    # Only windows fully covered by the grid.
    n_max = int((curve.tau[-1] + curve.spacing / 2.0 - rep_period / 2.0) // rep_period)
    for k in range(-n_max, n_max + 1):
        mask = np.abs(curve.tau - k * rep_period) <= rep_period / 2.0
        out[k] = float(curve.density[mask].sum()) * curve.spacing
    return out


def _analytic_curves(overlap: float, background: float, polarization: str):
    setup = SetupParams(
        mode_overlap=overlap,
        polarization=polarization,
        rep_period=REP_PERIOD,
        background_rate=background,
    )
    return correlation.full_correlation(
        QD1_PROMPT, QD2_PROMPT, setup,
        tau_max=3.5 * REP_PERIOD, spacing=CURVE_SPACING, n_side_peaks=3,
    )


def calibrate(pc_target: float = PC_TARGET, ratio_target: float = RATIO_TARGET) -> dict:
    """Solve (visibility, background_rate) so the analytic model hits the
    measured total coalescence and coincidence ratio."""

    def ratio_residual(bg: float) -> float:
        perp = _window_areas(_analytic_curves(1.0, bg, "orthogonal"), REP_PERIOD)
        b = np.mean([v for k, v in perp.items() if k != 0])
        return (1.0 - pc_target) * perp[0] / b - ratio_target

    background = brentq(ratio_residual, 0.0, 2.0, xtol=1e-12)
    perp = _window_areas(_analytic_curves(1.0, background, "orthogonal"), REP_PERIOD)
    par_full = _window_areas(_analytic_curves(1.0, background, "parallel"), REP_PERIOD)
    interference_area = perp[0] - par_full[0]
    visibility = pc_target * perp[0] / interference_area
    if not 0.0 < visibility <= 1.0:
        raise RuntimeError(f"calibrated visibility {visibility} is unphysical")
    return {"visibility": visibility, "background_rate": background}


def dark_rate_for_background(background_rate: float) -> float:
    """Per-channel dark-count rate realizing the calibrated uniform level."""
    beta = (
        background_rate
        * correlation.ideal_side_peak_area(QD1_PROMPT, QD2_PROMPT)
        / REP_PERIOD
    )
    m = sum(
        e.efficiency + e.extra_photon_probability for e in (QD1_PROMPT, QD2_PROMPT)
    )
    return (-m + math.sqrt(m * m + 4.0 * REP_PERIOD * beta)) / (2.0 * REP_PERIOD)


def _mc_ratio_run(
    visibility: float,
    dark_rate: float,
    polarization: str,
    n_pulses: int,
    seed: int,
    ideal: bool = False,
):
    setup = SetupParams(
        mode_overlap=visibility, polarization=polarization, rep_period=REP_PERIOD
    )
    det = DetectorParams.from_combined_fwhm(
        PAIRWISE_IRF_FWHM, "gaussian", dark_rate=dark_rate
    )
    e1, e2 = QD1_PROMPT, QD2_PROMPT
    if ideal:
        e1 = dataclasses.replace(e1, multiphoton_residual=0.0)
        e2 = dataclasses.replace(e2, multiphoton_residual=0.0)
    s3, s4 = montecarlo.generate_streams(n_pulses, e1, e2, setup, det, seed=seed)
    h = analysis.correlate(s3, s4, bin_width=256.0, max_tau=3.5 * REP_PERIOD)
    areas = analysis.integrate_peaks(h, REP_PERIOD, REP_PERIOD, label=polarization)
    return h, areas


def _decay_fit_row_data(e: EmitterParams, n_events: int, seed: int):
    """Synthesize an IRF-broadened decay histogram and fit it."""
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
    det = DetectorParams(irf_fwhm=PAIRWISE_IRF_FWHM, irf_shape="gaussian")
    times = montecarlo.sample_emission_time(e, rng, n_events)
    sigma = PAIRWISE_IRF_FWHM / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    times = times + rng.normal(0.0, sigma, n_events)
    bin_w = 25.0
    edges = np.arange(-2000.0, 20000.0 + bin_w, bin_w)
    counts, _ = np.histogram(times, edges)
    curve = fitting.SampledCurve(
        x=0.5 * (edges[:-1] + edges[1:]), y=counts.astype(float)
    )
    model = "biexp" if e.dark_state is not None else "single_exp"
    return fitting.fit_decay(curve, model, det)


def _hbt_row(e: EmitterParams, n_pulses: int, seed: int):
    src, off = montecarlo.hbt_emitter_pair(e)
    setup = SetupParams(polarization="orthogonal", rep_period=REP_PERIOD)
    det = DetectorParams.from_combined_fwhm(PAIRWISE_IRF_FWHM, "gaussian")
    s3, s4 = montecarlo.generate_streams(n_pulses, src, off, setup, det, seed=seed)
    h = analysis.correlate(s3, s4, bin_width=256.0, max_tau=3.5 * REP_PERIOD)
    return analysis.hbt_purity(h, REP_PERIOD, REP_PERIOD)


def run_report(
    n_pulses: int = 10_000_000, seed: int = 20260824, fast: bool = False
) -> ReproductionReport:
    """Run the full pipeline against the published targets.

    fast=True trims event counts for smoke testing; tolerances are
    unchanged.
    """
    if fast:
        n_pulses = min(n_pulses, 1_000_000)
    rows = []

    # Closed-form maximum coalescence probability.
    pcmax = correlation.max_coalescence(QD1_PROMPT, QD2_PROMPT)
    rows.append(ReportRow(
        "pc_max", "max coalescence probability",
        0.29, 0.0, pcmax, 0.0, 0.28, 0.31,
    ))

    # Coherence times from linewidths.
    t2_1 = correlation.t2_from_linewidth(LINEWIDTH_QD1_GHZ)
    rows.append(ReportRow(
        "t2_qd1", "T2 QD1 from 0.55 GHz line (ps)",
        580.0, 20.0, t2_1, 0.0, 560.0, 600.0,
    ))
    t2_2 = correlation.t2_from_linewidth(LINEWIDTH_QD2_GHZ)
    rows.append(ReportRow(
        "t2_qd2", "T2 QD2 from 0.81 GHz line (ps)",
        390.0, 20.0, t2_2, 0.0, 370.0, 410.0,
    ))

    # Postselected coalescence: ideal detectors at the measured overlap.
    par_ideal = _analytic_curves(MODE_OVERLAP, 0.0, "parallel")
    perp_ideal = _analytic_curves(MODE_OVERLAP, 0.0, "orthogonal")
    pc_post_ideal = correlation.postselected_coalescence(
        perp_ideal, par_ideal, window=CURVE_SPACING
    )
    rows.append(ReportRow(
        "pc_post_ideal", "postselected Pc, ideal detectors",
        0.96, 0.04, pc_post_ideal, 0.0, 0.90, 1.00,
    ))

    # Calibrated visibility/background reproducing the raw-data targets.
    cal = calibrate()
    visibility = cal["visibility"]
    background = cal["background_rate"]

    # Postselected coalescence with the 640 ps pairwise response and the
    # visibility calibrated to the total Pc.
    det_pair = DetectorParams.from_combined_fwhm(PAIRWISE_IRF_FWHM, "gaussian")
    par_cal = correlation.convolve_with_irf(
        _analytic_curves(visibility, background, "parallel"), det_pair
    )
    perp_cal = correlation.convolve_with_irf(
        _analytic_curves(visibility, background, "orthogonal"), det_pair
    )
    pc_post_det = correlation.postselected_coalescence(
        perp_cal, par_cal, window=256.0
    )
    rows.append(ReportRow(
        "pc_post_detector", "postselected Pc, 640 ps response",
        0.47, 0.06, pc_post_det, 0.0, 0.35, 0.55, calibrated=True,
    ))

    # Monte Carlo runs with calibrated background realized as dark counts.
    dark = dark_rate_for_background(background)
    h_par, areas_par = _mc_ratio_run(visibility, dark, "parallel", n_pulses, seed)
    h_perp, areas_perp = _mc_ratio_run(visibility, dark, "orthogonal", n_pulses, seed + 1)

    pc_mc = correlation.coalescence_probability(areas_perp, areas_par)
    rows.append(ReportRow(
        "pc_total", "total coalescence probability",
        0.181, 0.004, pc_mc.value, pc_mc.sigma,
        0.181 - max(0.01, 5 * pc_mc.sigma), 0.181 + max(0.01, 5 * pc_mc.sigma),
        calibrated=True,
    ))

    ratio = correlation.coincidence_ratio(areas_par)
    rows.append(ReportRow(
        "ratio_par_b", "coincidence ratio A_par/B",
        0.481, 0.002, ratio.value, ratio.sigma, 0.47, 0.50, calibrated=True,
    ))

    # Ideal (uncalibrated) orthogonal run with pure single-photon sources:
    # the classical benchmark A_perp/B = 1/2.
    h_i, areas_i = _mc_ratio_run(
        1.0, 0.0, "orthogonal", max(n_pulses // 10, 100_000), seed + 2, ideal=True
    )
    ratio_i = correlation.coincidence_ratio(areas_i)
    tol_i = max(5 * ratio_i.sigma, 0.005)
    rows.append(ReportRow(
        "ratio_perp_b_ideal", "ideal A_perp/B (single photons)",
        0.5, 0.0, ratio_i.value, ratio_i.sigma, 0.5 - tol_i, 0.5 + tol_i,
    ))

    # Lifetime fits on synthetic IRF-broadened decays.
    n_events = 300_000 if fast else 2_000_000
    fit1 = _decay_fit_row_data(QD1, n_events, seed + 3)
    rows.append(ReportRow(
        "t1_qd1", "T1 QD1 from decay fit (ps)",
        610.0, 5.0, fit1.params["lifetime"],
        fit1.uncertainties.get("lifetime", 0.0), 600.0, 620.0,
    ))
    fit2 = _decay_fit_row_data(QD2, n_events, seed + 4)
    rows.append(ReportRow(
        "t1_qd2", "T1 QD2 fast component (ps)",
        950.0, 5.0, fit2.params["fast_lifetime"],
        fit2.uncertainties.get("fast_lifetime", 0.0), 935.0, 965.0,
    ))
    rows.append(ReportRow(
        "t_dark_qd2", "QD2 dark-state spin-flip time (ps)",
        4000.0, 500.0, fit2.params["slow_lifetime"],
        fit2.uncertainties.get("slow_lifetime", 0.0), 3500.0, 4500.0,
    ))

    # HBT multi-photon residuals.
    n_hbt = max(n_pulses // 5, 200_000)
    p1 = _hbt_row(QD1_PROMPT, n_hbt, seed + 5)
    rows.append(ReportRow(
        "hbt_qd1", "HBT center-peak residual QD1",
        0.09, 0.0, p1.value, p1.sigma, 0.08, 0.10,
    ))
    p2 = _hbt_row(QD2_PROMPT, n_hbt, seed + 6)
    rows.append(ReportRow(
        "hbt_qd2", "HBT center-peak residual QD2",
        0.07, 0.0, p2.value, p2.sigma, 0.06, 0.08,
    ))

    cfg = RunConfig(
        emitters=(QD1, QD2),
        setup=SetupParams(
            mode_overlap=MODE_OVERLAP, polarization="parallel", rep_period=REP_PERIOD
        ),
        detector=DetectorParams.from_combined_fwhm(PAIRWISE_IRF_FWHM, "gaussian"),
        simulation=SimulationSettings(n_pulses=n_pulses, seed=seed),
        analysis=AnalysisSettings(),
    )
    return ReproductionReport(
        rows=tuple(rows),
        seed=seed,
        n_pulses=n_pulses,
        calibration={
            "visibility": visibility,
            "background_rate": background,
            "dark_rate_per_ps": dark,
            "note": "visibility and background are calibrated to the "
            "measured Pc and A_par/B, not predicted",
        },
        provenance={"config": config_to_dict(cfg)},
    )
