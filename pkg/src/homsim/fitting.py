"""Parameter extraction from spectra and fluorescence decay curves.

Spectral lines are fit with a Lorentzian convolved with the spectrometer
response (Lorentzian response by default, so FWHMs add; Gaussian response
evaluates a Voigt profile). Decay curves are fit with a single or
biexponential model convolved with the detector IRF (closed-form
exponentially-modified Gaussian for a Gaussian IRF).

Optimization: coarse grid scan over the nonlinear shape parameters with
linear amplitudes solved exactly, then Nelder-Mead refinement. All fits
are deterministic given the data and initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .params import DetectorParams

MAX_ITERATIONS = 10_000
OBJECTIVE_RTOL = 1e-10

MODELS = ("lorentzian", "single_exp", "biexp")


@dataclass(frozen=True)
class SampledCurve:
    """Measured curve: x in GHz for spectra, ps for decays."""

    x: np.ndarray
    y: np.ndarray
    y_err: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError("x and y must be 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        if np.any(y < 0):
            raise ValueError("y must be non-negative")
        if self.y_err is not None:
            err = np.asarray(self.y_err, dtype=float)
            object.__setattr__(self, "y_err", err)
            if err.shape != x.shape:
                raise ValueError("y_err must match x in length")
            if np.any(err < 0):
                raise ValueError("y_err must be non-negative")

    def weights(self) -> np.ndarray:
        """Chi-square weights: provided errors, else Poisson for counts."""
        if self.y_err is not None:
            err = np.where(self.y_err > 0, self.y_err, 1.0)
            return 1.0 / err**2
        counts_like = np.allclose(self.y, np.rint(self.y), atol=1e-9)
        if counts_like and self.y.max(initial=0.0) > 0:
            return 1.0 / np.maximum(self.y, 1.0)
        return np.ones_like(self.y)


@dataclass(frozen=True)
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    goodness: float  # reduced chi-square
    converged: bool
    degenerate: bool = False
    n_points: int = 0
    param_order: tuple = field(default_factory=tuple)

    def values(self) -> np.ndarray:
        return np.array([self.params[k] for k in self.param_order])


class FitError(RuntimeError):
    """Raised when a fit cannot converge or the data is degenerate."""


def lorentzian_profile(x, center, fwhm):
    """Unit-area Lorentzian."""
    hw = fwhm / 2.0
    return hw / (math.pi * ((x - center) ** 2 + hw * hw))


def _line_model(x, center, fwhm, area, offset, instrument_fwhm, instrument_shape):
    if fwhm <= 0:
        return None
    if instrument_fwhm <= 0:
        return offset + area * lorentzian_profile(x, center, fwhm)
    if instrument_shape == "lorentzian":
        return offset + area * lorentzian_profile(x, center, fwhm + instrument_fwhm)
    # Gaussian instrument: Voigt profile.
    sigma = instrument_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return offset + area * special.voigt_profile(x - center, sigma, fwhm / 2.0)


def exp_decay_irf(t, lifetime, irf_fwhm, irf_shape):
    """Unit-area exponential decay convolved with a single-detector IRF."""
    t = np.asarray(t, dtype=float)
    if lifetime <= 0:
        raise ValueError("lifetime must be > 0")
    if irf_fwhm == 0.0 or irf_shape == "delta":
        return np.where(t >= 0, np.exp(-np.maximum(t, 0.0) / lifetime) / lifetime, 0.0)
    if irf_shape == "gaussian":
        sigma = irf_fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        z = (sigma / lifetime - t / sigma) / math.sqrt(2.0)
        out = np.empty_like(t)
        pos = z >= 0
        out[pos] = (
            np.exp(-0.5 * (t[pos] / sigma) ** 2) * special.erfcx(z[pos])
        ) / (2.0 * lifetime)
        out[~pos] = (
            np.exp(0.5 * (sigma / lifetime) ** 2 - t[~pos] / lifetime)
            * special.erfc(z[~pos])
        ) / (2.0 * lifetime)
        return out
    # Two-sided exponential IRF: closed-form piecewise convolution.
    a = irf_fwhm / (2.0 * math.log(2.0))
    g = 1.0 / lifetime
    b = 1.0 / a
    if abs(g - b) < 1e-12 * g:
        b = g * (1.0 + 1e-9)
    # integral of (b/2) e^(-b|s|) * g e^(-g(t-s)) over s <= t
    pre = 0.5 * g * b
    neg = pre * np.exp(np.minimum(t, 0.0) * b) / (g + b)
    pos_t = np.maximum(t, 0.0)
    pos = pre * np.exp(-g * pos_t) * (
        1.0 / (g + b) + (1.0 - np.exp(-(b - g) * pos_t)) / (b - g)
    )
    return np.where(t < 0, neg, pos)


def _decay_model(t, params, model, irf_fwhm, irf_shape):
    if model == "single_exp":
        amp, lifetime, t0, offset = params
        if amp < 0 or lifetime <= 0:
            return None
        return offset + amp * exp_decay_irf(t - t0, lifetime, irf_fwhm, irf_shape)
    amp, fast, slow, frac, t0, offset = params
    if amp < 0 or fast <= 0 or slow <= 0 or not 0.0 <= frac <= 1.0:
        return None
    shape = (1.0 - frac) * exp_decay_irf(t - t0, fast, irf_fwhm, irf_shape)
    shape = shape + frac * exp_decay_irf(t - t0, slow, irf_fwhm, irf_shape)
    return offset + amp * shape


def _chi2(y, w, model_y):
    if model_y is None or not np.all(np.isfinite(model_y)):
        return float("inf")
    r = y - model_y
    return float(np.sum(w * r * r))


def _refine(objective, x0):
    """Nelder-Mead refinement with a convergence restart."""
    best = None
    x = np.asarray(x0, dtype=float)
    for _ in range(3):
        res = optimize.minimize(
            objective,
            x,
            method="Nelder-Mead",
            options={
                "maxiter": MAX_ITERATIONS,
                "maxfev": MAX_ITERATIONS,
                "xatol": 1e-12,
                "fatol": OBJECTIVE_RTOL * (1.0 + abs(objective(x))),
                "adaptive": True,
            },
        )
        if best is not None and best.fun > 0 and (
            best.fun - res.fun
        ) < OBJECTIVE_RTOL * best.fun:
            best = res if res.fun < best.fun else best
            break
        if best is None or res.fun < best.fun:
            best = res
        x = res.x
    return best


def fit_lorentzian(
    s: SampledCurve,
    instrument_fwhm: float = 0.0,
    instrument_shape: str = "lorentzian",
) -> FitResult:
    """Fit center, intrinsic FWHM, area, offset of an instrument-broadened
    Lorentzian line; x and widths in GHz."""
    if s.x.size < 5:
        raise FitError("need at least 5 points spanning the line")
    if s.y.max() - s.y.min() <= 0:
        raise FitError("degenerate data: zero variance")
    w = s.weights()
    offset0 = float(s.y.min())
    i_max = int(np.argmax(s.y))
    center0 = float(s.x[i_max])
    half = offset0 + 0.5 * (s.y[i_max] - offset0)
    above = s.x[s.y >= half]
    fwhm_tot0 = max(float(above[-1] - above[0]), float(np.diff(s.x).min()))
    fwhm0 = max(fwhm_tot0 - instrument_fwhm, 0.2 * fwhm_tot0)
    area0 = float(np.trapezoid(s.y - offset0, s.x))

    def objective(p):
        return _chi2(
            s.y, w, _line_model(s.x, p[0], p[1], p[2], p[3], instrument_fwhm, instrument_shape)
        )

    res = _refine(objective, [center0, fwhm0, area0, offset0])
    if not np.isfinite(res.fun):
        raise FitError("Lorentzian fit failed to converge")
    order = ("center", "fwhm", "area", "offset")
    params = dict(zip(order, (float(v) for v in res.x)))
    fr = FitResult(
        model="lorentzian",
        params=params,
        uncertainties={},
        goodness=res.fun / max(s.x.size - len(order), 1),
        converged=bool(res.fun < float("inf")),
        n_points=s.x.size,
        param_order=order,
    )
    return _with_uncertainties(
        fr, s, lambda p: _line_model(s.x, *p, instrument_fwhm, instrument_shape)
    )


def _tail_lifetime(x, y, offset):
    """Log-linear regression on the decaying tail."""
    i_max = int(np.argmax(y))
    xs, ys = x[i_max:], y[i_max:] - offset
    keep = ys > max(ys.max(initial=0.0) * 1e-3, 0.0)
    xs, ys = xs[keep], ys[keep]
    if xs.size < 3:
        return float(x[-1] - x[i_max]) / 3.0 or 1.0
    slope = np.polyfit(xs, np.log(ys), 1)[0]
    return -1.0 / slope if slope < 0 else float(xs[-1] - xs[0])


def _solve_linear_amplitudes(y, w, shapes):
    """Least-squares amplitudes for a model linear in its components."""
    a = np.column_stack(shapes + [np.ones_like(y)])
    aw = a * w[:, None]
    coef, *_ = np.linalg.lstsq(aw.T @ a, aw.T @ y, rcond=None)
    return coef


def fit_decay(
    s: SampledCurve, model: str, d: DetectorParams
) -> FitResult:
    """Fit an IRF-convolved exponential or biexponential decay; x in ps.

    single_exp params: amplitude, lifetime, t0, offset.
    biexp params: amplitude, fast_lifetime, slow_lifetime, slow_fraction,
    t0, offset (lifetimes collapsing within 1% is reported degenerate).
    """
    if model not in ("single_exp", "biexp"):
        raise ValueError(f"model must be single_exp or biexp, got {model!r}")
    if s.x.size < 10:
        raise FitError("need at least 10 points")
    w = s.weights()
    irf_fwhm, irf_shape = d.irf_fwhm, d.irf_shape

    offset0 = float(np.percentile(s.y, 5))
    tau0 = _tail_lifetime(s.x, s.y, offset0)
    i_rise = int(np.argmax(s.y >= 0.5 * s.y.max()))
    t00 = float(s.x[i_rise]) - irf_fwhm

    # Coarse grid over lifetimes with amplitudes solved linearly.
    best = (float("inf"), None)
    taus = tau0 * np.logspace(-0.8, 0.8, 9)
    if model == "single_exp":
        for tau in taus:
            shape = exp_decay_irf(s.x - t00, tau, irf_fwhm, irf_shape)
            amp, off = _solve_linear_amplitudes(s.y, w, [shape])
            p = [max(amp, 0.0), tau, t00, off]
            c = _chi2(s.y, w, _decay_model(s.x, p, model, irf_fwhm, irf_shape))
            if c < best[0]:
                best = (c, p)
    else:
        for tf in taus:
            for ts_mult in (3.0, 6.0, 12.0, 25.0):
                ts = tf * ts_mult
                sh_f = exp_decay_irf(s.x - t00, tf, irf_fwhm, irf_shape)
                sh_s = exp_decay_irf(s.x - t00, ts, irf_fwhm, irf_shape)
                af, as_, off = _solve_linear_amplitudes(s.y, w, [sh_f, sh_s])
                af, as_ = max(af, 0.0), max(as_, 0.0)
                amp = af + as_
                frac = as_ / amp if amp > 0 else 0.0
                p = [amp, tf, ts, frac, t00, off]
                c = _chi2(s.y, w, _decay_model(s.x, p, model, irf_fwhm, irf_shape))
                if c < best[0]:
                    best = (c, p)
    if best[1] is None:
        raise FitError("decay grid scan found no valid model")

    def objective(p):
        return _chi2(s.y, w, _decay_model(s.x, p, model, irf_fwhm, irf_shape))

    res = _refine(objective, best[1])
    if not np.isfinite(res.fun):
        raise FitError("decay fit failed to converge")
    if model == "single_exp":
        order = ("amplitude", "lifetime", "t0", "offset")
        degenerate = False
    else:
        order = ("amplitude", "fast_lifetime", "slow_lifetime", "slow_fraction", "t0", "offset")
        degenerate = abs(res.x[2] - res.x[1]) < 0.01 * max(res.x[1], res.x[2])
    params = dict(zip(order, (float(v) for v in res.x)))
    fr = FitResult(
        model=model,
        params=params,
        uncertainties={},
        goodness=res.fun / max(s.x.size - len(order), 1),
        converged=True,
        degenerate=degenerate,
        n_points=s.x.size,
        param_order=order,
    )
    return _with_uncertainties(
        fr, s, lambda p: _decay_model(s.x, p, model, irf_fwhm, irf_shape)
    )


def uncertainty(
    fr: FitResult,
    s: SampledCurve,
    model_fn,
    method: str = "curvature",
    n_boot: int = 200,
    seed: int = 0,
) -> dict:
    """Per-parameter 1-sigma errors for a converged fit.

    curvature: Gauss-Newton covariance (J^T W J)^-1 from a numerical
    Jacobian, scaled by the residual variance for unweighted data.
    bootstrap: Poisson/gaussian resampling with short refits.
    """
    if not fr.converged:
        raise FitError("uncertainty requires a converged fit")
    p0 = fr.values()
    if method == "bootstrap":
        rng = np.random.default_rng(seed)
        w = s.weights()
        samples = []
        for _ in range(n_boot):
            if s.y_err is not None:
                y = np.maximum(s.y + rng.normal(0.0, s.y_err), 0.0)
            else:
                y = rng.poisson(np.maximum(s.y, 0.0)).astype(float)

            def obj(p, y=y):
                return _chi2(y, w, model_fn(p))

            res = optimize.minimize(
                obj, p0, method="Nelder-Mead",
                options={"maxiter": 2000, "xatol": 1e-10, "fatol": 1e-12},
            )
            samples.append(res.x)
        sig = np.std(np.array(samples), axis=0, ddof=1)
        return dict(zip(fr.param_order, (float(v) for v in sig)))

    w = s.weights()
    f0 = model_fn(p0)
    jac = np.empty((s.x.size, p0.size))
    for j in range(p0.size):
        h = 1e-6 * max(abs(p0[j]), 1e-12)
        pp = p0.copy()
        pp[j] += h
        fp = model_fn(pp)
        pm = p0.copy()
        pm[j] -= h
        fm = model_fn(pm)
        if fm is None:
            jac[:, j] = (fp - f0) / h
        else:
            jac[:, j] = (fp - fm) / (2.0 * h)
    jtj = jac.T @ (jac * w[:, None])
    try:
        cov = np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        return {k: float("inf") for k in fr.param_order}
    if s.y_err is None and not np.allclose(s.y, np.rint(s.y), atol=1e-9):
        dof = max(s.x.size - p0.size, 1)
        cov = cov * float(np.sum(w * (s.y - f0) ** 2)) / dof
    diag = np.diag(cov)
    sig = np.sqrt(np.where(diag > 0, diag, np.inf))
    return dict(zip(fr.param_order, (float(v) for v in sig)))


def _with_uncertainties(fr: FitResult, s: SampledCurve, model_fn) -> FitResult:
    try:
        unc = uncertainty(fr, s, model_fn)
    except FitError:
        unc = {k: float("inf") for k in fr.param_order}
    return FitResult(
        model=fr.model,
        params=fr.params,
        uncertainties=unc,
        goodness=fr.goodness,
        converged=fr.converged,
        degenerate=fr.degenerate,
        n_points=fr.n_points,
        param_order=fr.param_order,
    )
