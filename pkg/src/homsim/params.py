"""Physical parameter records for emitters, interferometer setup, and detectors.

All durations are picoseconds, angular frequencies rad/ps, rates per ps.
Every type validates its invariants on construction and raises ValueError
with a field-precise message on violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

# Relative tolerance for the t2 <= 2*t1 physicality bound.
T2_BOUND_RTOL = 1e-9

POLARIZATIONS = ("parallel", "orthogonal")
IRF_SHAPES = ("gaussian", "two_sided_exponential", "delta")


def _check_unit_interval(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class DarkState:
    """Slow biexponential decay component from dark-state repopulation."""

    slow_lifetime: float  # ps
    slow_fraction: float  # probability the slow component applies

    def __post_init__(self) -> None:
        if self.slow_lifetime <= 0:
            raise ValueError(f"slow_lifetime must be > 0, got {self.slow_lifetime}")
        _check_unit_interval("slow_fraction", self.slow_fraction)


@dataclass(frozen=True)
class EmitterParams:
    """One emitter's physical description.

    t1: excited-state lifetime (sets the wavepacket duration).
    t2: coherence time (sets the interference dip width); t2 <= 2*t1.
    detuning: center-frequency offset from a common reference, rad/ps.
    efficiency: probability a pulse yields a detected photon.
    multiphoton_residual: the emitter's own g2(0) residual, i.e. the
        HBT center-peak area as a fraction of the mean side-peak area.
    dark_state: optional slow decay component (neutral excitons).
    """

    t1: float
    t2: float
    detuning: float = 0.0
    efficiency: float = 1.0
    multiphoton_residual: float = 0.0
    dark_state: Optional[DarkState] = None

    def __post_init__(self) -> None:
        if self.t1 <= 0:
            raise ValueError(f"t1 must be > 0, got {self.t1}")
        if self.t2 <= 0:
            raise ValueError(f"t2 must be > 0, got {self.t2}")
        if self.t2 > 2.0 * self.t1 * (1.0 + T2_BOUND_RTOL):
            raise ValueError(
                f"t2 must not exceed 2*t1 (pure dephasing cannot be negative); "
                f"got t2={self.t2}, 2*t1={2.0 * self.t1}"
            )
        _check_unit_interval("efficiency", self.efficiency)
        _check_unit_interval("multiphoton_residual", self.multiphoton_residual)

    @property
    def decay_rate(self) -> float:
        """Radiative decay rate 1/t1, per ps."""
        return 1.0 / self.t1

    @property
    def extra_photon_probability(self) -> float:
        """Per-pulse probability of an extra (accidental) photon.

        Chosen so that an HBT measurement of the emitter alone recovers
        multiphoton_residual as its center/side area ratio: with an extra
        photon at rate q spread uniformly over the pulse period, the
        residual is 1 - eta^2/(eta+q)^2, inverted here.
        """
        r = self.multiphoton_residual
        if r == 0.0 or self.efficiency == 0.0:
            return 0.0
        return self.efficiency * (1.0 / math.sqrt(1.0 - r) - 1.0)


@dataclass(frozen=True)
class SetupParams:
    """Interferometer and experiment description.

    mode_overlap: spatial/temporal/polarization mode overlap of the two
        inputs, as measured from classical fringe visibility; multiplies
        the two-photon interference term.
    polarization: relative polarization of the two inputs.
    rep_period: excitation laser repetition period, ps.
    background_rate: uniform accidental-coincidence level, expressed as
        counts per side-peak-area per repetition period (i.e. the flat
        density is background_rate * ideal-side-area / rep_period).
    """

    mode_overlap: float = 1.0
    polarization: str = "parallel"
    rep_period: float = 13140.0
    background_rate: float = 0.0

    def __post_init__(self) -> None:
        _check_unit_interval("mode_overlap", self.mode_overlap)
        if self.polarization not in POLARIZATIONS:
            raise ValueError(
                f"polarization must be one of {POLARIZATIONS}, got {self.polarization!r}"
            )
        if self.rep_period <= 0:
            raise ValueError(f"rep_period must be > 0, got {self.rep_period}")
        if self.background_rate < 0:
            raise ValueError(
                f"background_rate must be >= 0, got {self.background_rate}"
            )


@dataclass(frozen=True)
class DetectorParams:
    """Per-detector instrument response and dark counts.

    irf_fwhm is the FWHM of a single detector's timing response; the
    pairwise time-difference channel sees the convolution of two such
    responses (combined_fwhm).
    """

    irf_fwhm: float = 0.0
    irf_shape: str = "delta"
    dark_rate: float = 0.0  # counts per ps per channel

    def __post_init__(self) -> None:
        if self.irf_fwhm < 0:
            raise ValueError(f"irf_fwhm must be >= 0, got {self.irf_fwhm}")
        if self.irf_shape not in IRF_SHAPES:
            raise ValueError(
                f"irf_shape must be one of {IRF_SHAPES}, got {self.irf_shape!r}"
            )
        if self.irf_shape == "delta" and self.irf_fwhm != 0.0:
            raise ValueError("delta irf_shape requires irf_fwhm = 0")
        if self.irf_shape != "delta" and self.irf_fwhm == 0.0:
            raise ValueError(f"{self.irf_shape} irf_shape requires irf_fwhm > 0")
        if self.dark_rate < 0:
            raise ValueError(f"dark_rate must be >= 0, got {self.dark_rate}")

    @classmethod
    def from_combined_fwhm(
        cls, combined_fwhm: float, irf_shape: str = "gaussian", dark_rate: float = 0.0
    ) -> "DetectorParams":
        """Build from the FWHM of the pairwise time-difference response.

        For Gaussian responses the combined FWHM is sqrt(2) times the
        per-detector FWHM. Other shapes are only supported numerically,
        so this constructor accepts gaussian and delta.
        """
        if irf_shape == "delta":
            if combined_fwhm != 0.0:
                raise ValueError("delta irf_shape requires combined_fwhm = 0")
            return cls(0.0, "delta", dark_rate)
        if irf_shape != "gaussian":
            raise ValueError("from_combined_fwhm supports gaussian or delta shapes")
        return cls(combined_fwhm / math.sqrt(2.0), "gaussian", dark_rate)

    @property
    def combined_fwhm(self) -> float:
        """FWHM of the two-detector time-difference response."""
        if self.irf_shape == "delta":
            return 0.0
        if self.irf_shape == "gaussian":
            return self.irf_fwhm * math.sqrt(2.0)
        # Two-sided exponential: exact FWHM of the self-convolution
        # (1+|x|/a) e^(-|x|/a) / (4a), solved for half maximum.
        a = self.irf_fwhm / (2.0 * math.log(2.0))
        # Solve (1+u) e^(-u) = 1/2 for u = |x|/a.
        lo, hi = 0.0, 10.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if (1.0 + mid) * math.exp(-mid) > 0.5:
                lo = mid
            else:
                hi = mid
        return 2.0 * a * lo
