import math

import pytest
from hypothesis import given, strategies as st

from homsim.params import DarkState, DetectorParams, EmitterParams, SetupParams


class TestEmitterParams:
    def test_valid_construction(self):
        e = EmitterParams(t1=610.0, t2=580.0)
        assert e.t1 == 610.0
        assert e.t2 == 580.0
        assert e.efficiency == 1.0
        assert e.multiphoton_residual == 0.0
        assert e.dark_state is None

    def test_decay_rate(self):
        assert EmitterParams(t1=500.0, t2=400.0).decay_rate == pytest.approx(0.002)

    @pytest.mark.parametrize("t1,t2", [(0.0, 100.0), (-1.0, 100.0), (100.0, 0.0), (100.0, -5.0)])
    def test_nonpositive_times_rejected(self, t1, t2):
        with pytest.raises(ValueError):
            EmitterParams(t1=t1, t2=t2)

    def test_t2_bound(self):
        # lifetime-limited is allowed exactly
        EmitterParams(t1=500.0, t2=1000.0)
        with pytest.raises(ValueError, match="t2 must not exceed"):
            EmitterParams(t1=500.0, t2=1000.1)

    @pytest.mark.parametrize("field,value", [
        ("efficiency", -0.1), ("efficiency", 1.1),
        ("multiphoton_residual", -0.01), ("multiphoton_residual", 1.5),
    ])
    def test_unit_interval_fields(self, field, value):
        with pytest.raises(ValueError, match=field):
            EmitterParams(t1=500.0, t2=400.0, **{field: value})

    def test_extra_photon_probability_zero_cases(self):
        assert EmitterParams(t1=1.0, t2=1.0).extra_photon_probability == 0.0
        e = EmitterParams(t1=1.0, t2=1.0, efficiency=0.0, multiphoton_residual=0.5)
        assert e.extra_photon_probability == 0.0

    @given(
        r=st.floats(min_value=1e-6, max_value=0.5),
        eta=st.floats(min_value=0.05, max_value=1.0),
    )
    def test_extra_photon_probability_inverts_residual(self, r, eta):
        """The HBT center/side ratio implied by q recovers the residual.

        With primary mean eta and accidental mean q per pulse, the center
        peak carries the accidental pairs 2*eta*q + q^2 while a side peak
        carries (eta + q)^2, giving ratio 1 - eta^2/(eta+q)^2 = r.
        """
        e = EmitterParams(t1=1.0, t2=1.0, efficiency=eta, multiphoton_residual=r)
        q = e.extra_photon_probability
        ratio = 1.0 - eta**2 / (eta + q) ** 2
        assert ratio == pytest.approx(r, rel=1e-9)


class TestDarkState:
    def test_valid(self):
        ds = DarkState(slow_lifetime=4000.0, slow_fraction=0.2)
        assert ds.slow_lifetime == 4000.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            DarkState(slow_lifetime=0.0, slow_fraction=0.2)
        with pytest.raises(ValueError):
            DarkState(slow_lifetime=100.0, slow_fraction=1.2)


class TestSetupParams:
    def test_defaults(self):
        s = SetupParams()
        assert s.polarization == "parallel"
        assert s.rep_period == 13140.0

    def test_validation(self):
        with pytest.raises(ValueError, match="mode_overlap"):
            SetupParams(mode_overlap=1.2)
        with pytest.raises(ValueError, match="polarization"):
            SetupParams(polarization="diagonal")
        with pytest.raises(ValueError, match="rep_period"):
            SetupParams(rep_period=0.0)
        with pytest.raises(ValueError, match="background_rate"):
            SetupParams(background_rate=-1.0)


class TestDetectorParams:
    def test_delta_default(self):
        d = DetectorParams()
        assert d.irf_shape == "delta"
        assert d.combined_fwhm == 0.0

    def test_shape_fwhm_consistency(self):
        with pytest.raises(ValueError):
            DetectorParams(irf_fwhm=100.0, irf_shape="delta")
        with pytest.raises(ValueError):
            DetectorParams(irf_fwhm=0.0, irf_shape="gaussian")
        with pytest.raises(ValueError):
            DetectorParams(irf_fwhm=100.0, irf_shape="boxcar")

    def test_gaussian_combined_fwhm(self):
        d = DetectorParams(irf_fwhm=100.0, irf_shape="gaussian")
        assert d.combined_fwhm == pytest.approx(100.0 * math.sqrt(2.0))

    def test_from_combined_fwhm_round_trip(self):
        d = DetectorParams.from_combined_fwhm(640.0)
        assert d.combined_fwhm == pytest.approx(640.0, rel=1e-12)

    def test_two_sided_exponential_combined_fwhm(self):
        """FWHM of (1+u)e^-u/(4a) self-convolution: solves (1+u)e^-u = 1/2."""
        d = DetectorParams(irf_fwhm=200.0, irf_shape="two_sided_exponential")
        a = 200.0 / (2.0 * math.log(2.0))
        u = d.combined_fwhm / (2.0 * a)
        assert (1.0 + u) * math.exp(-u) == pytest.approx(0.5, abs=1e-9)
        # broader than a single detector's response
        assert d.combined_fwhm > 200.0

    def test_dark_rate_validation(self):
        with pytest.raises(ValueError, match="dark_rate"):
            DetectorParams(dark_rate=-1e-6)
