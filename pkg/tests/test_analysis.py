import math

import numpy as np
import pytest

from srcas import analysis
from srcas.analysis import (BoundaryOutsideBoundsError, RegionCurve, SweepGrid,
                            design_region_boundary, frequency_response, frequency_sweep,
                            peak_gain, percent_error, resonance_error)
from srcas.core import nominal_design
from srcas.small_signal import as_resonance_frequency
from srcas.steady_state import ConvergenceError


class TestSweepGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            SweepGrid(F=[1.0], Qe=[1.0], f_in=[100.0])
        with pytest.raises(ValueError):
            SweepGrid(F=[1.1], Qe=[0.0], f_in=[100.0])
        with pytest.raises(ValueError):
            SweepGrid(F=[1.1], Qe=[1.0], f_in=[60e3])

    def test_params_use_base_design(self):
        g = SweepGrid(F=[1.05], Qe=[2.0], f_in=[100.0])
        p = g.params(1.05, 2.0)
        assert p.fs == pytest.approx(1.05 * 100e3)


class TestFrequencySweep:
    def test_sorted_and_complete(self):
        grid = SweepGrid(F=[1.1, 1.01], Qe=[3.0, 1.0], f_in=[200.0, 1000.0, 3000.0])
        out = frequency_sweep(grid, "model")
        assert [(r.F, r.Qe) for r in out] == [(1.01, 1.0), (1.01, 3.0), (1.1, 1.0), (1.1, 3.0)]
        for r in out:
            assert r.ok and len(r.gain_db) == 3
            np.testing.assert_allclose(r.normalized_gain, np.abs(r.gain) / r.dc_gain)

    def test_failures_recorded_and_sweep_continues(self, monkeypatch):
        real = analysis.solve_cyclic_steady_state

        def flaky(p, *a, **k):
            if abs(p.fs - 1.05e5) < 1:
                raise ConvergenceError("no convergence after 100 iterations", 1.0)
            return real(p, *a, **k)

        monkeypatch.setattr(analysis, "solve_cyclic_steady_state", flaky)
        grid = SweepGrid(F=[1.03, 1.05], Qe=[2.0], f_in=[500.0])
        out = frequency_sweep(grid, "tf")
        assert out[0].ok and not out[1].ok
        assert "no convergence" in out[1].errors[0]
        assert np.isnan(out[1].gain_db).all()

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            frequency_response(nominal_design(1.1, 1.0), [100.0], "bogus")

    @pytest.mark.parametrize("F,Qe", [(1.01, 3.0), (1.05, 1.0), (1.1, 10.0)])
    def test_low_frequency_band_model_matches_simulation(self, F, Qe):
        p = nominal_design(F, Qe)
        f_top = as_resonance_frequency(p).hz / 3
        f = np.geomspace(100.0, f_top, 4)
        m = frequency_response(p, f, "model")
        s = frequency_response(p, f, "sim")
        db_m = 20 * np.log10(m.normalized_gain)
        db_s = 20 * np.log10(s.normalized_gain)
        np.testing.assert_allclose(db_m, db_s, atol=1.0)


class TestResonanceError:
    def test_identity(self):
        assert percent_error(1570.0, 1570.0) == 0.0

    def test_sign_convention(self):
        assert percent_error(1575.0, 1570.0) == pytest.approx(0.3175, rel=1e-3)

    def test_prototype(self, t4):
        r = resonance_error(t4, 500.0, 5000.0)
        assert r.error_pct == pytest.approx(0.32, abs=0.3)
        assert r.f_model == pytest.approx(1570, rel=0.01)


class TestPeakGain:
    def test_model_prototype(self, t4):
        pk = peak_gain(t4, "tf")
        assert pk.interior
        assert pk.gain_db == pytest.approx(44.0, abs=1.5)

    def test_no_interior_peak_reports_band_edge(self):
        pk = peak_gain(nominal_design(1.5, 10.0), "model")
        assert not pk.interior and pk.f_peak == pytest.approx(100.0)
        assert pk.normalized_gain < 1


@pytest.fixture(scope="module")
def curve():
    return design_region_boundary([0.5, 1, 2, 3, 5, 10], (1.01, 1.5), "model")


class TestRegion:
    def test_boundary_decreases_with_qe(self, curve):
        assert np.all(np.diff(curve.F) < 0)
        assert all(1.01 <= F <= 1.5 for F in curve.F)

    def test_points_above_have_sub_unity_gain(self, curve):
        rng = np.random.default_rng(3)
        for _ in range(5):
            Qe = float(np.exp(rng.uniform(math.log(0.5), math.log(10))))
            F = curve.boundary_at(Qe) + 0.01 + rng.uniform(0, 0.2)
            assert peak_gain(nominal_design(F, Qe), "model").normalized_gain < 1

    def test_points_below_exceed_unity(self, curve):
        for Qe, F in curve.points:
            assert peak_gain(nominal_design(F - 0.005, Qe), "model").normalized_gain > 1

    def test_outside_bounds(self):
        with pytest.raises(BoundaryOutsideBoundsError, match="boundary outside bounds"):
            design_region_boundary([0.5], (1.3, 1.5), "model")

    def test_interpolation(self):
        c = RegionCurve(points=((1.0, 1.2), (10.0, 1.0)), method="model", F_bounds=(1.01, 1.5))
        assert c.boundary_at(math.sqrt(10)) == pytest.approx(1.1)
