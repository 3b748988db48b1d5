import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ucadoa.array_model import Direction
from ucadoa.covariance import partial_from_exact
from ucadoa.estimators import SpectrumFn, fit_mpm, mpm_spectrum
from ucadoa.signal_sim import NoiseModel, SourceModel, exact_covariance
from ucadoa.spectrum import ScanGrid, SpectrumGrid, find_peaks, refine_peak, scan, write_spectrum_csv


@pytest.fixture
def mpm_fn(exact_noiseless, geom):
    return mpm_spectrum(fit_mpm(partial_from_exact(exact_noiseless, 3)), geom)


def bump(center_theta, center_phi, width=0.05):
    """exp(-d^2/w^2): log-power is an exact quadratic in each axis."""
    def f(d):
        dp = (d.azimuth - center_phi + math.pi) % (2 * math.pi) - math.pi
        return math.exp(-((d.elevation - center_theta) ** 2 + dp ** 2) / width ** 2)
    return f


class TestGrid:
    def test_default_nodes(self):
        g = ScanGrid()
        assert g.n_theta == 91 and g.n_phi == 360 and g.periodic
        assert g.thetas[-1] == pytest.approx(math.pi / 2)

    def test_half_degree(self):
        g = ScanGrid.from_degrees(0.5)
        assert g.n_theta == 181 and g.n_phi == 720

    def test_invalid(self):
        with pytest.raises(ValueError):
            ScanGrid(0.0, 0.1)
        with pytest.raises(ValueError):
            ScanGrid.from_degrees(60.0)


class TestScan:
    def test_constant(self):
        sg = scan(lambda d: 3.0, ScanGrid.from_degrees(10.0))
        assert np.all(sg.values == 3.0)

    def test_argmax_on_grid(self, mpm_fn):
        sg = scan(mpm_fn, ScanGrid())
        assert sg.argmax().degrees == pytest.approx((15.0, 20.0), abs=1e-9)

    def test_half_degree_argmax(self, mpm_fn):
        sg = scan(mpm_fn, ScanGrid.from_degrees(0.5))
        assert sg.argmax().degrees == pytest.approx((15.0, 20.0), abs=1e-9)

    def test_parallel_bit_identical(self, mpm_fn):
        a = scan(mpm_fn, ScanGrid())
        b = scan(mpm_fn, ScanGrid(), workers=4)
        assert np.array_equal(a.values, b.values)

    def test_matches_pointwise(self, mpm_fn):
        g = ScanGrid.from_degrees(10.0)
        sg = scan(mpm_fn, g)
        for i, j in [(0, 0), (3, 7), (9, 35)]:
            assert sg.values[i, j] == pytest.approx(mpm_fn(g.node(i, j)), rel=1e-9)

    def test_csv_format(self, mpm_fn, tmp_path):
        sg = scan(mpm_fn, ScanGrid())
        path = tmp_path / "s.csv"
        write_spectrum_csv(sg, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "theta_deg,phi_deg,power"
        assert len(lines) == 1 + 91 * 360
        assert lines[1].startswith("0.000000,0.000000,")
        assert lines[2].startswith("0.000000,1.000000,")
        rows = [ln.split(",") for ln in lines[1:]]
        best = max(rows, key=lambda r: float(r[2]))
        assert best[:2] == ["15.000000", "20.000000"]
        mant = best[2].split("e")[0]
        assert len(mant.replace(".", "").lstrip("-")) == 9


class TestPeaks:
    def test_top_peaks_are_truth(self, mpm_fn):
        peaks = find_peaks(scan(mpm_fn, ScanGrid()), 3)
        got = {tuple(round(v, 6) for v in p.direction.degrees) for p in peaks}
        assert got == {(15.0, 20.0), (30.0, 44.0), (66.0, 69.0)}
        powers = [p.power for p in peaks]
        assert powers == sorted(powers, reverse=True)

    def test_single_source(self, geom):
        src = SourceModel((Direction.from_degrees(40, 123),))
        r = exact_covariance(geom, src, NoiseModel(), noise_variance=0.0)
        fn = mpm_spectrum(fit_mpm(partial_from_exact(r, 1)), geom)
        top = find_peaks(scan(fn, ScanGrid()), 1)[0]
        assert top.direction.degrees == pytest.approx((40.0, 123.0), abs=1e-9)

    def test_flat(self):
        sg = SpectrumGrid(np.ones((91, 360)), ScanGrid())
        assert find_peaks(sg, 3) == []

    def test_wraparound_peak_once(self):
        g = ScanGrid.from_degrees(1.0)
        sg = scan(bump(math.radians(40), 0.0), g)
        peaks = find_peaks(sg, 5)
        assert len(peaks) == 1
        assert peaks[0].phi_index == 0 and peaks[0].theta_index == 40

    def test_fewer_than_requested(self):
        sg = scan(bump(math.radians(40), 1.0), ScanGrid.from_degrees(2.0))
        assert len(find_peaks(sg, 4)) == 1

    def test_zero_elevation_flag(self):
        v = np.ones((91, 360))
        v[0, :] = 0.5
        v[0, 10] = 2.0
        peaks = find_peaks(SpectrumGrid(v, ScanGrid()), 1)
        assert peaks[0].azimuth_indeterminate

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from([np.log, np.sqrt, lambda v: v ** 3, lambda v: 2 * v + 7]))
    def test_monotone_relabeling(self, f):
        rng = np.random.default_rng(3)
        v = rng.uniform(1, 2, size=(20, 36))
        g = ScanGrid.from_degrees(90 / 19, 10.0)
        a = find_peaks(SpectrumGrid(v, g), 6)
        b = find_peaks(SpectrumGrid(f(v), g), 6)
        assert [(p.theta_index, p.phi_index) for p in a] == [(p.theta_index, p.phi_index) for p in b]

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            find_peaks(SpectrumGrid(np.ones((91, 360)), ScanGrid()), 0)


class TestRefine:
    def test_centered(self):
        g = ScanGrid()
        node = g.node(30, 50)
        out = refine_peak(bump(node.elevation, node.azimuth), node, g)
        assert out.elevation == pytest.approx(node.elevation, abs=1e-12)
        assert out.azimuth == pytest.approx(node.azimuth, abs=1e-12)

    def test_half_step(self):
        g = ScanGrid()
        node = g.node(30, 50)
        h = g.theta_step
        out = refine_peak(bump(node.elevation + h / 2, node.azimuth + h / 2), node, g)
        assert out.elevation - node.elevation == pytest.approx(h / 2, rel=0.1)
        assert out.azimuth - node.azimuth == pytest.approx(h / 2, rel=0.1)

    def test_boundary_clamped(self):
        g = ScanGrid()
        node = g.node(90, 10)
        out = refine_peak(bump(math.pi / 2 + 0.01, node.azimuth), node, g)
        assert 0 <= out.elevation <= math.pi / 2

    def test_wraps_azimuth(self):
        g = ScanGrid()
        node = g.node(30, 0)
        out = refine_peak(bump(node.elevation, -g.phi_step / 3), node, g)
        assert 2 * math.pi - g.phi_step / 2 <= out.azimuth < 2 * math.pi

    def test_spectrum_fn_refinement(self, geom, dirs):
        d = Direction.from_degrees(30.4, 44.3)
        src = SourceModel((d,))
        r = exact_covariance(geom, src, NoiseModel(), noise_variance=0.0)
        fn = mpm_spectrum(fit_mpm(partial_from_exact(r, 1)), geom)
        g = ScanGrid()
        out = refine_peak(fn, g.node(30, 44), g)
        assert abs(math.degrees(out.elevation) - 30.4) < 0.2
        assert abs(math.degrees(out.azimuth) - 44.3) < 0.2

    def test_degenerate_curvature(self):
        g = ScanGrid()
        node = g.node(20, 20)
        assert refine_peak(lambda d: 1.0, node, g) == node
