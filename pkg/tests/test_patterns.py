import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfeval.patterns import (
    Direction,
    MagneticDipolePattern,
    PortSet,
    SampledPattern,
    cupola_port_set,
    evaluate,
    fourier_pattern,
    fourier_port_set,
    load_pattern_file,
    magnetic_dipole_pattern,
    monopole_pattern,
    parse_port_spec,
    sample_port_set,
    save_pattern_file,
)

theta_st = st.floats(0.0, 180.0)
phi_st = st.floats(0.0, 359.999)


class TestDirection:
    def test_phi_wraps(self):
        assert Direction(10, 370).phi == pytest.approx(10)
        assert Direction(10, -90).phi == pytest.approx(270)

    @pytest.mark.parametrize("theta", [-1.0, 180.5, float("nan")])
    def test_bad_theta(self, theta):
        with pytest.raises(ValueError):
            Direction(theta, 0)


class TestFourier:
    @pytest.mark.parametrize(
        "p, phi, expected",
        [(0, 123.0, 1 + 0j), (1, 90.0, 1j), (2, 45.0, 1j), (1, 180.0, -1 + 0j)],
    )
    def test_examples(self, p, phi, expected):
        e_t, e_p = evaluate(fourier_pattern(p), Direction(37.0, phi))
        assert abs(e_t - expected) < 1e-12
        assert e_p == 0

    def test_negative_order(self):
        with pytest.raises(ValueError):
            fourier_pattern(-1)

    @given(st.integers(0, 8), theta_st, phi_st)
    def test_unit_modulus(self, p, theta, phi):
        e_t, e_p = fourier_pattern(p).evaluate(theta, phi)
        assert abs(abs(e_t) - 1.0) < 1e-12
        assert e_p == 0

    @given(st.integers(0, 6), st.integers(0, 6), phi_st)
    def test_relative_phase(self, p, q, phi):
        a = fourier_pattern(p).evaluate(45.0, phi)[0]
        b = fourier_pattern(q).evaluate(45.0, phi)[0]
        got = cmath.phase(a * np.conj(b))
        want = (p - q) * math.radians(phi)
        diff = (got - want + math.pi) % (2 * math.pi) - math.pi
        assert abs(diff) < 1e-9


class TestFourierPortSet:
    def test_orders(self):
        assert [pat.order for pat in fourier_port_set(3).patterns] == [0, 1, 2]
        assert [pat.order for pat in fourier_port_set(2).patterns] == [0, 1]

    def test_too_small(self):
        with pytest.raises(ValueError):
            fourier_port_set(1)

    def test_ports_linearly_independent(self):
        # Gram matrix of the port functions sampled over azimuth has full rank.
        phi = np.linspace(0, 360, 73)[:-1]
        S = fourier_port_set(3).steering_matrix(np.full_like(phi, 60.0), phi)
        gram = S.conj().T @ S
        assert np.linalg.matrix_rank(gram, tol=1e-9) == 3
        # pairwise: every 2x2 sub-Gram is non-singular
        for i in range(3):
            for j in range(i + 1, 3):
                sub = gram[np.ix_([i, j], [i, j])]
                assert abs(np.linalg.det(sub)) > 1e-6


class TestMonopole:
    def test_examples(self):
        m = monopole_pattern()
        assert abs(abs(evaluate(m, (90, 17))[0]) - 1) < 1e-12
        assert evaluate(m, (0, 0))[0] == 0
        assert abs(abs(evaluate(m, (30, 200))[0]) - 0.5) < 1e-12

    @given(theta_st, phi_st, phi_st)
    def test_omnidirectional(self, theta, a, b):
        m = monopole_pattern()
        assert m.evaluate(theta, a)[0] == pytest.approx(m.evaluate(theta, b)[0], abs=1e-15)


def _dipole_oracle(axis, theta, phi):
    # direct formula: E ~ r_hat x m, projected on theta_hat / phi_hat
    t, p = math.radians(theta), math.radians(phi)
    r = np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])
    th = np.array([math.cos(t) * math.cos(p), math.cos(t) * math.sin(p), -math.sin(t)])
    ph = np.array([-math.sin(p), math.cos(p), 0.0])
    e = np.cross(r, np.asarray(axis, float))
    return th @ e, ph @ e


class TestMagneticDipole:
    @given(theta_st, phi_st, st.floats(0, 2 * math.pi))
    @settings(max_examples=50)
    def test_matches_cross_product_formula(self, theta, phi, ang):
        axis = (math.cos(ang), math.sin(ang), 0.0)
        e_t, e_p = magnetic_dipole_pattern(axis).evaluate(theta, phi)
        o_t, o_p = _dipole_oracle(axis, theta, phi)
        assert e_t == pytest.approx(o_t, abs=1e-12)
        assert e_p == pytest.approx(o_p, abs=1e-12)

    def test_peak_broadside_to_moment(self):
        # Moment along +x radiates E_theta maximally towards phi = 90 deg and
        # has a null along its own axis.
        px = magnetic_dipole_pattern("x")
        assert abs(evaluate(px, (90, 90))[0]) == pytest.approx(1.0)
        assert abs(evaluate(px, (90, 0))[0]) < 1e-12
        py = magnetic_dipole_pattern("y")
        assert abs(evaluate(py, (90, 0))[0]) == pytest.approx(1.0)

    def test_peak_magnitude_is_one(self):
        phi = np.linspace(0, 360, 721)
        theta = np.linspace(0, 90, 91)
        tt, pp = np.meshgrid(theta, phi)
        e_t = magnetic_dipole_pattern("x").evaluate(tt, pp)[0]
        assert np.max(np.abs(e_t)) == pytest.approx(1.0, abs=1e-12)

    @given(st.floats(0, 90), phi_st)
    def test_rotation_symmetry(self, theta, phi):
        a = magnetic_dipole_pattern("x").evaluate(theta, phi)[0]
        b = magnetic_dipole_pattern("y").evaluate(theta, phi + 90.0)[0]
        assert a == pytest.approx(b, abs=1e-12)

    @pytest.mark.parametrize("axis", ["z", (0, 0, 1), (1, 1, 0), (0.6, 0.0, 0.8)])
    def test_bad_axis(self, axis):
        with pytest.raises(ValueError):
            MagneticDipolePattern(axis)


def _lattice_pattern():
    theta = np.array([0.0, 10.0, 20.0])
    phi = np.arange(0.0, 360.0, 30.0)
    rng = np.random.default_rng(3)
    e_t = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
    e_p = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
    return SampledPattern(theta, phi, e_t, e_p)


class TestSampled:
    def test_exact_on_nodes(self):
        pat = _lattice_pattern()
        tt, pp = np.meshgrid(pat.theta_deg, pat.phi_deg, indexing="ij")
        e_t, e_p = pat.evaluate(tt, pp)
        np.testing.assert_array_equal(e_t, pat.e_theta)
        np.testing.assert_array_equal(e_p, pat.e_phi)

    def test_midpoint_is_mean_of_corners(self):
        pat = _lattice_pattern()
        e_t, _ = pat.evaluate(5.0, 45.0)
        want = pat.e_theta[0:2, 1:3].mean()
        assert abs(e_t - want) < 1e-12

    def test_azimuth_wraps(self):
        pat = _lattice_pattern()
        e_t, _ = pat.evaluate(15.0, 345.0)
        want = pat.e_theta[1:3][:, [11, 0]].mean()
        assert abs(e_t - want) < 1e-12

    def test_outside_theta_range(self):
        with pytest.raises(ValueError, match="outside sampled theta range"):
            _lattice_pattern().evaluate(25.0, 0.0)

    def test_partial_phi_range(self):
        theta = [0.0, 10.0]
        phi = [0.0, 10.0, 20.0]
        pat = SampledPattern(theta, phi, np.ones((2, 3)), np.zeros((2, 3)))
        assert not pat.full_circle
        assert pat.evaluate(5.0, 15.0)[0] == pytest.approx(1.0)
        with pytest.raises(ValueError):
            pat.evaluate(5.0, 30.0)

    def test_inconsistent_steps(self):
        with pytest.raises(ValueError, match="inconsistent"):
            SampledPattern([0, 10, 25], [0, 180], np.ones((3, 2)), np.ones((3, 2)))

    def test_non_finite(self):
        e = np.ones((2, 2))
        e[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            SampledPattern([0, 10], [0, 180], e, np.ones((2, 2)))

    @given(st.floats(0, 20), st.floats(0, 359.99))
    def test_magnitude_interpolation_bounded(self, theta, phi):
        pat = _lattice_pattern()
        mag = np.abs(pat.e_theta)
        i = min(int(theta // 10), 1)
        j = int(phi // 30) % 12
        corners = mag[np.ix_([i, i + 1], [j, (j + 1) % 12])]
        got = pat.interpolate_magnitude(theta, phi)
        assert corners.min() - 1e-12 <= got <= corners.max() + 1e-12


class TestPortSet:
    def test_needs_two_ports(self):
        with pytest.raises(ValueError):
            PortSet((monopole_pattern(),))

    def test_lattice_mismatch(self):
        a = SampledPattern([0, 10], [0, 180], np.ones((2, 2)), np.ones((2, 2)))
        b = SampledPattern([0, 5], [0, 180], np.ones((2, 2)), np.ones((2, 2)))
        with pytest.raises(ValueError, match="identical lattice"):
            PortSet((a, b))

    def test_steering_matrix_shape(self):
        S = cupola_port_set().steering_matrix([10, 20, 30], [0, 90, 180])
        assert S.shape == (3, 3)

    def test_parse_spec(self):
        assert parse_port_spec("fourier:4").n_ports == 4
        assert parse_port_spec("cupola-analytic").n_ports == 3
        with pytest.raises(ValueError):
            parse_port_spec("triangle")


class TestPatternFile:
    def test_round_trip(self, tmp_path):
        ports = sample_port_set(cupola_port_set(), 5.0)
        path = tmp_path / "p.csv"
        save_pattern_file(ports, path, comments=["made by test"])
        back = load_pattern_file(path, port_count=3)
        assert back.n_ports == 3
        for a, b in zip(ports.patterns, back.patterns):
            np.testing.assert_array_equal(a.e_theta, b.e_theta)
            np.testing.assert_array_equal(a.e_phi, b.e_phi)
            assert a.same_lattice(b)
        assert back.patterns[0].theta_step == pytest.approx(5.0)
        assert back.patterns[0].full_circle

    def test_header_and_sorting(self, tmp_path):
        path = tmp_path / "p.csv"
        save_pattern_file(sample_port_set(fourier_port_set(2), 45.0), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "port,theta_deg,phi_deg,re_etheta,im_etheta,re_ephi,im_ephi"
        keys = [tuple(float(v) for v in ln.split(",")[:3]) for ln in lines[1:]]
        assert keys == sorted(keys)
        assert len(keys) == 2 * 3 * 8

    def test_missing_row(self, tmp_path):
        path = tmp_path / "p.csv"
        save_pattern_file(sample_port_set(fourier_port_set(3), 30.0), path)
        lines = path.read_text().splitlines()
        del lines[7]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="incomplete lattice"):
            load_pattern_file(path)

    def test_nan_entry(self, tmp_path):
        path = tmp_path / "p.csv"
        save_pattern_file(sample_port_set(fourier_port_set(3), 30.0), path)
        lines = path.read_text().splitlines()
        cells = lines[4].split(",")
        cells[3] = "nan"
        lines[4] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="non-finite sample"):
            load_pattern_file(path)

    def test_inconsistent_steps(self, tmp_path):
        path = tmp_path / "p.csv"
        rows = ["port,theta_deg,phi_deg,re_etheta,im_etheta,re_ephi,im_ephi"]
        for port in (0, 1):
            for t in (0, 10, 25):
                for p in (0, 180):
                    rows.append(f"{port},{t},{p},1,0,0,0")
        path.write_text("\n".join(rows) + "\n")
        with pytest.raises(ValueError, match="inconsistent"):
            load_pattern_file(path)

    def test_port_count_mismatch(self, tmp_path):
        path = tmp_path / "p.csv"
        save_pattern_file(sample_port_set(fourier_port_set(3), 30.0), path)
        with pytest.raises(ValueError, match="expected 2 ports"):
            load_pattern_file(path, port_count=2)

    def test_sampled_matches_analytic_off_node_within_interp_error(self, tmp_path):
        path = tmp_path / "p.csv"
        save_pattern_file(sample_port_set(cupola_port_set(), 1.0), path)
        ports = load_pattern_file(path)
        S = ports.steering_matrix([33.3, 71.1], [12.7, 301.4])
        ref = cupola_port_set().steering_matrix([33.3, 71.1], [12.7, 301.4])
        assert np.max(np.abs(S - ref)) < 1e-3
