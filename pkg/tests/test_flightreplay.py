import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.exceptions import NotFittedError

from dfeval.estimator import steering_vector
from dfeval.flightreplay import (
    AzimuthOffsetCorrector,
    TrackSample,
    apply_azimuth_offset,
    box_stats,
    circular_mean_deg,
    elevation_binned_boxplots,
    filtered_stats,
    load_track_file,
    process_track,
    replay_track,
    write_track_file,
)
from dfeval.geometry import azimuth_error, equiangular_grid
from dfeval.patterns import Direction, cupola_port_set


def pairs_from_errors(az_err, el_err=None, true_phi=100.0, true_theta=45.0):
    az_err = np.asarray(az_err, float)
    el_err = np.zeros_like(az_err) if el_err is None else np.asarray(el_err, float)
    return [
        (Direction(true_theta, true_phi), Direction(true_theta + e_el, true_phi + e_az))
        for e_az, e_el in zip(az_err, el_err)
    ]


def az_errors(pairs):
    return np.array([azimuth_error(e.phi, t.phi) for t, e in pairs])


def outlier_population(n=10_000, frac=0.015, inlier_rmse=11.6, raw_rmse=20.4, seed=0):
    # inliers scaled to an exact RMSE, outliers placed at the magnitude that
    # makes the pooled RMSE equal raw_rmse
    n_out = round(n * frac)
    rng = np.random.default_rng(seed)
    inl = rng.standard_normal(n - n_out)
    inl *= inlier_rmse / math.sqrt(np.mean(inl**2))
    m = math.sqrt((raw_rmse**2 - (1 - frac) * inlier_rmse**2) / frac)
    out = np.where(np.arange(n_out) % 2 == 0, m, -m)
    return np.concatenate([inl, out]), m


class TestOffset:
    def test_constant_offset(self):
        pairs = pairs_from_errors(np.full(20, 8.6))
        fixed, off = apply_azimuth_offset(pairs)
        assert off == pytest.approx(8.6, abs=1e-12)
        np.testing.assert_allclose(az_errors(fixed), 0, atol=1e-9)

    def test_zero_mean_unchanged(self):
        pairs = pairs_from_errors([5.0, -5.0, 12.0, -12.0])
        fixed, off = apply_azimuth_offset(pairs)
        assert off == pytest.approx(0, abs=1e-12)
        for (_, a), (_, b) in zip(pairs, fixed):
            assert a.phi == pytest.approx(b.phi, abs=1e-9)

    def test_wrap_around_pair(self):
        errs = [170.0, -170.0]
        assert np.mean(errs) == 0.0  # linear mean hides the offset
        assert abs(circular_mean_deg(errs)) == pytest.approx(180.0)
        fixed, off = apply_azimuth_offset(pairs_from_errors(errs))
        assert abs(off) == pytest.approx(180.0)
        np.testing.assert_allclose(np.sort(az_errors(fixed)), [-10, 10], atol=1e-9)

    def test_empty(self):
        with pytest.raises(ValueError):
            apply_azimuth_offset([])

    @given(
        st.lists(st.floats(-179, 179), min_size=1, max_size=40),
        st.floats(0, 359.9),
    )
    @settings(max_examples=80, deadline=None)
    def test_corrected_circular_mean_zero(self, errs, phi0):
        errs = np.asarray(errs)
        a = np.radians(errs)
        if math.hypot(np.mean(np.sin(a)), np.mean(np.cos(a))) < 1e-6:
            return  # resultant vanishes, mean undefined
        fixed, _ = apply_azimuth_offset(pairs_from_errors(errs, true_phi=phi0))
        assert abs(circular_mean_deg(az_errors(fixed))) <= 1e-9

    def test_transformer_api(self):
        est = np.array([[40, 10.0], [50, 20.0]])
        true = np.array([[40, 0.0], [50, 10.0]])
        c = AzimuthOffsetCorrector().fit(est, true)
        assert c.offset_ == pytest.approx(10.0)
        np.testing.assert_allclose(c.transform(est), true, atol=1e-12)
        np.testing.assert_allclose(AzimuthOffsetCorrector().fit_transform(est, true), true, atol=1e-12)
        with pytest.raises(NotFittedError):
            AzimuthOffsetCorrector().transform(est)


class TestFilteredStats:
    def test_raw_versus_filtered_construction(self):
        errs, m = outlier_population()
        assert m == pytest.approx(137.5, abs=0.1)
        rep = filtered_stats(pairs_from_errors(errs))
        assert rep.rmse_az_raw == pytest.approx(20.4, abs=0.1)
        assert rep.rmse_az_filtered == pytest.approx(11.6, abs=0.1)
        assert rep.excluded_fraction == pytest.approx(0.015, abs=0.001)

    def test_outliers_at_170_do_not_give_20_4(self):
        # the literal 170 deg placement yields a larger pooled RMSE
        raw = math.sqrt(0.985 * 11.6**2 + 0.015 * 170**2)
        assert raw == pytest.approx(23.79, abs=0.01)

    def test_all_zero(self):
        rep = filtered_stats(pairs_from_errors(np.zeros(10)))
        assert rep.rmse_az_raw == rep.rmse_el_raw == 0
        assert rep.median_az_raw == rep.median_el_raw == 0
        assert rep.rmse_az_filtered == 0 and rep.excluded_fraction == 0

    def test_all_excluded(self):
        rep = filtered_stats(pairs_from_errors([100.0]))
        assert rep.excluded_fraction == 1.0
        assert rep.rmse_az_filtered is None
        assert rep.filtered_note == "all samples excluded"

    @given(st.lists(st.floats(-179, 179), min_size=1, max_size=60), st.floats(1, 170))
    @settings(max_examples=80, deadline=None)
    def test_fraction_exact_and_filter_shrinks(self, errs, thr):
        rep = filtered_stats(pairs_from_errors(errs), thr)
        measured = az_errors(pairs_from_errors(errs))
        assert rep.excluded_fraction == np.count_nonzero(np.abs(measured) > thr) / len(errs)
        assert 0 <= rep.excluded_fraction <= 1
        if rep.rmse_az_filtered is not None and rep.excluded_fraction > 0:
            assert rep.rmse_az_filtered <= rep.rmse_az_raw + 1e-12


class TestBoxStats:
    def test_small_population(self):
        s = box_stats([1, 2, 3, 4, 100])
        assert (s["q1"], s["median"], s["q3"]) == (2.0, 3.0, 4.0)
        assert s["outliers"] == [100.0]
        assert s["whisker_lo"] == 1.0 and s["whisker_hi"] == 4.0

    def test_constant(self):
        s = box_stats(np.full(7, 3.3))
        assert s["q3"] - s["q1"] == 0
        assert s["outliers"] == []

    def test_empty(self):
        assert box_stats([])["count"] == 0

    def test_gaussian_outlier_rate(self):
        x = np.random.default_rng(42).standard_normal(10_000)
        frac = len(box_stats(x)["outliers"]) / x.size
        assert abs(frac - 0.007) <= 0.005

    def test_binning(self):
        pairs = [
            (Direction(t, 10.0), Direction(t + 1.0, 12.0))
            for t in (0.0, 5.0, 9.99, 10.0, 45.0, 90.0)
        ]
        bins = elevation_binned_boxplots(pairs)
        counts = [b["count"] for b in bins]
        assert counts == [3, 1, 0, 0, 1, 0, 0, 0, 1]
        assert bins[0]["azimuth"]["median"] == pytest.approx(2.0)
        assert bins[2]["azimuth"]["median"] is None

    def test_bad_edges(self):
        with pytest.raises(ValueError):
            elevation_binned_boxplots(pairs_from_errors([1.0]), [0, 50, 40])
        with pytest.raises(ValueError):
            elevation_binned_boxplots(pairs_from_errors([1.0]), [0, 100])


def _steering_track(ports, dirs, t0=0.0):
    return [
        TrackSample(t0 + i, Direction(*d), steering_vector(ports, d))
        for i, d in enumerate(dirs)
    ]


class TestReplay:
    def test_noise_free_on_grid(self):
        ports = cupola_port_set()
        grid = equiangular_grid(5)
        dirs = [(30.0, 45.0), (60.0, 200.0), (85.0, 355.0), (5.0, 90.0)]
        pairs = replay_track(_steering_track(ports, dirs), ports)
        for t, e in pairs:
            assert (t.theta, t.phi) == (e.theta, e.phi)
        assert len(grid) == 1297

    def test_estimates_on_lattice(self):
        ports = cupola_port_set()
        dirs = [(33.3, 47.1), (61.7, 201.2), (12.2, 300.9)]
        for _, e in replay_track(_steering_track(ports, dirs), ports):
            assert e.theta % 5 == pytest.approx(0, abs=1e-9) or e.theta % 5 == pytest.approx(5, abs=1e-9)
            assert e.phi % 5 == pytest.approx(0, abs=1e-9) or e.phi % 5 == pytest.approx(5, abs=1e-9)

    def test_pass_through(self):
        samples = [TrackSample(i, Direction(40, 10 * i), Direction(41, 10 * i + 3)) for i in range(5)]
        pairs = replay_track(samples)
        assert [(t, e) for t, e in pairs] == [(s.true_doa, s.observation) for s in samples]

    def test_timestamps_increasing(self):
        samples = [TrackSample(1.0, Direction(40, 0), Direction(40, 0)),
                   TrackSample(1.0, Direction(40, 0), Direction(40, 0))]
        with pytest.raises(ValueError, match="strictly increasing"):
            replay_track(samples)

    def test_steering_needs_ports(self):
        with pytest.raises(ValueError):
            replay_track(_steering_track(cupola_port_set(), [(30.0, 0.0)]))

    def test_process_track(self):
        samples = [TrackSample(i, Direction(40, 10 * i), Direction(40, 10 * i + 8.6)) for i in range(12)]
        rep = process_track(samples)
        assert rep.offset_deg == pytest.approx(8.6)
        assert rep.rmse_az_raw == pytest.approx(0, abs=1e-9)
        d = rep.to_dict()
        assert abs(d["mean_az_error_deg"]) <= 1e-9
        assert len(d["elevation_bins"]) == 9


class TestTrackFile:
    def test_round_trip_steering(self, tmp_path):
        ports = cupola_port_set()
        samples = _steering_track(ports, [(30.0, 45.0), (60.0, 200.0)], t0=0.5)
        write_track_file(tmp_path / "t.csv", samples)
        mode, p, back = load_track_file(tmp_path / "t.csv")
        assert (mode, p) == ("steering", 3)
        for a, b in zip(samples, back):
            assert a.timestamp == b.timestamp
            np.testing.assert_array_equal(a.observation, b.observation)

    def test_round_trip_estimated(self, tmp_path):
        samples = [TrackSample(i, Direction(40, 10 * i), Direction(41, 10 * i + 3)) for i in range(3)]
        write_track_file(tmp_path / "t.csv", samples)
        mode, p, back = load_track_file(tmp_path / "t.csv")
        assert mode == "estimated" and p is None
        assert [s.observation for s in back] == [s.observation for s in samples]

    @pytest.mark.parametrize(
        "text",
        [
            "timestamp,true_theta_deg,true_phi_deg,est_theta_deg,est_phi_deg\n0,1,2,3,4\n",
            "#mode=weird\ntimestamp,true_theta_deg,true_phi_deg\n",
            "#mode=steering\ntimestamp,true_theta_deg,true_phi_deg,re_x1,im_x1\n",
            "#mode=estimated\ntimestamp,true_theta_deg,true_phi_deg,est_theta_deg,est_phi_deg\n"
            "1,10,0,10,0\n0,10,0,10,0\n",
        ],
    )
    def test_bad_files(self, tmp_path, text):
        (tmp_path / "t.csv").write_text(text)
        with pytest.raises(ValueError):
            load_track_file(tmp_path / "t.csv")
