"""Post-processing of track-style DoA observations.

A track is a time series of true directions (from the intruder position) and
either recorded steering vectors or already estimated directions. Processing
follows the usual flight-test order: estimate, remove the constant azimuth
offset, then summarise errors overall and per elevation bin.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_directions
from .estimator import MusicDoaEstimator
from .evaluation import rmse, write_csv
from .geometry import azimuth_error, equiangular_grid, wrap_angle
from .patterns import Direction

logger = logging.getLogger(__name__)

DEFAULT_BIN_EDGES = tuple(float(v) for v in range(0, 91, 10))
BOX_COLUMNS = ("bin_lo_deg", "bin_hi_deg", "quantity", "count", "median", "q1", "q3",
               "whisker_lo", "whisker_hi", "n_outliers")


@dataclass(frozen=True, eq=False)
class TrackSample:
    timestamp: float
    true_doa: Direction
    observation: object  # ndarray steering vector or Direction


def load_track_file(path):
    """Read a track CSV. Returns ``(mode, n_ports, samples)``.

    The first non-blank line must be a ``#mode=estimated|steering,P=<n>`` comment.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines or not lines[0].lstrip().startswith("#"):
        raise ValueError(f"{path}: missing '#mode=...' header comment")
    meta = {}
    for part in lines[0].lstrip()[1:].split(","):
        key, _, val = part.partition("=")
        meta[key.strip().lower()] = val.strip()
    mode = meta.get("mode")
    if mode not in ("estimated", "steering"):
        raise ValueError(f"{path}: header must declare mode=estimated or mode=steering")
    n_ports = None
    if mode == "steering":
        try:
            n_ports = int(meta["p"])
        except (KeyError, ValueError):
            raise ValueError(f"{path}: steering tracks must declare P=<n> in the header") from None
        if n_ports < 2:
            raise ValueError(f"{path}: P must be >= 2")

    body = [ln for ln in lines[1:] if not ln.lstrip().startswith("#")]
    reader = csv.DictReader(body)
    cols = ["timestamp", "true_theta_deg", "true_phi_deg"]
    if mode == "estimated":
        cols += ["est_theta_deg", "est_phi_deg"]
    else:
        for p in range(1, n_ports + 1):
            cols += [f"re_x{p}", f"im_x{p}"]
    missing = set(cols) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")

    samples = []
    for lineno, row in enumerate(reader, start=3):
        try:
            vals = [float(row[c]) for c in cols]
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed row {lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"{path}: non-finite value in row {lineno}")
        true = Direction(vals[1], vals[2])
        if mode == "estimated":
            obs = Direction(vals[3], vals[4])
        else:
            obs = np.array(vals[3::2]) + 1j * np.array(vals[4::2])
        samples.append(TrackSample(vals[0], true, obs))
    if not samples:
        raise ValueError(f"{path}: track has no samples")
    _check_timestamps(samples)
    return mode, n_ports, samples


def write_track_file(path, samples):
    """Write samples in the track CSV layout (mode inferred from the observations)."""
    steering = not isinstance(samples[0].observation, Direction)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if steering:
            n = len(samples[0].observation)
            fh.write(f"#mode=steering,P={n}\n")
            head = ["timestamp", "true_theta_deg", "true_phi_deg"]
            for p in range(1, n + 1):
                head += [f"re_x{p}", f"im_x{p}"]
        else:
            fh.write("#mode=estimated\n")
            head = ["timestamp", "true_theta_deg", "true_phi_deg", "est_theta_deg", "est_phi_deg"]
        writer.writerow(head)
        for s in samples:
            row = [repr(float(s.timestamp)), repr(s.true_doa.theta), repr(s.true_doa.phi)]
            if steering:
                for v in np.asarray(s.observation, dtype=complex):
                    row += [repr(float(v.real)), repr(float(v.imag))]
            else:
                row += [repr(s.observation.theta), repr(s.observation.phi)]
            writer.writerow(row)


def _check_timestamps(samples):
    ts = np.array([s.timestamp for s in samples])
    if np.any(np.diff(ts) <= 0):
        raise ValueError("track timestamps must be strictly increasing")


def replay_track(samples, ports=None, candidate_grid=None, estimator=None):
    """Estimate every steering-vector observation; pass estimated ones through.

    Returns a list of ``(true_doa, estimated_doa)`` pairs of :class:`Direction`.
    The default search grid is the 5 degree equiangular lattice.
    """
    _check_timestamps(samples)
    needs = [i for i, s in enumerate(samples) if not isinstance(s.observation, Direction)]
    estimates = {}
    if needs:
        if estimator is None:
            if ports is None:
                raise ValueError("steering-vector observations need a port set")
            grid = candidate_grid if candidate_grid is not None else equiangular_grid(5.0)
            estimator = MusicDoaEstimator().fit_ports(ports, grid)
        X = np.stack([np.asarray(samples[i].observation, dtype=complex) for i in needs])
        for i, d in zip(needs, estimator.predict(X)):
            estimates[i] = Direction(*d)
    return [(s.true_doa, estimates.get(i, s.observation)) for i, s in enumerate(samples)]


def _pair_arrays(pairs):
    if len(pairs) == 0:
        raise ValueError("no track samples")
    true = np.array([[t.theta, t.phi] for t, _ in pairs], dtype=float)
    est = np.array([[e.theta, e.phi] for _, e in pairs], dtype=float)
    return true, est


def circular_mean_deg(angles_deg):
    """Circular mean in degrees, wrapped into (-180, 180]."""
    a = np.radians(np.asarray(angles_deg, dtype=float))
    s, c = np.mean(np.sin(a)), np.mean(np.cos(a))
    if math.hypot(s, c) < 1e-12:
        raise ValueError("circular mean is undefined (resultant vector vanishes)")
    return wrap_angle(math.degrees(math.atan2(s, c)))


class AzimuthOffsetCorrector(TransformerMixin, BaseEstimator):
    """Learns the circular-mean azimuth error and removes it from estimates.

    ``fit(X, y)`` takes estimated directions ``X`` and true directions ``y``
    as ``(n, 2)`` arrays of (theta, phi) degrees; ``transform`` subtracts the
    learned ``offset_`` from the estimated azimuths.
    """

    def fit(self, X, y):
        X = check_directions(X, name="estimated directions")
        y = check_directions(y, name="true directions")
        if X.shape != y.shape:
            raise ValueError("estimated and true directions must have equal length")
        self.offset_ = circular_mean_deg(azimuth_error(X[:, 1], y[:, 1]))
        return self

    def transform(self, X):
        if not hasattr(self, "offset_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("AzimuthOffsetCorrector is not fitted yet")
        X = check_directions(X, name="estimated directions")
        out = X.copy()
        out[:, 1] = np.mod(X[:, 1] - self.offset_, 360.0)
        out[out[:, 1] >= 360.0, 1] = 0.0
        return out


def apply_azimuth_offset(pairs):
    """Remove the circular-mean azimuth error; returns ``(corrected_pairs, offset_deg)``."""
    true, est = _pair_arrays(pairs)
    corr = AzimuthOffsetCorrector().fit(est, true)
    fixed = corr.transform(est)
    out = [(t, Direction(*f)) for (t, _), f in zip(pairs, fixed)]
    return out, corr.offset_


def box_stats(values):
    """Median, quartiles (linear interpolation), 1.5 IQR whiskers and outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return {"count": 0, "median": None, "q1": None, "q3": None,
                "whisker_lo": None, "whisker_hi": None, "outliers": []}
    q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {
        "count": int(v.size),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "whisker_lo": float(inside.min()),
        "whisker_hi": float(inside.max()),
        "outliers": [float(x) for x in v[(v < lo_fence) | (v > hi_fence)]],
    }


def elevation_binned_boxplots(pairs, bin_edges_deg=DEFAULT_BIN_EDGES):
    """Box-plot statistics of absolute azimuth/elevation errors per true-theta bin.

    Bins are half-open ``[lo, hi)`` except the last, which includes ``hi``.
    """
    edges = np.asarray(bin_edges_deg, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly ascending")
    if edges[0] < 0 or edges[-1] > 90:
        raise ValueError("bin edges must lie within [0, 90] degrees")
    true, est = _pair_arrays(pairs)
    az = np.abs(azimuth_error(est[:, 1], true[:, 1]))
    el = np.abs(est[:, 0] - true[:, 0])
    bins = []
    for b, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        last = b == edges.size - 2
        sel = (true[:, 0] >= lo) & ((true[:, 0] <= hi) if last else (true[:, 0] < hi))
        bins.append({
            "bin_lo_deg": float(lo),
            "bin_hi_deg": float(hi),
            "count": int(np.count_nonzero(sel)),
            "azimuth": box_stats(az[sel]),
            "elevation": box_stats(el[sel]),
        })
    return bins


@dataclass(eq=False)
class TrackReport:
    azimuth_errors: np.ndarray
    elevation_errors: np.ndarray
    outlier_threshold_deg: float
    excluded_fraction: float
    rmse_az_raw: float
    rmse_el_raw: float
    median_az_raw: float
    median_el_raw: float
    rmse_az_filtered: float | None
    median_az_filtered: float | None
    filtered_note: str | None = None
    offset_deg: float | None = None
    boxplots: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "config": self.config,
            "n_samples": int(self.azimuth_errors.size),
            "azimuth_offset_deg": self.offset_deg,
            "outlier_threshold_deg": self.outlier_threshold_deg,
            "excluded_fraction": self.excluded_fraction,
            "rmse_az_raw_deg": self.rmse_az_raw,
            "rmse_el_raw_deg": self.rmse_el_raw,
            "median_az_raw_deg": self.median_az_raw,
            "median_el_raw_deg": self.median_el_raw,
            "rmse_az_filtered_deg": self.rmse_az_filtered,
            "median_az_filtered_deg": self.median_az_filtered,
            "filtered_note": self.filtered_note,
            "mean_az_error_deg": circular_mean_or_none(self.azimuth_errors),
            "elevation_bins": self.boxplots,
        }

    def bins_to_csv(self, path):
        rows = []
        for b in self.boxplots:
            for q in ("azimuth", "elevation"):
                s = b[q]
                rows.append((b["bin_lo_deg"], b["bin_hi_deg"], q, s["count"], s["median"],
                             s["q1"], s["q3"], s["whisker_lo"], s["whisker_hi"],
                             len(s["outliers"])))
        write_csv(path, BOX_COLUMNS, ([("" if v is None else v) for v in r] for r in rows),
                  self.config)


def circular_mean_or_none(errors):
    try:
        return circular_mean_deg(errors)
    except ValueError:
        return None


def filtered_stats(pairs, azimuth_outlier_threshold=90.0):
    """Raw and outlier-filtered error statistics of a track.

    Azimuth errors with magnitude above the threshold are excluded from the
    filtered azimuth RMSE; elevation statistics are always raw.
    """
    true, est = _pair_arrays(pairs)
    az = azimuth_error(est[:, 1], true[:, 1])
    el = est[:, 0] - true[:, 0]
    az = np.atleast_1d(az)
    outlier = np.abs(az) > azimuth_outlier_threshold
    kept = az[~outlier]
    note = None
    if kept.size:
        rmse_f = rmse(kept)
        med_f = float(np.median(np.abs(kept)))
    else:
        rmse_f = med_f = None
        note = "all samples excluded"
    return TrackReport(
        azimuth_errors=az,
        elevation_errors=el,
        outlier_threshold_deg=float(azimuth_outlier_threshold),
        excluded_fraction=np.count_nonzero(outlier) / az.size,
        rmse_az_raw=rmse(az),
        rmse_el_raw=rmse(el),
        median_az_raw=float(np.median(np.abs(az))),
        median_el_raw=float(np.median(np.abs(el))),
        rmse_az_filtered=rmse_f,
        median_az_filtered=med_f,
        filtered_note=note,
    )


def process_track(samples, ports=None, candidate_grid=None, outlier_threshold=90.0,
                  bin_edges=DEFAULT_BIN_EDGES, correct_offset=True):
    """Full replay pipeline: estimate, offset correction, statistics, box plots."""
    pairs = replay_track(samples, ports, candidate_grid)
    offset = None
    if correct_offset:
        pairs, offset = apply_azimuth_offset(pairs)
    report = filtered_stats(pairs, outlier_threshold)
    report.offset_deg = offset
    report.boxplots = elevation_binned_boxplots(pairs, bin_edges)
    return report
