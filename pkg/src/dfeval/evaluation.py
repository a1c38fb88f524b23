"""Monte-Carlo evaluation of a port set with single-snapshot MUSIC.

For every true DoA the noise-free steering vector is perturbed ``trials``
times, each noisy snapshot is fed to the MUSIC grid search, and azimuth,
elevation and great-circle errors are recorded. Random streams are seeded
per DoA from ``(master_seed, doa_index)`` and consumed trial by trial, so
results do not depend on the number of worker threads.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._validation import check_positive_int, check_seed
from .estimator import DEFAULT_EPS, MusicDoaEstimator, complex_gaussian, noise_variance
from .geometry import DoaGrid, azimuth_error, great_circle_error

logger = logging.getLogger(__name__)

HISTOGRAM_QUANTITIES = ("great_circle", "azimuth", "elevation")
PER_DOA_COLUMNS = (
    "doa_index", "theta_deg", "phi_deg", "trials",
    "rmse_az", "rmse_el", "rmse_gc", "median_az", "median_el",
)


def rmse(errors):
    """Root mean square of ``errors`` (degrees)."""
    e = np.asarray(errors, dtype=float).ravel()
    if e.size == 0:
        raise ValueError("rmse of an empty error list is undefined")
    return float(np.sqrt(np.mean(e * e)))


@dataclass(eq=False)
class EvalReport:
    """Result of :func:`run_monte_carlo`.

    Per-DoA arrays are aligned with ``doa_index`` (indices into the true grid
    of the DoAs actually evaluated). ``trial_errors`` is only populated when
    the run was asked to keep per-trial results.
    """

    config: dict
    doa_index: np.ndarray
    theta_deg: np.ndarray
    phi_deg: np.ndarray
    trials: np.ndarray
    rmse_az: np.ndarray
    rmse_el: np.ndarray
    rmse_gc: np.ndarray
    median_az: np.ndarray
    median_el: np.ndarray
    median_gc: np.ndarray
    bin_edges: np.ndarray
    histograms: np.ndarray
    aggregate: dict
    skipped: list = field(default_factory=list)
    trial_errors: dict | None = None

    @property
    def normalized_histograms(self):
        return self.histograms / self.trials[:, None]

    def to_dict(self):
        return {
            "config": self.config,
            "aggregate": self.aggregate,
            "skipped_doa_indices": [int(k) for k in self.skipped],
            "n_doas": int(self.doa_index.size),
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps(self.to_dict()))

    def to_csv(self, path):
        rows = zip(
            self.doa_index, self.theta_deg, self.phi_deg, self.trials,
            self.rmse_az, self.rmse_el, self.rmse_gc, self.median_az, self.median_el,
        )
        write_csv(path, PER_DOA_COLUMNS, rows, self.config)

    def histograms_to_csv(self, path):
        lo, hi = self.bin_edges[:-1], self.bin_edges[1:]
        rows = (
            (k, lo[b], hi[b], self.histograms[i, b])
            for i, k in enumerate(self.doa_index)
            for b in range(lo.size)
        )
        write_csv(path, ("doa_index", "bin_lo_deg", "bin_hi_deg", "count"), rows, self.config)

    def trials_to_csv(self, path):
        if self.trial_errors is None:
            raise ValueError("per-trial errors were not kept; rerun with keep_trials=True")
        te = self.trial_errors
        rows = (
            (k, t, te["est_theta"][i, t], te["est_phi"][i, t],
             te["azimuth"][i, t], te["elevation"][i, t], te["great_circle"][i, t])
            for i, k in enumerate(self.doa_index)
            for t in range(te["azimuth"].shape[1])
        )
        cols = ("doa_index", "trial", "est_theta_deg", "est_phi_deg",
                "err_az_deg", "err_el_deg", "err_gc_deg")
        write_csv(path, cols, rows, self.config)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, columns, rows, config=None):
    """CSV with an optional leading ``# config=`` comment carrying the run configuration."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if config is not None:
            fh.write("# config=" + json.dumps(_plain(config), sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def histogram_edges(bin_width, upper=180.0):
    n = round(upper / bin_width)
    if bin_width <= 0 or not math.isclose(n * bin_width, upper):
        raise ValueError(f"histogram bin width {bin_width:g} must divide {upper:g}")
    return np.arange(n + 1) * float(bin_width)


def _doa_seed(master_seed, doa_index):
    return np.random.SeedSequence([master_seed, doa_index])


def _evaluate_doa(k, x, theta, phi, est, cfg):
    rng = np.random.default_rng(_doa_seed(cfg["master_seed"], k))
    sigma = math.sqrt(float(noise_variance(x, cfg["snr_db"], cfg["snr_reference"])))
    noise = complex_gaussian(rng, (cfg["trials"], cfg["snapshots"], x.size))
    spectra = est.decision_function(x + sigma * noise)
    idx = np.argmax(spectra, axis=1)
    est_dir = est.directions_[idx]
    az = azimuth_error(est_dir[:, 1], phi)
    el = est_dir[:, 0] - theta
    gc = great_circle_error(est_dir, np.array([theta, phi]))
    ambiguous = ~est.elevation_identifiable(spectra)
    return az, el, gc, est_dir, int(np.count_nonzero(ambiguous))


def _single_run(ports, true_grid, est, cfg, workers):
    steering = ports.steering_matrix(true_grid.theta, true_grid.phi)
    norms = np.linalg.norm(steering, axis=1)
    vanishing = norms <= 1e-12 * norms.max()
    skipped = [int(k) for k in np.flatnonzero(vanishing)]
    if skipped:
        logger.warning("steering vector vanishes at %d true DoAs; skipped", len(skipped))
    todo = [int(k) for k in np.flatnonzero(~vanishing)]
    if not todo:
        raise ValueError("steering vector vanishes at every true DoA")

    def job(k):
        return _evaluate_doa(k, steering[k], true_grid.theta[k], true_grid.phi[k], est, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, todo))
    else:
        results = [job(k) for k in todo]
    return todo, skipped, results


def run_monte_carlo(
    ports,
    true_grid: DoaGrid,
    candidate_grid: DoaGrid,
    snr_db,
    trials_per_doa=1000,
    master_seed=0,
    *,
    snapshots=1,
    snr_reference="per-port",
    bin_width=5.0,
    histogram_of="great_circle",
    keep_trials=False,
    adaptive=False,
    adaptive_tol=0.02,
    max_trials=None,
    eps=DEFAULT_EPS,
    eigensolver="lapack",
    workers=1,
):
    """Monte-Carlo DoA error statistics for ``ports`` over ``true_grid``.

    Parameters
    ----------
    ports : PortSet
        Port far-fields; the Theta-component forms the steering vectors.
    true_grid, candidate_grid : DoaGrid
        Directions to evaluate and directions searched by MUSIC.
    snr_db : float
        Signal-to-noise ratio, interpreted per ``snr_reference``.
    trials_per_doa : int
        Noisy realisations per true DoA (the initial count in adaptive mode).
    master_seed : int
        Required explicit seed.
    adaptive : bool
        Double the trial count until consecutive per-DoA histograms differ
        by less than ``adaptive_tol`` (or ``max_trials`` is reached).

    Returns
    -------
    EvalReport
    """
    trials = check_positive_int(trials_per_doa, "trials_per_doa")
    snapshots = check_positive_int(snapshots, "snapshots")
    master_seed = check_seed(master_seed)
    workers = check_positive_int(workers, "workers")
    if histogram_of not in HISTOGRAM_QUANTITIES:
        raise ValueError(f"histogram_of must be one of {HISTOGRAM_QUANTITIES}")
    edges = histogram_edges(bin_width)
    snr_db = float(snr_db)
    if not math.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    noise_variance(np.ones(2), snr_db, snr_reference)  # validates the reference name
    est = MusicDoaEstimator(eps=eps, eigensolver=eigensolver).fit_ports(ports, candidate_grid)
    if max_trials is None:
        max_trials = 16 * trials

    config = {
        "tool": "dfeval",
        "version": __version__,
        "ports": ports.describe(),
        "n_ports": ports.n_ports,
        "true_grid": true_grid.describe(),
        "n_true": len(true_grid),
        "candidate_grid": candidate_grid.describe(),
        "n_candidates": len(candidate_grid),
        "n_candidates_skipped": est.n_skipped_,
        "snr_db": snr_db,
        "snr_reference": snr_reference,
        "snapshots": snapshots,
        "master_seed": master_seed,
        "eps": float(eps),
        "eigensolver": eigensolver,
        "bin_width_deg": float(bin_width),
        "histogram_of": histogram_of,
        "keep_trials": bool(keep_trials),
        "adaptive": bool(adaptive),
    }

    def build(n):
        cfg = {"master_seed": master_seed, "snr_db": snr_db, "snr_reference": snr_reference,
               "trials": n, "snapshots": snapshots}
        todo, skipped, results = _single_run(ports, true_grid, est, cfg, workers)
        return _assemble(dict(config, trials_per_doa=n), true_grid, todo, skipped, results,
                         edges, histogram_of, keep_trials)

    report = build(trials)
    if adaptive:
        converged = False
        while 2 * trials <= max_trials:
            trials *= 2
            nxt = build(trials)
            converged = histogram_stability(report, nxt, adaptive_tol)
            report = nxt
            if converged:
                break
        report.config["adaptive_tol"] = float(adaptive_tol)
        report.config["adaptive_converged"] = converged
        report.config["max_trials"] = int(max_trials)
    return report


def _assemble(config, grid, todo, skipped, results, edges, histogram_of, keep_trials):
    az = np.stack([r[0] for r in results])
    el = np.stack([r[1] for r in results])
    gc = np.stack([r[2] for r in results])
    est_dirs = np.stack([r[3] for r in results])
    ambiguous = sum(r[4] for r in results)
    n_doa, n_trials = az.shape

    def per_doa_rmse(e):
        return np.sqrt(np.mean(e * e, axis=1))

    hist_source = {"great_circle": gc, "azimuth": np.abs(az), "elevation": np.abs(el)}[histogram_of]
    hists = np.stack([np.histogram(row, bins=edges)[0] for row in hist_source])
    total = n_doa * n_trials
    aggregate = {
        "rmse_gc": _pooled_rmse(gc),
        "rmse_az": _pooled_rmse(az),
        "rmse_el": _pooled_rmse(el),
        "median_gc": float(np.median(gc)),
        "median_az": float(np.median(np.abs(az))),
        "median_el": float(np.median(np.abs(el))),
        "mean_abs_gc": float(np.mean(gc)),
        "mean_abs_az": float(np.mean(np.abs(az))),
        "mean_abs_el": float(np.mean(np.abs(el))),
        "trials_total": int(total),
        "elevation_unidentifiable_fraction": ambiguous / total,
    }
    trial_errors = None
    if keep_trials:
        trial_errors = {
            "azimuth": az, "elevation": el, "great_circle": gc,
            "est_theta": est_dirs[..., 0], "est_phi": est_dirs[..., 1],
        }
    idx = np.asarray(todo)
    return EvalReport(
        config=config,
        doa_index=idx,
        theta_deg=grid.theta[idx],
        phi_deg=grid.phi[idx],
        trials=np.full(n_doa, n_trials),
        rmse_az=per_doa_rmse(az),
        rmse_el=per_doa_rmse(el),
        rmse_gc=per_doa_rmse(gc),
        median_az=np.median(np.abs(az), axis=1),
        median_el=np.median(np.abs(el), axis=1),
        median_gc=np.median(gc, axis=1),
        bin_edges=edges,
        histograms=hists,
        aggregate=aggregate,
        skipped=skipped,
        trial_errors=trial_errors,
    )


def _pooled_rmse(e):
    # row sums first, then an exactly rounded total: independent of DoA order
    return math.sqrt(math.fsum(np.sum(e * e, axis=1)) / e.size)


def histogram_stability(report_a: EvalReport, report_b: EvalReport, tol):
    """True iff normalised per-DoA histograms of both reports differ by less than ``tol``."""
    if not np.array_equal(report_a.bin_edges, report_b.bin_edges):
        raise ValueError("mismatched binning between reports")
    if not np.array_equal(report_a.doa_index, report_b.doa_index):
        raise ValueError("reports cover different DoAs")
    diff = np.abs(report_a.normalized_histograms - report_b.normalized_histograms)
    return bool(diff.max() < tol)
