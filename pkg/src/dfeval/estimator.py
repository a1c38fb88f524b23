"""Steering vectors, noise injection and single-snapshot MUSIC.

The functional API mirrors the individual processing steps; the
:class:`MusicDoaEstimator` bundles them behind a scikit-learn style
``fit``/``predict`` interface where ``fit`` receives the candidate steering
vectors together with their directions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_directions, check_steering_matrix
from .geometry import DoaGrid, great_circle_error
from .linalg import eigh
from .patterns import Direction, PortSet

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-12
TIE_RTOL = 1e-9
NOISE_REFERENCES = ("per-port", "total")


def steering_vector(ports: PortSet, d) -> np.ndarray:
    """Theta-polarised port responses for a plane wave from ``d`` (not normalised)."""
    if not isinstance(d, Direction):
        d = Direction(*d)
    return ports.steering_matrix(d.theta, d.phi)[0]


def normalize(x):
    """Scale ``x`` (or each row of a 2-D stack) to unit Euclidean norm."""
    x = np.asarray(x, dtype=np.complex128)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("steering vector vanishes at this DoA")
    return x / norm


def noise_variance(x, snr_db, reference="per-port"):
    """Per-entry noise variance for signal ``x`` at ``snr_db``.

    ``per-port``: sigma^2 = (||x||^2 / P) 10^(-snr/10), i.e. mean port power over
    per-entry noise power. ``total``: sigma^2 = ||x||^2 10^(-snr/10).
    """
    x = np.asarray(x)
    power = np.sum(np.abs(x) ** 2, axis=-1)
    if reference == "per-port":
        power = power / x.shape[-1]
    elif reference != "total":
        raise ValueError(f"unknown SNR reference {reference!r}; use one of {NOISE_REFERENCES}")
    return power * 10.0 ** (-float(snr_db) / 10.0)


def complex_gaussian(rng, shape):
    """Unit-variance circularly-symmetric complex Gaussian samples.

    Draws real/imaginary pairs interleaved along the last axis so that the
    first ``k`` rows of a larger draw equal a draw of ``k`` rows.
    """
    ri = rng.standard_normal((*shape, 2))
    return (ri[..., 0] + 1j * ri[..., 1]) * np.sqrt(0.5)


def add_noise(x, snr_db, rng_seed, reference="per-port", n_trials=None):
    """Return ``x + n`` with i.i.d. complex Gaussian ``n`` at the requested SNR.

    ``rng_seed`` is an int, a :class:`numpy.random.SeedSequence` or a
    :class:`numpy.random.Generator`. With ``n_trials`` set, a stack of
    independent noisy copies with shape ``(n_trials, P)`` is returned.
    """
    x = np.asarray(x, dtype=np.complex128)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    sigma = np.sqrt(noise_variance(x, snr_db, reference))
    shape = x.shape if n_trials is None else (int(n_trials), *x.shape)
    return x + sigma * complex_gaussian(rng, shape)


def covariance(x):
    """Sample covariance ``x x^H``.

    A 1-D input gives the rank-1 single-snapshot matrix. For stacked input of
    shape ``(..., S, P)`` the outer products of the ``S`` snapshots are averaged.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 1:
        return np.outer(x, x.conj())
    return np.einsum("...sp,...sq->...pq", x, x.conj()) / x.shape[-2]


def noise_subspace(R, eigensolver="lapack", return_signal=False):
    """Eigenvectors of the ``P-1`` smallest eigenvalues of ``R``.

    Works on a single matrix or a stack ``(..., P, P)``. With
    ``return_signal=True`` the dominant eigenvector is returned as well.
    """
    R = np.asarray(R, dtype=np.complex128)
    if R.ndim < 2 or R.shape[-1] != R.shape[-2] or R.shape[-1] < 2:
        raise ValueError(f"covariance must be square with P >= 2, got shape {R.shape}")
    _, vecs = eigh(R, method=eigensolver)
    N = vecs[..., :, :-1]
    if return_signal:
        return N, vecs[..., :, -1]
    return N


def music_spectrum(N, candidates, eps=DEFAULT_EPS):
    """MUSIC pseudo-spectrum ``1 / max(x_k^H N N^H x_k, eps)``.

    ``N`` has shape ``(P, P-1)`` or ``(T, P, P-1)``; ``candidates`` are
    normalised steering vectors of shape ``(K, P)``. Returns ``(K,)`` or ``(T, K)``.
    """
    N = np.asarray(N, dtype=np.complex128)
    A = check_steering_matrix(candidates, name="candidates")
    if N.shape[-2] != A.shape[1]:
        raise ValueError(
            f"dimension mismatch: noise subspace has {N.shape[-2]} ports, "
            f"candidates have {A.shape[1]}"
        )
    proj = np.swapaxes(N.conj(), -1, -2) @ A.T  # (..., P-1, K)
    den = np.sum(proj.real ** 2 + proj.imag ** 2, axis=-2)
    return 1.0 / np.maximum(den, eps)


@dataclass(frozen=True, eq=False)
class MusicSpectrum:
    """Spectrum values aligned with a candidate grid plus the peak bookkeeping."""

    values: np.ndarray
    index: int
    n_skipped: int = 0
    elevation_identifiable: bool = True


class MusicDoaEstimator(BaseEstimator):
    """Grid-search single-snapshot MUSIC direction-of-arrival estimator.

    Parameters
    ----------
    eps : float, default=1e-12
        Floor of the spectrum denominator; keeps the noise-free peak finite.
    eigensolver : {"lapack", "jacobi"}, default="lapack"
        Hermitian eigensolver used for the covariance decomposition.
    vanish_tol : float, default=1e-12
        Candidates whose steering-vector norm is below ``vanish_tol`` times the
        largest candidate norm are skipped.

    Attributes
    ----------
    candidates_ : ndarray of shape (n_candidates, n_ports)
        Normalised candidate steering vectors (zero rows for skipped ones).
    directions_ : ndarray of shape (n_candidates, 2)
        Candidate (theta, phi) in degrees.
    valid_ : ndarray of bool
        Mask of usable candidates.
    n_skipped_ : int
        Number of vanishing candidates.
    n_features_in_ : int
        Number of ports P.
    """

    def __init__(self, eps=DEFAULT_EPS, eigensolver="lapack", vanish_tol=1e-12):
        self.eps = eps
        self.eigensolver = eigensolver
        self.vanish_tol = vanish_tol

    def fit(self, X, y):
        """Store candidate steering vectors ``X`` (K, P) for directions ``y`` (K, 2)."""
        X = check_steering_matrix(X, name="candidate steering vectors", allow_1d=False)
        if X.shape[1] < 2:
            raise ValueError("MUSIC needs at least two ports")
        y = check_directions(y, name="candidate directions")
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y must have the same number of candidates")
        if self.eigensolver not in ("lapack", "jacobi"):
            raise ValueError(f"unknown eigensolver {self.eigensolver!r}")
        norms = np.linalg.norm(X, axis=1)
        valid = norms > self.vanish_tol * norms.max() if norms.max() > 0 else np.zeros_like(norms, bool)
        if not np.any(valid):
            raise ValueError("all candidate steering vectors vanish")
        cand = np.zeros_like(X)
        cand[valid] = X[valid] / norms[valid, None]
        self.candidates_ = cand
        self.directions_ = y
        self.valid_ = valid
        self.n_skipped_ = int(np.count_nonzero(~valid))
        self.n_features_in_ = X.shape[1]
        if self.n_skipped_:
            logger.warning("skipped %d vanishing candidate steering vectors", self.n_skipped_)
        return self

    def fit_ports(self, ports: PortSet, grid: DoaGrid):
        """Convenience: candidates from a port set evaluated on a grid."""
        return self.fit(ports.steering_matrix(grid.theta, grid.phi), grid.directions)

    def _check_fitted(self):
        if not hasattr(self, "candidates_"):
            raise NotFittedError("MusicDoaEstimator is not fitted yet; call fit first")

    def decision_function(self, X):
        """MUSIC spectra, one row per snapshot in ``X`` (n_samples, P).

        Each row of ``X`` is treated as an independent single snapshot; a 3-D
        input ``(n_samples, n_snapshots, P)`` averages the snapshots of each
        sample into one covariance. Skipped candidates get the value 0.
        """
        self._check_fitted()
        X = np.asarray(X)
        if X.ndim == 3:
            # (n, S, P): S snapshots averaged into each covariance estimate
            n, s, p = X.shape
            X = check_steering_matrix(X.reshape(n * s, p), self.n_features_in_).reshape(n, s, p)
        else:
            X = check_steering_matrix(X, self.n_features_in_)[:, None, :]
        N = noise_subspace(covariance(X), eigensolver=self.eigensolver)
        spec = music_spectrum(N, self.candidates_, eps=self.eps)
        spec[:, ~self.valid_] = 0.0
        return spec

    def predict_index(self, X):
        """Index of the spectral peak; ties go to the lowest candidate index."""
        return np.argmax(self.decision_function(X), axis=1)

    def predict(self, X):
        """Estimated (theta, phi) in degrees for every snapshot row of ``X``."""
        self._check_fitted()
        return self.directions_[self.predict_index(X)]

    def elevation_identifiable(self, spectra):
        """False where the peak value is reached at two or more distinct thetas."""
        spectra = np.atleast_2d(spectra)
        top = spectra.max(axis=1, keepdims=True)
        tied = spectra >= top * (1.0 - TIE_RTOL)
        theta = self.directions_[:, 0]
        hi = np.where(tied, theta, -np.inf).max(axis=1)
        lo = np.where(tied, theta, np.inf).min(axis=1)
        return (hi - lo) <= 1e-9

    def score(self, X, y):
        """Negative great-circle RMSE (degrees) of the predictions against ``y``."""
        y = check_directions(y)
        err = great_circle_error(self.predict(X), y)
        return -float(np.sqrt(np.mean(np.square(err))))


def estimate_doa(ports: PortSet, x, grid: DoaGrid, eps=DEFAULT_EPS, eigensolver="lapack"):
    """Estimate the DoA of a single noisy snapshot ``x`` by MUSIC grid search.

    Returns ``(Direction, MusicSpectrum)``.
    """
    x = check_steering_matrix(x, ports.n_ports)
    if x.shape[0] != 1:
        raise ValueError("estimate_doa takes a single snapshot; use MusicDoaEstimator for batches")
    est = MusicDoaEstimator(eps=eps, eigensolver=eigensolver).fit_ports(ports, grid)
    values = est.decision_function(x)
    k = int(np.argmax(values[0]))
    spectrum = MusicSpectrum(
        values=values[0],
        index=k,
        n_skipped=est.n_skipped_,
        elevation_identifiable=bool(est.elevation_identifiable(values)[0]),
    )
    return Direction(*est.directions_[k]), spectrum
