"""Small dense Hermitian eigensolvers.

``eigh_jacobi`` is a cyclic Jacobi iteration vectorised over a batch of
matrices. For the P <= 4 port counts used in direction finding it converges
in a handful of sweeps and serves as an independent cross-check of LAPACK.
"""
from __future__ import annotations

import numpy as np

from ._validation import NumericalError


def eigh_jacobi(A, tol=1e-15, max_sweeps=50):
    """Eigen-decompose Hermitian matrices with cyclic complex Jacobi rotations.

    Parameters
    ----------
    A : array_like, shape (..., n, n)
        Hermitian matrices (only Hermitian symmetry is assumed, not definiteness).
    tol : float
        Stop once the off-diagonal Frobenius norm is below ``tol * ||A||_F``.
    max_sweeps : int
        Raise :class:`NumericalError` if not converged after this many sweeps.

    Returns
    -------
    w : ndarray, shape (..., n)
        Eigenvalues in ascending order.
    V : ndarray, shape (..., n, n)
        Orthonormal eigenvectors as columns, matching ``w``.
    """
    A = np.array(A, dtype=np.complex128)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    A = A.reshape(-1, n, n)
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    V = np.broadcast_to(np.eye(n, dtype=np.complex128), A.shape).copy()

    scale = np.linalg.norm(A, axis=(-2, -1))
    scale = np.where(scale > 0, scale, 1.0)
    pairs = [(p, q) for p in range(n - 1) for q in range(p + 1, n)]
    offdiag = ~np.eye(n, dtype=bool)

    for _ in range(max_sweeps):
        off = np.linalg.norm(A[:, offdiag], axis=-1)
        if np.all(off <= tol * scale):
            break
        for p, q in pairs:
            _rotate(A, V, p, q)
    else:
        raise NumericalError("Jacobi eigensolver did not converge")

    w = np.real(np.diagonal(A, axis1=-2, axis2=-1)).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    return w.reshape(*batch_shape, n), V.reshape(*batch_shape, n, n)


def _rotate(A, V, p, q):
    apq = A[:, p, q]
    mag = np.abs(apq)
    active = mag > np.finfo(float).tiny * 1e4
    if not np.any(active):
        return
    safe = np.where(active, mag, 1.0)
    phase = np.where(active, apq / safe, 1.0)
    app = A[:, p, p].real
    aqq = A[:, q, q].real
    # Real symmetric rotation on the phase-aligned 2x2 block.
    tau = (aqq - app) / (2.0 * safe)
    t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
    t = np.where(active, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c

    # Column transform G acting on (p, q): G = diag(1, conj(phase)) @ [[c, s], [-s, c]].
    g_pp = c.astype(np.complex128)
    g_pq = s.astype(np.complex128)
    g_qp = -s * np.conj(phase)
    g_qq = c * np.conj(phase)

    # A <- A G (columns p, q)
    col_p = A[:, :, p].copy()
    col_q = A[:, :, q].copy()
    A[:, :, p] = col_p * g_pp[:, None] + col_q * g_qp[:, None]
    A[:, :, q] = col_p * g_pq[:, None] + col_q * g_qq[:, None]
    # A <- G^H A (rows p, q)
    row_p = A[:, p, :].copy()
    row_q = A[:, q, :].copy()
    A[:, p, :] = np.conj(g_pp)[:, None] * row_p + np.conj(g_qp)[:, None] * row_q
    A[:, q, :] = np.conj(g_pq)[:, None] * row_p + np.conj(g_qq)[:, None] * row_q
    A[:, p, q] = 0.0
    A[:, q, p] = 0.0
    A[:, p, p] = A[:, p, p].real
    A[:, q, q] = A[:, q, q].real

    col_p = V[:, :, p].copy()
    col_q = V[:, :, q].copy()
    V[:, :, p] = col_p * g_pp[:, None] + col_q * g_qp[:, None]
    V[:, :, q] = col_p * g_pq[:, None] + col_q * g_qq[:, None]


def eigh(A, method="lapack"):
    """Dispatch to LAPACK (``numpy.linalg.eigh``) or the Jacobi solver."""
    if method == "lapack":
        try:
            return np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if method == "jacobi":
        return eigh_jacobi(A)
    raise ValueError(f"unknown eigensolver {method!r}")
