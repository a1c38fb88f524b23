"""Candidate DoA grids and angular error metrics (all in degrees)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._validation import check_directions

MIN_SEPARATION_DEG = 0.1

GOLDEN_ANGLE_DEG = 180.0 * (3.0 - math.sqrt(5.0))


def unit_vectors(theta_deg, phi_deg):
    t = np.radians(np.asarray(theta_deg, dtype=float))
    p = np.radians(np.asarray(phi_deg, dtype=float))
    st = np.sin(t)
    return np.stack([st * np.cos(p), st * np.sin(p), np.cos(t)], axis=-1)


@dataclass(frozen=True, eq=False)
class DoaGrid:
    """Ordered candidate directions.

    ``kind`` is ``"hemisphere-quasi-uniform"``, ``"equiangular"`` or ``"custom"``;
    ``resolution`` records the point count or angular step it was built from.
    """

    theta: np.ndarray
    phi: np.ndarray
    kind: str = "custom"
    resolution: float | int | None = None

    def __post_init__(self):
        dirs = check_directions(np.column_stack([np.ravel(self.theta), np.ravel(self.phi)]))
        if dirs.shape[0] == 0:
            raise ValueError("a DoA grid needs at least one direction")
        theta, phi = dirs[:, 0].copy(), dirs[:, 1].copy()
        if self.kind in ("hemisphere-quasi-uniform", "equiangular") and np.any(theta > 90.0):
            raise ValueError("hemisphere grids must satisfy theta <= 90 degrees")
        _check_separation(theta, phi)
        theta.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    def __len__(self):
        return self.theta.size

    @property
    def directions(self):
        return np.column_stack([self.theta, self.phi])

    def unit_vectors(self):
        return unit_vectors(self.theta, self.phi)

    def describe(self):
        if self.kind == "hemisphere-quasi-uniform":
            return f"hemisphere:{self.resolution}"
        if self.kind == "equiangular":
            return f"equiangular:{self.resolution:g}"
        return f"custom:{len(self)}"

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["index", "theta_deg", "phi_deg"])
            for k, (t, p) in enumerate(zip(self.theta, self.phi)):
                writer.writerow([k, repr(float(t)), repr(float(p))])


def _check_separation(theta, phi):
    if theta.size < 2:
        return
    chord = 2.0 * math.sin(math.radians(MIN_SEPARATION_DEG) / 2.0)
    pairs = cKDTree(unit_vectors(theta, phi)).query_pairs(chord)
    if pairs:
        a, b = min(pairs)
        raise ValueError(
            f"grid directions {a} and {b} are closer than {MIN_SEPARATION_DEG} degrees"
        )


def hemisphere_grid(n):
    """Spherical Fibonacci lattice with ``n`` points restricted to the upper hemisphere.

    Point ``i`` sits at ``cos(theta) = 1 - (i + 1/2)/n`` (equal-area bands) and
    advances in azimuth by the golden angle.
    """
    if isinstance(n, bool) or int(n) != n or n < 4:
        raise ValueError(f"hemisphere grid needs n >= 4 points, got {n!r}")
    n = int(n)
    i = np.arange(n)
    theta = np.degrees(np.arccos(1.0 - (i + 0.5) / n))
    phi = np.mod(i * GOLDEN_ANGLE_DEG, 360.0)
    return DoaGrid(theta, phi, kind="hemisphere-quasi-uniform", resolution=n)


def equiangular_grid(step_deg):
    """Regular theta/phi lattice over the upper hemisphere with a single pole point."""
    step = float(step_deg)
    if not math.isfinite(step) or step <= 0:
        raise ValueError(f"step must be positive, got {step_deg!r}")
    nt = round(90.0 / step)
    npf = round(360.0 / step)
    if nt < 1 or not math.isclose(nt * step, 90.0, abs_tol=1e-9) or not math.isclose(
        npf * step, 360.0, abs_tol=1e-9
    ):
        raise ValueError(f"step {step:g} does not divide 90 and 360 evenly")
    rows = np.arange(1, nt + 1) * step
    cols = np.arange(npf) * step
    tt, pp = np.meshgrid(rows, cols, indexing="ij")
    theta = np.concatenate([[0.0], tt.ravel()])
    phi = np.concatenate([[0.0], pp.ravel()])
    return DoaGrid(theta, phi, kind="equiangular", resolution=step)


def parse_grid_spec(spec):
    """``hemisphere:N`` or ``equiangular:STEP``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "hemisphere":
            return hemisphere_grid(int(arg))
        if kind == "equiangular":
            return equiangular_grid(float(arg))
    except ValueError as exc:
        raise ValueError(f"invalid grid {spec!r}: {exc}") from None
    raise ValueError(f"unknown grid specification {spec!r}")


def great_circle_error(a, b):
    """Angle in degrees between directions ``a`` and ``b``.

    Accepts :class:`~dfeval.patterns.Direction` objects, ``(theta, phi)`` pairs or
    arrays of shape ``(n, 2)``.
    """
    ta, pa = _split(a)
    tb, pb = _split(b)
    ua = unit_vectors(ta, pa)
    ub = unit_vectors(tb, pb)
    # atan2 form stays accurate for nearly (anti)parallel vectors.
    cross = np.linalg.norm(np.cross(ua, ub), axis=-1)
    dot = np.sum(ua * ub, axis=-1)
    ang = np.degrees(np.arctan2(cross, dot))
    return float(ang) if np.ndim(ang) == 0 else ang


def wrap_angle(deg):
    """Wrap degrees into (-180, 180]."""
    w = 180.0 - np.mod(180.0 - np.asarray(deg, dtype=float), 360.0)
    return float(w) if np.ndim(w) == 0 else w


def azimuth_error(a_phi, b_phi):
    """Signed circular difference ``a - b`` wrapped into (-180, 180]."""
    return wrap_angle(np.asarray(a_phi, dtype=float) - np.asarray(b_phi, dtype=float))


def elevation_error(a_theta, b_theta):
    d = np.asarray(a_theta, dtype=float) - np.asarray(b_theta, dtype=float)
    return float(d) if np.ndim(d) == 0 else d


def _split(d):
    if hasattr(d, "theta") and hasattr(d, "phi"):
        return d.theta, d.phi
    arr = np.asarray(d, dtype=float)
    return arr[..., 0], arr[..., 1]
