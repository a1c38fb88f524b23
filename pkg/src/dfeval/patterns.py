"""Far-field patterns of antenna ports and characteristic modes.

All public angles are in degrees; theta is the polar angle from zenith (+z)
and phi the azimuth measured from +x towards +y. Patterns are immutable once
built and evaluate vectorised over arrays of directions.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PATTERN_COLUMNS = ("port", "theta_deg", "phi_deg", "re_etheta", "im_etheta", "re_ephi", "im_ephi")

_STEP_RTOL = 1e-6


@dataclass(frozen=True)
class Direction:
    """A direction of arrival in degrees; phi is wrapped into [0, 360)."""

    theta: float
    phi: float

    def __post_init__(self):
        theta = float(self.theta)
        phi = float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise ValueError("direction angles must be finite")
        if theta < 0.0 or theta > 180.0:
            raise ValueError(f"theta must lie in [0, 180] degrees, got {theta}")
        phi = phi % 360.0
        if phi >= 360.0:
            phi = 0.0
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    def unit_vector(self):
        t, p = math.radians(self.theta), math.radians(self.phi)
        return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])


def _as_angles(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    theta, phi = np.broadcast_arrays(theta, phi)
    return theta, phi


class FarFieldPattern:
    """Base class. Subclasses implement ``_fields(theta_rad, phi_rad)``."""

    kind = "abstract"

    def __init__(self, frequency_mhz=None):
        self.frequency_mhz = frequency_mhz

    def evaluate(self, theta, phi):
        """Return ``(E_theta, E_phi)`` as complex arrays for angles in degrees."""
        theta, phi = _as_angles(theta, phi)
        return self._fields(np.radians(theta), np.radians(phi))

    def _fields(self, theta, phi):
        raise NotImplementedError

    def describe(self):
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class FourierPattern(FarFieldPattern):
    """Idealised Theta-polarised far-field ``exp(j * order * phi)``."""

    kind = "analytic-fourier"

    def __init__(self, order, frequency_mhz=None):
        super().__init__(frequency_mhz)
        if isinstance(order, bool) or int(order) != order or order < 0:
            raise ValueError(f"Fourier order must be a non-negative integer, got {order!r}")
        self.order = int(order)

    def _fields(self, theta, phi):
        e_theta = np.exp(1j * self.order * phi)
        return e_theta, np.zeros_like(e_theta)

    def describe(self):
        return f"fourier:{self.order}"


class MonopolePattern(FarFieldPattern):
    """Vertical electric monopole on a ground plane: ``E_theta = sin(theta)``."""

    kind = "analytic-monopole"

    def _fields(self, theta, phi):
        e_theta = np.sin(theta).astype(np.complex128)
        return e_theta, np.zeros_like(e_theta)

    def describe(self):
        return "monopole"


_NAMED_AXES = {
    "x": (1.0, 0.0, 0.0),
    "+x": (1.0, 0.0, 0.0),
    "-x": (-1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "+y": (0.0, 1.0, 0.0),
    "-y": (0.0, -1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
    "+z": (0.0, 0.0, 1.0),
}


class MagneticDipolePattern(FarFieldPattern):
    """Ideal horizontal magnetic dipole with moment along ``axis``.

    The radiated field is proportional to ``r_hat x m``. For an in-plane unit
    moment ``m = (mx, my, 0)`` this gives, peak-normalised,

        E_theta = mx sin(phi) - my cos(phi)
        E_phi   = cos(theta) (mx cos(phi) + my sin(phi))

    so the Theta-component does not depend on elevation and its maximum lies
    broadside to the moment. A parallel image in the ground plane only scales
    the field.
    """

    kind = "analytic-magnetic-dipole"

    def __init__(self, axis, frequency_mhz=None):
        super().__init__(frequency_mhz)
        if isinstance(axis, str):
            try:
                axis = _NAMED_AXES[axis.lower()]
            except KeyError:
                raise ValueError(f"unknown axis name {axis!r}") from None
        axis = np.array(axis, dtype=float).ravel()
        if axis.shape == (2,):
            axis = np.append(axis, 0.0)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)):
            raise ValueError("axis must be a finite 3-vector")
        if abs(axis[2]) > 1e-12:
            raise ValueError("magnetic dipole axis must lie in the ground plane (z = 0)")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("magnetic dipole axis must be a unit vector")
        self.axis = axis
        self.axis.setflags(write=False)

    def _fields(self, theta, phi):
        mx, my = self.axis[0], self.axis[1]
        e_theta = (mx * np.sin(phi) - my * np.cos(phi)).astype(np.complex128)
        e_phi = (np.cos(theta) * (mx * np.cos(phi) + my * np.sin(phi))).astype(np.complex128)
        return e_theta, e_phi

    def describe(self):
        return "magnetic-dipole:[{:g},{:g},{:g}]".format(*self.axis)


class SampledPattern(FarFieldPattern):
    """Pattern tabulated on a regular (theta, phi) lattice.

    Queries between nodes use bilinear interpolation of the complex samples;
    azimuth wraps around when the phi lattice covers the full circle.
    """

    kind = "sampled"

    def __init__(self, theta_deg, phi_deg, e_theta, e_phi, frequency_mhz=None):
        super().__init__(frequency_mhz)
        theta = np.array(theta_deg, dtype=float)
        phi = np.array(phi_deg, dtype=float)
        e_theta = np.array(e_theta, dtype=np.complex128)
        e_phi = np.array(e_phi, dtype=np.complex128)
        shape = (theta.size, phi.size)
        if e_theta.shape != shape or e_phi.shape != shape:
            raise ValueError(f"sample arrays must have shape {shape}")
        if not (np.all(np.isfinite(e_theta)) and np.all(np.isfinite(e_phi))):
            raise ValueError("non-finite sample in pattern")
        self.theta_step = _uniform_step(theta, "theta")
        self.phi_step = _uniform_step(phi, "phi")
        if theta[0] < 0 or theta[-1] > 180:
            raise ValueError("theta lattice must lie within [0, 180] degrees")
        if phi[0] < 0 or phi[-1] >= 360:
            raise ValueError("phi lattice must lie within [0, 360) degrees")
        self.theta_deg = theta
        self.phi_deg = phi
        self.e_theta = e_theta
        self.e_phi = e_phi
        for arr in (self.theta_deg, self.phi_deg, self.e_theta, self.e_phi):
            arr.setflags(write=False)
        self.full_circle = math.isclose(phi.size * self.phi_step, 360.0, rel_tol=_STEP_RTOL)

    @property
    def lattice(self):
        return self.theta_deg, self.phi_deg

    def same_lattice(self, other):
        return (
            self.theta_deg.shape == other.theta_deg.shape
            and self.phi_deg.shape == other.phi_deg.shape
            and np.allclose(self.theta_deg, other.theta_deg, rtol=0, atol=1e-9)
            and np.allclose(self.phi_deg, other.phi_deg, rtol=0, atol=1e-9)
        )

    def _weights(self, theta, phi):
        theta, phi = _as_angles(theta, phi)
        t0, dt, nt = self.theta_deg[0], self.theta_step, self.theta_deg.size
        lo, hi = self.theta_deg[0], self.theta_deg[-1]
        tol = 1e-9 * max(1.0, abs(hi))
        if np.any(theta < lo - tol) or np.any(theta > hi + tol):
            raise ValueError(
                f"direction outside sampled theta range [{lo:g}, {hi:g}] degrees"
            )
        u = _snap((theta - t0) / dt)
        i = np.clip(np.floor(u).astype(int), 0, nt - 2)
        wt = np.clip(u - i, 0.0, 1.0)

        p0, dp, npf = self.phi_deg[0], self.phi_step, self.phi_deg.size
        v = _snap(np.mod(phi - p0, 360.0) / dp)
        if self.full_circle:
            v = np.where(v >= npf, v - npf, v)
            j = np.floor(v).astype(int) % npf
            j1 = (j + 1) % npf
        else:
            if np.any(v > npf - 1 + 1e-9):
                raise ValueError("direction outside sampled phi range")
            j = np.clip(np.floor(v).astype(int), 0, npf - 2)
            j1 = j + 1
        wp = np.clip(v - np.floor(v) if self.full_circle else v - j, 0.0, 1.0)
        return i, wt, j, j1, wp

    @staticmethod
    def _blend(table, i, wt, j, j1, wp):
        return (
            (1 - wt) * (1 - wp) * table[i, j]
            + (1 - wt) * wp * table[i, j1]
            + wt * (1 - wp) * table[i + 1, j]
            + wt * wp * table[i + 1, j1]
        )

    def evaluate(self, theta, phi):
        i, wt, j, j1, wp = self._weights(theta, phi)
        return (
            self._blend(self.e_theta, i, wt, j, j1, wp),
            self._blend(self.e_phi, i, wt, j, j1, wp),
        )

    def interpolate_magnitude(self, theta, phi, component="theta"):
        """Bilinear interpolation of ``|E|`` (bounded by the surrounding node magnitudes)."""
        table = np.abs(self.e_theta if component == "theta" else self.e_phi)
        return self._blend(table, *self._weights(theta, phi))

    def describe(self):
        return (
            f"sampled:{self.theta_deg.size}x{self.phi_deg.size}"
            f"@{self.theta_step:g}x{self.phi_step:g}deg"
        )


def _snap(u):
    r = np.round(u)
    return np.where(np.abs(u - r) < 1e-9, r, u)


def _uniform_step(values, name):
    if values.ndim != 1 or values.size < 2:
        raise ValueError(f"{name} lattice needs at least two values")
    steps = np.diff(values)
    if np.any(steps <= 0):
        raise ValueError(f"{name} lattice must be strictly increasing")
    step = float(np.mean(steps))
    if np.any(np.abs(steps - step) > _STEP_RTOL * max(step, 1.0)):
        raise ValueError(f"inconsistent {name} steps in lattice")
    return step


@dataclass(frozen=True)
class PortSet:
    """Ordered far-field patterns of P antenna ports."""

    patterns: tuple
    labels: tuple = field(default=None)

    def __post_init__(self):
        patterns = tuple(self.patterns)
        if len(patterns) < 2:
            raise ValueError(f"a port set needs at least 2 ports, got {len(patterns)}")
        for pat in patterns:
            if not isinstance(pat, FarFieldPattern):
                raise TypeError(f"expected FarFieldPattern, got {type(pat).__name__}")
        labels = self.labels
        if labels is None:
            labels = tuple(pat.describe() for pat in patterns)
        labels = tuple(str(lab) for lab in labels)
        if len(labels) != len(patterns):
            raise ValueError("one label per port is required")
        sampled = [p for p in patterns if isinstance(p, SampledPattern)]
        if any(not sampled[0].same_lattice(p) for p in sampled[1:]):
            raise ValueError("sampled ports must share an identical lattice")
        object.__setattr__(self, "patterns", patterns)
        object.__setattr__(self, "labels", labels)

    @property
    def n_ports(self):
        return len(self.patterns)

    def __len__(self):
        return len(self.patterns)

    def steering_matrix(self, theta, phi):
        """Theta-polarised port responses, shape ``(n_directions, P)``."""
        theta, phi = _as_angles(theta, phi)
        theta, phi = theta.ravel(), phi.ravel()
        cols = [pat.evaluate(theta, phi)[0] for pat in self.patterns]
        return np.stack(cols, axis=-1)

    def describe(self):
        return ",".join(self.labels)


def evaluate(pattern, d):
    """Evaluate one pattern at one :class:`Direction`; returns ``(E_theta, E_phi)``."""
    if not isinstance(d, Direction):
        d = Direction(*d)
    e_theta, e_phi = pattern.evaluate(d.theta, d.phi)
    return complex(e_theta), complex(e_phi)


def fourier_pattern(p):
    return FourierPattern(p)


def fourier_port_set(n_ports):
    """Ports with orders ``0 .. n_ports-1`` so that the pattern count equals P."""
    if isinstance(n_ports, bool) or int(n_ports) != n_ports or n_ports < 2:
        raise ValueError(f"a Fourier port set needs P >= 2, got {n_ports!r}")
    return PortSet(tuple(FourierPattern(p) for p in range(int(n_ports))))


def monopole_pattern():
    return MonopolePattern()


def magnetic_dipole_pattern(axis):
    return MagneticDipolePattern(axis)


def cupola_port_set():
    """Analytic stand-in for the cupola modes: monopole plus two orthogonal magnetic dipoles."""
    return PortSet(
        (MonopolePattern(), MagneticDipolePattern("x"), MagneticDipolePattern("y")),
        labels=("monopole", "magnetic-dipole-x", "magnetic-dipole-y"),
    )


def sample_port_set(ports, step_deg, theta_max=90.0):
    """Tabulate every port on a regular lattice (theta 0..theta_max, phi 0..360-step).

    Accepts a :class:`PortSet` (returns one) or a sequence of patterns (returns a list).
    """
    step = float(step_deg)
    if step <= 0:
        raise ValueError("step must be positive")
    nt = round(theta_max / step)
    npf = round(360.0 / step)
    if not (math.isclose(nt * step, theta_max) and math.isclose(npf * step, 360.0)):
        raise ValueError(f"step {step:g} must divide {theta_max:g} and 360 evenly")
    theta = np.arange(nt + 1) * step
    phi = np.arange(npf) * step
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    patterns = ports.patterns if isinstance(ports, PortSet) else tuple(ports)
    sampled = []
    for pat in patterns:
        e_t, e_p = pat.evaluate(tt, pp)
        sampled.append(SampledPattern(theta, phi, e_t, e_p, frequency_mhz=pat.frequency_mhz))
    if isinstance(ports, PortSet):
        return PortSet(tuple(sampled), labels=ports.labels)
    return sampled


def save_pattern_file(ports, path, comments=()):
    """Write sampled patterns (a PortSet or a sequence) as CSV sorted by port, theta, phi."""
    patterns = ports.patterns if isinstance(ports, PortSet) else tuple(ports)
    for pat in patterns:
        if not isinstance(pat, SampledPattern):
            raise ValueError("only sampled patterns can be written; use sample_port_set first")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PATTERN_COLUMNS)
        for port, pat in enumerate(patterns):
            for i, t in enumerate(pat.theta_deg):
                for j, p in enumerate(pat.phi_deg):
                    et, ep = pat.e_theta[i, j], pat.e_phi[i, j]
                    writer.writerow(
                        [port, repr(float(t)), repr(float(p)),
                         repr(float(et.real)), repr(float(et.imag)),
                         repr(float(ep.real)), repr(float(ep.imag))]
                    )


def _data_lines(fh):
    for line in fh:
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield line


def load_pattern_file(path, port_count=None):
    """Read a pattern CSV into a :class:`PortSet`, failing loudly on gaps."""
    patterns, labels = read_pattern_table(path, port_count)
    return PortSet(tuple(patterns), labels=tuple(labels))


def read_pattern_table(path, port_count=None):
    """Parse a pattern CSV into ``(patterns, labels)`` without the P >= 2 requirement."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_data_lines(fh))
        missing = set(PATTERN_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                port = int(row["port"])
                t = float(row["theta_deg"])
                p = float(row["phi_deg"])
                vals = [float(row[c]) for c in PATTERN_COLUMNS[3:]]
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in (t, p, *vals)):
                raise ValueError(f"{path}: non-finite sample in row {lineno}")
            key = (t, p)
            port_rows = rows.setdefault(port, {})
            if key in port_rows:
                raise ValueError(f"{path}: duplicate lattice point port={port} theta={t} phi={p}")
            port_rows[key] = (complex(vals[0], vals[1]), complex(vals[2], vals[3]))
    if not rows:
        raise ValueError(f"{path}: no pattern samples")
    if port_count is not None and len(rows) != port_count:
        raise ValueError(f"{path}: expected {port_count} ports, found {len(rows)}")

    patterns = []
    labels = []
    for port in sorted(rows):
        samples = rows[port]
        thetas = np.array(sorted({k[0] for k in samples}))
        phis = np.array(sorted({k[1] for k in samples}))
        if len(samples) != thetas.size * phis.size:
            raise ValueError(
                f"{path}: incomplete lattice for port {port} "
                f"({len(samples)} of {thetas.size * phis.size} points)"
            )
        e_t = np.empty((thetas.size, phis.size), dtype=np.complex128)
        e_p = np.empty_like(e_t)
        for i, t in enumerate(thetas):
            for j, p in enumerate(phis):
                e_t[i, j], e_p[i, j] = samples[(t, p)]
        patterns.append(SampledPattern(thetas, phis, e_t, e_p))
        labels.append(f"port{port}")
    return patterns, labels


def parse_port_spec(spec):
    """Build a port set from a CLI spec: ``fourier:P``, ``cupola-analytic`` or ``file:PATH``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "fourier":
        try:
            n = int(arg)
        except ValueError:
            raise ValueError(f"bad port count in {spec!r}") from None
        return fourier_port_set(n)
    if kind in ("cupola-analytic", "cupola"):
        return cupola_port_set()
    if kind == "file":
        return load_pattern_file(arg)
    if kind == "monopole":
        raise ValueError("a single monopole is not a port set; use cupola-analytic")
    raise ValueError(f"unknown port specification {spec!r}")
