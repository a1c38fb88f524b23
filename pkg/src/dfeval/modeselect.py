"""Admissible characteristic-mode sets and their RMSE ranking.

Mode data (eigenvalues, degeneracy groups, symmetry classes, far-fields) are
read from a structure JSON file; characteristic modes are never computed here.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import run_monte_carlo, write_csv
from .patterns import (
    FarFieldPattern,
    FourierPattern,
    MagneticDipolePattern,
    MonopolePattern,
    PortSet,
    read_pattern_table,
)

CRITERIA = ("min_modes", "unique_ports", "complete_degeneracy", "eigenvalue_bound")
RANKING_COLUMNS = ("structure", "set_members", "rmse_gc_deg", "rmse_az_deg", "rmse_el_deg")
DEGENERACY_RTOL = 1e-6


@dataclass(frozen=True)
class ModeRecord:
    mode_id: int | str
    eigenvalue: float
    degeneracy_group: str | None = None
    symmetry_class: str | None = None
    pattern: FarFieldPattern | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class StructureRecord:
    name: str
    diameter_m: float
    height_to_width: float
    frequency_mhz: float | None
    modes: tuple

    def __post_init__(self):
        if not self.diameter_m > 0:
            raise ValueError(f"{self.name}: diameter must be positive")
        if not self.height_to_width > 0:
            raise ValueError(f"{self.name}: height-to-width ratio must be positive")
        modes = tuple(self.modes)
        ids = [m.mode_id for m in modes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.name}: duplicate mode ids")
        for group, members in _groups(modes).items():
            lams = [m.eigenvalue for m in members]
            ref = max(abs(v) for v in lams) or 1.0
            if max(lams) - min(lams) > DEGENERACY_RTOL * ref:
                raise ValueError(
                    f"{self.name}: degeneracy group {group!r} has unequal eigenvalues {lams}"
                )
        object.__setattr__(self, "modes", modes)

    def mode(self, mode_id):
        for m in self.modes:
            if m.mode_id == mode_id:
                return m
        raise KeyError(mode_id)


@dataclass
class ModeSet:
    members: tuple
    flags: dict
    rmse_deg: float | None = None
    rmse_az_deg: float | None = None
    rmse_el_deg: float | None = None

    @property
    def admissible(self):
        return all(self.flags.values())

    def label(self):
        return "+".join(str(m) for m in self.members)


def _id_key(mode_id):
    # numeric ids sort numerically, others lexicographically after them
    if isinstance(mode_id, int) and not isinstance(mode_id, bool):
        return (0, mode_id, "")
    return (1, 0, str(mode_id))


def _groups(modes):
    groups = {}
    for m in modes:
        if m.degeneracy_group is not None:
            groups.setdefault(m.degeneracy_group, []).append(m)
    return groups


def _is_degenerate(mode, groups):
    return mode.degeneracy_group is not None and len(groups[mode.degeneracy_group]) > 1


def check_set(structure, members, max_eigenvalue_magnitude=3.0, min_modes=3):
    """Evaluate each selection criterion separately for the given mode ids."""
    chosen = [structure.mode(i) for i in members]
    groups = _groups(structure.modes)
    chosen_ids = {m.mode_id for m in chosen}

    plain = [m for m in chosen if not _is_degenerate(m, groups)]
    classes = [m.symmetry_class for m in plain]
    unique_ports = None not in classes and len(set(classes)) == len(classes)
    if any(m.symmetry_class is None for m in chosen):
        unique_ports = False

    complete = all(
        {m.mode_id for m in groups[g]} <= chosen_ids
        for g in {m.degeneracy_group for m in chosen if m.degeneracy_group is not None}
    )
    return {
        "min_modes": len(chosen_ids) >= min_modes,
        "unique_ports": unique_ports,
        "complete_degeneracy": complete,
        "eigenvalue_bound": all(abs(m.eigenvalue) < max_eigenvalue_magnitude for m in chosen),
    }


def enumerate_admissible_sets(structure, max_eigenvalue_magnitude=3.0, min_modes=3):
    """Every mode subset that passes all four criteria.

    Degeneracy groups are treated as indivisible units, so split groups are
    never generated. The result is sorted by size then mode ids and does not
    depend on the order of ``structure.modes``.
    """
    eligible = [m for m in structure.modes if abs(m.eigenvalue) < max_eigenvalue_magnitude]
    groups = _groups(structure.modes)
    units = {}
    for m in eligible:
        key = ("g", m.degeneracy_group) if _is_degenerate(m, groups) else ("m", m.mode_id)
        units.setdefault(key, []).append(m.mode_id)
    unit_list = sorted(
        (tuple(sorted(v, key=_id_key)) for v in units.values()), key=lambda u: [_id_key(i) for i in u]
    )

    found = []
    for r in range(1, len(unit_list) + 1):
        for combo in itertools.combinations(unit_list, r):
            members = tuple(sorted(itertools.chain.from_iterable(combo), key=_id_key))
            flags = check_set(structure, members, max_eigenvalue_magnitude, min_modes)
            if all(flags.values()):
                found.append(ModeSet(members=members, flags=flags))
    found.sort(key=lambda s: (len(s.members), [_id_key(i) for i in s.members]))
    return found


def _set_seed(master_seed, structure_name, members):
    text = f"{master_seed}|{structure_name}|{'+'.join(str(m) for m in members)}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def set_port_set(structure, mode_set):
    patterns = []
    for mode_id in mode_set.members:
        mode = structure.mode(mode_id)
        if mode.pattern is None:
            raise ValueError(f"mode {mode_id!r} of {structure.name} has no far-field pattern")
        patterns.append(mode.pattern)
    return PortSet(tuple(patterns), labels=tuple(f"mode{m}" for m in mode_set.members))


def rank_sets(structure, sets, true_grid, candidate_grid, snr_db, trials, seed, **mc_kwargs):
    """Monte-Carlo RMSE for each admissible set, sorted ascending by combined RMSE.

    Each set's seed is derived from the master seed and the set content, so
    identical sets always receive identical random streams.
    """
    ranked = []
    for ms in sets:
        if not ms.admissible:
            raise ValueError(f"set {ms.label()} is not admissible")
        report = run_monte_carlo(
            set_port_set(structure, ms), true_grid, candidate_grid, snr_db, trials,
            _set_seed(seed, structure.name, ms.members), **mc_kwargs,
        )
        ms.rmse_deg = report.aggregate["rmse_gc"]
        ms.rmse_az_deg = report.aggregate["rmse_az"]
        ms.rmse_el_deg = report.aggregate["rmse_el"]
        ranked.append((ms, ms.rmse_deg))
    ranked.sort(key=lambda t: (t[1], len(t[0].members), [_id_key(i) for i in t[0].members]))
    return ranked


def write_ranking_csv(path, structure_name, ranked, config=None):
    rows = (
        (structure_name, ms.label(), ms.rmse_deg, ms.rmse_az_deg, ms.rmse_el_deg)
        for ms, _ in ranked
    )
    write_csv(path, RANKING_COLUMNS, rows, config)


def analytic_pattern(spec):
    """Analytic far-field from a short spec: ``monopole``, ``fourier:P``, ``magnetic-dipole:x``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "monopole":
        return MonopolePattern()
    if kind == "fourier":
        return FourierPattern(int(arg))
    if kind == "magnetic-dipole":
        if "," in arg:
            return MagneticDipolePattern([float(v) for v in arg.split(",")])
        return MagneticDipolePattern(arg or "x")
    raise ValueError(f"unknown analytic pattern {spec!r}")


def load_structure_file(path):
    """Parse a structure JSON file; pattern files are resolved relative to it."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: structure file must hold a JSON object")
    try:
        name = str(data["name"])
        diameter = float(data["diameter_m"])
        hw = float(data["height_to_width"])
        freq = data.get("frequency_mhz")
        freq = None if freq is None else float(freq)
        raw_modes = data["modes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: invalid structure record: {exc!r}") from None
    if not isinstance(raw_modes, list) or not raw_modes:
        raise ValueError(f"{path}: 'modes' must be a non-empty list")

    port_sets = {}
    modes = []
    for i, rm in enumerate(raw_modes):
        try:
            mode_id = rm["id"]
            lam = float(rm["eigenvalue"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: mode #{i} invalid: {exc!r}") from None
        if not math.isfinite(lam):
            raise ValueError(f"{path}: mode {mode_id!r} has a non-finite eigenvalue")
        group = rm.get("degeneracy_group")
        sym = rm.get("symmetry_class")
        pattern = None
        if rm.get("pattern"):
            pattern = analytic_pattern(rm["pattern"])
        elif rm.get("pattern_file"):
            pfile = (path.parent / rm["pattern_file"]).resolve()
            if pfile not in port_sets:
                port_sets[pfile] = read_pattern_table(pfile)[0]
            table = port_sets[pfile]
            port = int(rm.get("pattern_port", 0))
            if not 0 <= port < len(table):
                raise ValueError(f"{path}: mode {mode_id!r} refers to missing port {port}")
            pattern = table[port]
        modes.append(ModeRecord(
            mode_id=mode_id,
            eigenvalue=lam,
            degeneracy_group=None if group is None else str(group),
            symmetry_class=None if sym is None else str(sym),
            pattern=pattern,
        ))
    return StructureRecord(name=name, diameter_m=diameter, height_to_width=hw,
                           frequency_mhz=freq, modes=tuple(modes))


def cupola_structure():
    """Bundled example: the selected cupola modes with analytic far-field stand-ins."""
    return load_structure_file(Path(__file__).parent / "data" / "cupola.json")
