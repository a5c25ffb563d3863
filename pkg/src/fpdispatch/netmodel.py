"""Power-network domain model: case data types, parsing, validation.

A problem instance is a :class:`NetworkCase`: buses, lines, generators,
storage units, a per-bus/per-timestep load profile, and horizon settings.
Cases are read from a human-readable sectioned text format (see
:func:`parse_case`) and are immutable after parsing, so one case can be
shared across concurrent solver runs.

Generator efficiency is the quadratic eta(p) = a*p^2 + b*p + c in the
per-unit output p = P / P_base, with a <= 0 (concave curve). Fuel burn
converts delivered energy through eta and the fuel energy density alpha
(MWh per liter).
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, fields

import numpy as np

__all__ = [
    "BusSpec",
    "LineSpec",
    "GeneratorSpec",
    "StorageSpec",
    "NetworkCase",
    "CaseParseError",
    "CaseReferenceError",
    "EfficiencyDomainError",
    "parse_case",
    "load_case",
    "serialize_case",
    "validate_case",
    "efficiency",
    "fuel_rate",
]


class CaseParseError(ValueError):
    """Malformed case document (bad section, field, or value)."""


class CaseReferenceError(ValueError):
    """A component references a bus id that does not exist."""


class EfficiencyDomainError(ValueError):
    """Fuel-rate evaluation requested where eta(p) <= 0."""


@dataclass(frozen=True)
class BusSpec:
    """Voltage magnitude and angle limits of one bus."""

    id: int
    v_min: float
    v_max: float
    theta_min: float
    theta_max: float


@dataclass(frozen=True)
class LineSpec:
    """One line, series admittance y = g - j*b (b > 0 means inductive).

    `g` and `b` are per-unit on the system MVA base; the builder assembles
    bus-admittance entries from them (diagonal +g, -b; off-diagonal -g, +b).
    Ratings bound |P_ik| and |Q_ik| in MW / MVAr.
    """

    from_bus: int
    to_bus: int
    g: float
    b: float
    rating_mw: float
    rating_mvar: float


@dataclass(frozen=True)
class GeneratorSpec:
    """Dispatchable unit with quadratic efficiency curve.

    `p_base` is the rated capacity in MW; the efficiency argument is the
    per-unit output p = P / p_base so p = 1 is the rated point. `ramp_down`
    / `ramp_up` bound the step-to-step MW change of the real output.
    """

    id: str
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    p_base: float
    a: float
    b: float
    c: float
    ramp_down: float
    ramp_up: float


@dataclass(frozen=True)
class StorageSpec:
    """Energy storage unit; discharge-positive power convention."""

    id: str
    bus: int
    capacity_mwh: float
    max_charge_mw: float
    max_discharge_mw: float
    eta: float
    soc_min: float
    soc_max: float
    e0_mwh: float


@dataclass(frozen=True, eq=False)
class NetworkCase:
    """A complete, immutable problem instance.

    `p_load` / `q_load` are (T, n_bus) arrays in MW / MVAr, indexed by
    timestep and bus position (the order of `buses`). Missing (bus, t)
    pairs in the source document are zero-filled.
    """

    buses: tuple[BusSpec, ...]
    lines: tuple[LineSpec, ...]
    generators: tuple[GeneratorSpec, ...]
    storage: tuple[StorageSpec, ...]
    p_load: np.ndarray
    q_load: np.ndarray
    horizon: int
    dt_hours: float
    alpha_mwh_per_liter: float
    mva_base: float
    bus_pos: dict[int, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "bus_pos", {b.id: i for i, b in enumerate(self.buses)}
        )
        self.p_load.setflags(write=False)
        self.q_load.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, NetworkCase):
            return NotImplemented
        for f in fields(self):
            if f.name == "bus_pos":
                continue
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                if not (a.shape == b.shape and np.array_equal(a, b)):
                    return False
            elif a != b:
                return False
        return True


def efficiency(gen: GeneratorSpec, p: float) -> float:
    """Evaluate eta(p) = a*p^2 + b*p + c at per-unit output p.

    Evaluation outside the operating band is permitted (diagnostics);
    callers that need positivity must check the result.
    """
    return gen.a * p * p + gen.b * p + gen.c


def fuel_rate(gen: GeneratorSpec, p_mw: float, alpha: float) -> float:
    """Fuel burn rate P / (alpha * eta(P / p_base)) in liters per hour.

    Raises :class:`EfficiencyDomainError` if eta(p) <= 0 at the requested
    output; a zero output on a positive curve burns nothing.
    """
    eta = efficiency(gen, p_mw / gen.p_base)
    if eta <= 0.0:
        raise EfficiencyDomainError(
            f"generator {gen.id}: eta({p_mw / gen.p_base:.6g}) = {eta:.6g} <= 0"
        )
    return p_mw / (alpha * eta)


# ---------------------------------------------------------------------------
# Validation

_ETA_GRID = 100


def _eta_positive_on_band(gen: GeneratorSpec) -> bool:
    lo, hi = gen.p_min / gen.p_base, gen.p_max / gen.p_base
    ps = np.linspace(lo, hi, _ETA_GRID)
    return bool(np.all(gen.a * ps * ps + gen.b * ps + gen.c > 0.0))


def validate_case(case: NetworkCase) -> list[str]:
    """Check every component invariant; returns a list of violation messages.

    An empty list means the case is valid. Report-only: never raises.
    """
    out: list[str] = []
    seen_bus = set()
    for b in case.buses:
        if b.id in seen_bus:
            out.append(f"bus {b.id}: duplicate id")
        seen_bus.add(b.id)
        if not (0.0 < b.v_min <= b.v_max):
            out.append(f"bus {b.id}: voltage bounds must satisfy 0 < v_min <= v_max")
        if b.theta_min > b.theta_max:
            out.append(f"bus {b.id}: theta_min > theta_max")
    for ln in case.lines:
        if ln.from_bus == ln.to_bus:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: from and to bus coincide")
        for end in (ln.from_bus, ln.to_bus):
            if end not in case.bus_pos:
                out.append(f"line {ln.from_bus}-{ln.to_bus}: unknown bus {end}")
        if ln.rating_mw < 0 or ln.rating_mvar < 0:
            out.append(f"line {ln.from_bus}-{ln.to_bus}: negative rating")
    ids = set()
    for g in case.generators:
        if g.id in ids:
            out.append(f"generator {g.id}: duplicate id")
        ids.add(g.id)
        if g.bus not in case.bus_pos:
            out.append(f"generator {g.id}: unknown bus {g.bus}")
        if not (g.p_max >= g.p_min >= 0.0):
            out.append(f"generator {g.id}: requires p_max >= p_min >= 0")
        if g.p_base <= 0.0:
            out.append(f"generator {g.id}: p_base must be positive")
        if g.q_min > g.q_max:
            out.append(f"generator {g.id}: q_min > q_max")
        if g.a > 0.0:
            out.append(f"generator {g.id}: convex efficiency curve (a > 0)")
        if g.ramp_down < 0.0 or g.ramp_up < 0.0:
            out.append(f"generator {g.id}: negative ramp limit")
        if g.p_base > 0.0 and not _eta_positive_on_band(g):
            out.append(f"generator {g.id}: efficiency nonpositive on operating range")
    for s in case.storage:
        if s.id in ids:
            out.append(f"storage {s.id}: duplicate id")
        ids.add(s.id)
        if s.bus not in case.bus_pos:
            out.append(f"storage {s.id}: unknown bus {s.bus}")
        if not (0.0 <= s.soc_min < s.soc_max <= 1.0):
            out.append(f"storage {s.id}: requires 0 <= soc_min < soc_max <= 1")
        if s.capacity_mwh <= 0.0:
            out.append(f"storage {s.id}: capacity must be positive")
        if s.e0_mwh < s.soc_min * s.capacity_mwh - 1e-12:
            out.append(f"storage {s.id}: initial energy below SOC_min")
        if s.e0_mwh > s.soc_max * s.capacity_mwh + 1e-12:
            out.append(f"storage {s.id}: initial energy above SOC_max")
        if s.max_charge_mw < 0.0 or s.max_discharge_mw < 0.0:
            out.append(f"storage {s.id}: negative charge/discharge rate")
        if not (0.0 < s.eta <= 1.0):
            out.append(f"storage {s.id}: eta must lie in (0, 1]")
    if case.horizon < 1:
        out.append("system: horizon must be >= 1")
    if case.dt_hours <= 0.0:
        out.append("system: dt_hours must be positive")
    if case.alpha_mwh_per_liter <= 0.0:
        out.append("system: alpha_mwh_per_liter must be positive")
    if case.mva_base <= 0.0:
        out.append("system: mva_base must be positive")
    n = len(case.buses)
    if case.p_load.shape != (case.horizon, n) or case.q_load.shape != (case.horizon, n):
        out.append("loads: profile shape does not cover every bus and timestep")
    return out


# ---------------------------------------------------------------------------
# Case document format
#
#   [system]            mva_base, T, dt_hours, alpha_mwh_per_liter
#   [buses]             id v_min v_max theta_min theta_max
#   [lines]             from to g_pu b_pu rating_mw rating_mvar
#   [generators]        id bus p_min p_max q_min q_max p_base a b c
#                       ramp_down ramp_up
#   [storage]           id bus capacity_mwh max_charge_mw max_discharge_mw
#                       eta soc_min soc_max e0_mwh
#   [loads]             either `csv = FILE` (columns t,bus,p_mw,q_mvar)
#                       or inline rows `t bus p_mw q_mvar`
#
# `#` starts a comment; data rows are whitespace-separated.

_SECTIONS = ("system", "buses", "lines", "generators", "storage", "loads")

_SYSTEM_KEYS = ("mva_base", "T", "dt_hours", "alpha_mwh_per_liter")


def _perr(lineno: int, msg: str) -> CaseParseError:
    return CaseParseError(f"line {lineno}: {msg}")


def _to_float(tok: str, lineno: int, fieldname: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise _perr(lineno, f"field '{fieldname}': not a number: {tok!r}") from None


def _to_int(tok: str, lineno: int, fieldname: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise _perr(lineno, f"field '{fieldname}': not an integer: {tok!r}") from None


def parse_case(text: str, loads_dir: str | None = None) -> NetworkCase:
    """Parse a case document into a :class:`NetworkCase`.

    `loads_dir` resolves a relative `csv =` path in the [loads] section;
    it defaults to the current working directory.

    Raises :class:`CaseParseError` on schema violations (message names the
    offending field and line) and :class:`CaseReferenceError` when a
    generator, storage unit, line, or load row points at an unknown bus.
    """
    sections: dict[str, list[tuple[int, str]]] = {s: [] for s in _SECTIONS}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise _perr(lineno, f"unknown section [{name}]")
            current = name
            continue
        if current is None:
            raise _perr(lineno, "data before any section header")
        sections[current].append((lineno, line))

    # [system]
    sysvals: dict[str, float] = {}
    for lineno, line in sections["system"]:
        if "=" not in line:
            raise _perr(lineno, "expected 'key = value' in [system]")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _SYSTEM_KEYS:
            raise _perr(lineno, f"unknown system key '{key}'")
        sysvals[key] = _to_float(val, lineno, key)
    for key in _SYSTEM_KEYS:
        if key not in sysvals:
            raise CaseParseError(f"[system] section: missing required key '{key}'")
    horizon = int(sysvals["T"])
    if horizon != sysvals["T"] or horizon < 1:
        raise CaseParseError("[system] section: T must be a positive integer")

    buses = []
    for lineno, line in sections["buses"]:
        tok = line.split()
        if len(tok) != 5:
            raise _perr(lineno, "bus row needs 5 fields: id v_min v_max theta_min theta_max")
        buses.append(
            BusSpec(
                id=_to_int(tok[0], lineno, "bus id"),
                v_min=_to_float(tok[1], lineno, "v_min"),
                v_max=_to_float(tok[2], lineno, "v_max"),
                theta_min=_to_float(tok[3], lineno, "theta_min"),
                theta_max=_to_float(tok[4], lineno, "theta_max"),
            )
        )
    if not buses:
        raise CaseParseError("[buses] section: at least one bus required")
    bus_ids = {b.id for b in buses}
    if len(bus_ids) != len(buses):
        raise CaseParseError("[buses] section: duplicate bus ids")

    def check_bus(bus: int, lineno: int, owner: str):
        if bus not in bus_ids:
            raise CaseReferenceError(f"line {lineno}: {owner} references unknown bus {bus}")

    lines = []
    for lineno, line in sections["lines"]:
        tok = line.split()
        if len(tok) != 6:
            raise _perr(lineno, "line row needs 6 fields: from to g_pu b_pu rating_mw rating_mvar")
        spec = LineSpec(
            from_bus=_to_int(tok[0], lineno, "from"),
            to_bus=_to_int(tok[1], lineno, "to"),
            g=_to_float(tok[2], lineno, "g_pu"),
            b=_to_float(tok[3], lineno, "b_pu"),
            rating_mw=_to_float(tok[4], lineno, "rating_mw"),
            rating_mvar=_to_float(tok[5], lineno, "rating_mvar"),
        )
        check_bus(spec.from_bus, lineno, "line")
        check_bus(spec.to_bus, lineno, "line")
        lines.append(spec)

    gens = []
    for lineno, line in sections["generators"]:
        tok = line.split()
        if len(tok) != 12:
            raise _perr(
                lineno,
                "generator row needs 12 fields: id bus p_min p_max q_min q_max "
                "p_base a b c ramp_down ramp_up",
            )
        names = ("bus", "p_min", "p_max", "q_min", "q_max", "p_base", "a", "b", "c",
                 "ramp_down", "ramp_up")
        vals = [_to_float(t, lineno, n) for t, n in zip(tok[2:], names[1:])]
        spec = GeneratorSpec(
            id=tok[0],
            bus=_to_int(tok[1], lineno, "bus"),
            p_min=vals[0], p_max=vals[1], q_min=vals[2], q_max=vals[3],
            p_base=vals[4], a=vals[5], b=vals[6], c=vals[7],
            ramp_down=vals[8], ramp_up=vals[9],
        )
        check_bus(spec.bus, lineno, f"generator {spec.id}")
        gens.append(spec)
    if not gens:
        raise CaseParseError("[generators] section: at least one generator required")

    stores = []
    for lineno, line in sections["storage"]:
        tok = line.split()
        if len(tok) != 9:
            raise _perr(
                lineno,
                "storage row needs 9 fields: id bus capacity_mwh max_charge_mw "
                "max_discharge_mw eta soc_min soc_max e0_mwh",
            )
        names = ("bus", "capacity_mwh", "max_charge_mw", "max_discharge_mw", "eta",
                 "soc_min", "soc_max", "e0_mwh")
        vals = [_to_float(t, lineno, n) for t, n in zip(tok[2:], names[1:])]
        spec = StorageSpec(
            id=tok[0],
            bus=_to_int(tok[1], lineno, "bus"),
            capacity_mwh=vals[0], max_charge_mw=vals[1], max_discharge_mw=vals[2],
            eta=vals[3], soc_min=vals[4], soc_max=vals[5], e0_mwh=vals[6],
        )
        check_bus(spec.bus, lineno, f"storage {spec.id}")
        stores.append(spec)

    # [loads] — inline rows or csv pointer
    pos = {b.id: i for i, b in enumerate(buses)}
    p_load = np.zeros((horizon, len(buses)))
    q_load = np.zeros((horizon, len(buses)))

    def add_load(t: int, bus: int, p: float, q: float, lineno: int):
        if not (0 <= t < horizon):
            raise _perr(lineno, f"load timestep {t} outside 0..{horizon - 1}")
        if bus not in pos:
            raise CaseReferenceError(f"line {lineno}: load references unknown bus {bus}")
        p_load[t, pos[bus]] += p
        q_load[t, pos[bus]] += q

    csv_path = None
    for lineno, line in sections["loads"]:
        if "=" in line:
            key, val = (part.strip() for part in line.split("=", 1))
            if key != "csv":
                raise _perr(lineno, f"unknown loads key '{key}'")
            csv_path = val
            continue
        tok = line.split()
        if len(tok) != 4:
            raise _perr(lineno, "load row needs 4 fields: t bus p_mw q_mvar")
        add_load(
            _to_int(tok[0], lineno, "t"),
            _to_int(tok[1], lineno, "bus"),
            _to_float(tok[2], lineno, "p_mw"),
            _to_float(tok[3], lineno, "q_mvar"),
            lineno,
        )
    if csv_path is not None:
        full = csv_path
        if not os.path.isabs(full):
            full = os.path.join(loads_dir or ".", csv_path)
        try:
            with open(full, newline="") as fh:
                _read_load_csv(fh, add_load)
        except OSError as exc:
            raise CaseParseError(f"[loads] csv file not readable: {full}: {exc}") from exc

    return NetworkCase(
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        storage=tuple(stores),
        p_load=p_load,
        q_load=q_load,
        horizon=horizon,
        dt_hours=sysvals["dt_hours"],
        alpha_mwh_per_liter=sysvals["alpha_mwh_per_liter"],
        mva_base=sysvals["mva_base"],
    )


def _read_load_csv(fh, add_load):
    reader = csv.reader(fh)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["t", "bus", "p_mw", "q_mvar"]:
        raise CaseParseError("load csv: header must be 't,bus,p_mw,q_mvar'")
    for rowno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise CaseParseError(f"load csv row {rowno}: needs 4 columns")
        try:
            t, bus = int(row[0]), int(row[1])
            p, q = float(row[2]), float(row[3])
        except ValueError:
            raise CaseParseError(f"load csv row {rowno}: bad number") from None
        add_load(t, bus, p, q, rowno)


def load_case(path: str) -> NetworkCase:
    """Read and parse a case file; relative load CSVs resolve next to it."""
    with open(path) as fh:
        text = fh.read()
    return parse_case(text, loads_dir=os.path.dirname(os.path.abspath(path)))


def serialize_case(case: NetworkCase) -> str:
    """Render a case back to document text (loads inline).

    parse_case(serialize_case(c)) reproduces `c` exactly: floats are written
    with repr so every bit survives the round trip.
    """
    out = io.StringIO()
    w = out.write
    w("[system]\n")
    w(f"mva_base = {case.mva_base!r}\n")
    w(f"T = {case.horizon}\n")
    w(f"dt_hours = {case.dt_hours!r}\n")
    w(f"alpha_mwh_per_liter = {case.alpha_mwh_per_liter!r}\n")
    w("\n[buses]\n")
    for b in case.buses:
        w(f"{b.id} {b.v_min!r} {b.v_max!r} {b.theta_min!r} {b.theta_max!r}\n")
    w("\n[lines]\n")
    for ln in case.lines:
        w(f"{ln.from_bus} {ln.to_bus} {ln.g!r} {ln.b!r} {ln.rating_mw!r} {ln.rating_mvar!r}\n")
    w("\n[generators]\n")
    for g in case.generators:
        w(
            f"{g.id} {g.bus} {g.p_min!r} {g.p_max!r} {g.q_min!r} {g.q_max!r} "
            f"{g.p_base!r} {g.a!r} {g.b!r} {g.c!r} {g.ramp_down!r} {g.ramp_up!r}\n"
        )
    w("\n[storage]\n")
    for s in case.storage:
        w(
            f"{s.id} {s.bus} {s.capacity_mwh!r} {s.max_charge_mw!r} "
            f"{s.max_discharge_mw!r} {s.eta!r} {s.soc_min!r} {s.soc_max!r} {s.e0_mwh!r}\n"
        )
    w("\n[loads]\n")
    for t in range(case.horizon):
        for j, b in enumerate(case.buses):
            p, q = float(case.p_load[t, j]), float(case.q_load[t, j])
            if p != 0.0 or q != 0.0:
                w(f"{t} {b.id} {p!r} {q!r}\n")
    return out.getvalue()
