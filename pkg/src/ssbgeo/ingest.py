"""Power network ingestion.

Parses IEEE Common Data Format files (fixed-column BUS/BRANCH sections) and
a JSON mirror format, assembles the bus admittance matrix, and builds the
Cartesian quadratic power-flow map: voltage variables are the real and
imaginary parts of the bus phasors (slack imaginary part fixed to zero as
the angle reference), power-space rows are P/Q injections and squared
voltage magnitudes depending on bus type. Everything is per-unit on the
system MVA base.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .quadmap import QuadraticMap

__all__ = [
    "Bus",
    "Branch",
    "PowerNetwork",
    "AdmittanceMatrix",
    "VariableLayout",
    "ParseError",
    "NetworkValidationError",
    "parse_cdf",
    "parse_json",
    "load_network",
    "build_admittance",
    "to_quadratic_map",
    "network_map",
    "synthetic_network",
    "three_bus_network",
]

SLACK, PV, PQ = "slack", "PV", "PQ"


class ParseError(ValueError):
    pass


class NetworkValidationError(ValueError):
    pass


@dataclass
class Bus:
    id: int
    type: str
    base_voltage: float = 1.0
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    q_gen: float = 0.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass
class Branch:
    from_bus: int
    to_bus: int
    series_impedance: complex
    line_charging: float = 0.0
    tap_ratio: float = 0.0  # 0 means no transformer (ratio 1)


@dataclass
class PowerNetwork:
    buses: list
    branches: list
    base_mva: float = 100.0
    name: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.base_mva <= 0:
            raise NetworkValidationError("base_MVA must be positive")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise NetworkValidationError("duplicate bus ids")
        slacks = [b for b in self.buses if b.type == SLACK]
        if len(slacks) != 1:
            raise NetworkValidationError(
                f"exactly one slack bus required, found {len(slacks)}")
        known = set(ids)
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise NetworkValidationError(
                    f"branch {br.from_bus}-{br.to_bus} references unknown bus")

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.type == SLACK)

    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}


@dataclass
class AdmittanceMatrix:
    """Y = G + jB as real sparse parts with identical sparsity pattern."""

    G: sp.csr_matrix
    B: sp.csr_matrix

    @property
    def complex(self) -> sp.csr_matrix:
        return (self.G + 1j * self.B).tocsr()


@dataclass
class VariableLayout:
    """Index bookkeeping of the quadratic map.

    ``variables[j]`` is (bus id, "re"|"im") for voltage variable j;
    ``rows[i]`` is (bus id, "P"|"Q"|"Vmag2") for power-space row i;
    ``fixed`` records eliminated variables (the slack imaginary part).
    """

    variables: list
    rows: list
    fixed: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.variables)

    def complex_voltage(self, v: np.ndarray, bus_ids) -> np.ndarray:
        """Assemble complex phasors from a real variable vector."""
        lut = {key: j for j, key in enumerate(self.variables)}
        out = np.zeros(len(bus_ids), dtype=complex)
        for i, bid in enumerate(bus_ids):
            re = v[lut[(bid, "re")]]
            im = v[lut[(bid, "im")]] if (bid, "im") in lut else self.fixed.get((bid, "im"), 0.0)
            out[i] = re + 1j * im
        return out


# ---------------------------------------------------------------------------
# IEEE Common Data Format
# ---------------------------------------------------------------------------

_BUS_TYPE_CODE = {0: PQ, 1: PQ, 2: PV, 3: SLACK}


def _f(line: str, lo: int, hi: int) -> float:
    """Float from 1-indexed inclusive column range; blank -> 0."""
    s = line[lo - 1:hi].strip()
    return float(s) if s else 0.0


def _i(line: str, lo: int, hi: int) -> int:
    s = line[lo - 1:hi].strip()
    return int(s) if s else 0


def parse_cdf(text: str) -> PowerNetwork:
    """Parse IEEE CDF content (BUS DATA and BRANCH DATA sections only)."""
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file")
    header = lines[0]
    try:
        base_mva = _f(header, 32, 37)
    except ValueError as exc:
        raise ParseError(f"bad MVA base in header: {exc}") from exc
    if base_mva <= 0:
        base_mva = 100.0
    buses = []
    branches = []
    section = None
    section_start = 0
    terminated = set()
    for lineno, line in enumerate(lines[1:], start=2):
        upper = line.upper()
        if upper.startswith("BUS DATA"):
            section = "bus"
            section_start = lineno
            continue
        if upper.startswith("BRANCH DATA"):
            section = "branch"
            section_start = lineno
            continue
        if section is None:
            continue
        if line.strip().startswith("-9") or line.strip() == "END OF DATA":
            terminated.add(section)
            section = None
            continue
        if not line.strip():
            continue
        try:
            if section == "bus":
                buses.append(Bus(
                    id=_i(line, 1, 4),
                    type=_BUS_TYPE_CODE.get(_i(line, 25, 26), PQ),
                    base_voltage=_f(line, 28, 33) or 1.0,
                    p_load=_f(line, 41, 49) / base_mva,
                    q_load=_f(line, 50, 59) / base_mva,
                    p_gen=_f(line, 60, 67) / base_mva,
                    q_gen=_f(line, 68, 75) / base_mva,
                    shunt_g=_f(line, 107, 114),
                    shunt_b=_f(line, 115, 122),
                ))
            elif section == "branch":
                branches.append(Branch(
                    from_bus=_i(line, 1, 4),
                    to_bus=_i(line, 6, 9),
                    series_impedance=complex(_f(line, 20, 29), _f(line, 30, 40)),
                    line_charging=_f(line, 41, 50),
                    tap_ratio=_f(line, 77, 82),
                ))
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
    if section is not None:
        raise ParseError(
            f"section starting at line {section_start} missing -999 terminator")
    if "bus" not in terminated:
        raise ParseError("no BUS DATA section found")
    try:
        return PowerNetwork(buses=buses, branches=branches, base_mva=base_mva)
    except NetworkValidationError:
        raise


def parse_json(text: str) -> PowerNetwork:
    """JSON mirror of PowerNetwork; loads/gen given in per-unit directly."""
    data = json.loads(text)
    buses = [Bus(
        id=int(b["id"]), type=b["type"],
        base_voltage=float(b.get("base_voltage", 1.0)),
        p_load=float(b.get("p_load", 0.0)), q_load=float(b.get("q_load", 0.0)),
        p_gen=float(b.get("p_gen", 0.0)), q_gen=float(b.get("q_gen", 0.0)),
        shunt_g=float(b.get("shunt_g", 0.0)), shunt_b=float(b.get("shunt_b", 0.0)),
    ) for b in data["buses"]]
    branches = [Branch(
        from_bus=int(br["from"]), to_bus=int(br["to"]),
        series_impedance=complex(br["r"], br["x"]),
        line_charging=float(br.get("b", 0.0)),
        tap_ratio=float(br.get("tap", 0.0)),
    ) for br in data["branches"]]
    return PowerNetwork(buses=buses, branches=branches,
                        base_mva=float(data.get("base_mva", 100.0)),
                        name=data.get("name", ""))


def load_network(path_or_text, fmt: str | None = None) -> PowerNetwork:
    """Load from a path (format by extension) or raw text with ``fmt``."""
    text = path_or_text
    name = ""
    if fmt is None:
        p = str(path_or_text)
        if p.lower().endswith(".json"):
            fmt = "json"
        elif p.lower().endswith((".cdf", ".txt")):
            fmt = "cdf"
        else:
            raise ParseError(f"cannot infer format of {p!r}; pass fmt=")
        with open(p) as fh:
            text = fh.read()
        name = p
    net = parse_json(text) if fmt == "json" else parse_cdf(text)
    if name and not net.name:
        net.name = name
    return net


# ---------------------------------------------------------------------------
# admittance matrix and quadratic map
# ---------------------------------------------------------------------------


def build_admittance(net: PowerNetwork) -> AdmittanceMatrix:
    """Standard Y-bus assembly with tap transformers and shunts."""
    n = net.n_buses
    idx = net.bus_index()
    y = sp.lil_matrix((n, n), dtype=complex)
    for br in net.branches:
        if br.series_impedance == 0:
            raise NetworkValidationError(
                f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / br.series_impedance
        ysh = 1j * br.line_charging / 2.0
        tap = br.tap_ratio if br.tap_ratio else 1.0
        y[f, f] += (ys + ysh) / tap**2
        y[t, t] += ys + ysh
        y[f, t] -= ys / tap
        y[t, f] -= ys / tap
    for b in net.buses:
        i = idx[b.id]
        y[i, i] += complex(b.shunt_g, b.shunt_b)
    yc = y.tocsr()
    return AdmittanceMatrix(G=yc.real.tocsr(), B=yc.imag.tocsr())


def to_quadratic_map(net: PowerNetwork, y: AdmittanceMatrix):
    """Build (QuadraticMap, VariableLayout) for the network.

    n = 2N - 1 voltage variables. Rows per bus: slack -> Vmag2,
    PV -> (P, Vmag2), PQ -> (P, Q). Each row is symmetrized,
    A = (M + M^T)/2, from the raw bilinear form of the rectangular
    power-flow equations.
    """
    n_bus = net.n_buses
    idx = net.bus_index()
    variables = []
    fixed = {}
    for b in net.buses:
        variables.append((b.id, "re"))
        if b.type == SLACK:
            fixed[(b.id, "im")] = 0.0
        else:
            variables.append((b.id, "im"))
    var_of = {key: j for j, key in enumerate(variables)}
    n = len(variables)

    rows = []
    for b in net.buses:
        if b.type == SLACK:
            rows.append((b.id, "Vmag2"))
        elif b.type == PV:
            rows.append((b.id, "P"))
            rows.append((b.id, "Vmag2"))
        else:
            rows.append((b.id, "P"))
            rows.append((b.id, "Q"))
    if len(rows) != n:
        raise NetworkValidationError(
            f"row count {len(rows)} does not match variable count {n}")

    gm = y.G.tocoo()
    bm = y.B.tocoo()

    def var(i_bus, part):
        bid = net.buses[i_bus].id
        return var_of.get((bid, part))

    # raw bilinear forms as COO triplets per row, then symmetrized
    p_entries = [[] for _ in range(n_bus)]
    q_entries = [[] for _ in range(n_bus)]

    def add(entries, i, part_i, k, part_k, val):
        ji = var(i, part_i)
        jk = var(k, part_k)
        if ji is None or jk is None or val == 0.0:
            return
        entries.append((ji, jk, val))

    # P_i = e_i sum(G e - B f) + f_i sum(G f + B e)
    # Q_i = f_i sum(G e - B f) - e_i sum(G f + B e)
    for i, k, g in zip(gm.row, gm.col, gm.data):
        add(p_entries[i], i, "re", k, "re", g)
        add(p_entries[i], i, "im", k, "im", g)
        add(q_entries[i], i, "im", k, "re", g)
        add(q_entries[i], i, "re", k, "im", -g)
    for i, k, b_ik in zip(bm.row, bm.col, bm.data):
        add(p_entries[i], i, "re", k, "im", -b_ik)
        add(p_entries[i], i, "im", k, "re", b_ik)
        add(q_entries[i], i, "im", k, "im", -b_ik)
        add(q_entries[i], i, "re", k, "re", -b_ik)

    def row_matrix(entries):
        if entries:
            r, c, v = zip(*entries)
            raw = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
        else:
            raw = sp.csr_matrix((n, n))
        return 0.5 * (raw + raw.T)

    mats = []
    for bid, kind in rows:
        i = idx[bid]
        if kind == "Vmag2":
            entries = []
            add(entries, i, "re", i, "re", 1.0)
            add(entries, i, "im", i, "im", 1.0)
            mats.append(row_matrix(entries))
        elif kind == "P":
            mats.append(row_matrix(p_entries[i]))
        else:
            mats.append(row_matrix(q_entries[i]))
    layout = VariableLayout(variables=variables, rows=rows, fixed=fixed)
    return QuadraticMap(mats), layout


def network_map(net: PowerNetwork):
    """Convenience: admittance + quadratic map in one call."""
    y = build_admittance(net)
    qm, layout = to_quadratic_map(net, y)
    return qm, layout, y


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------


def three_bus_network() -> PowerNetwork:
    """Small 3-bus system (1 slack + 2 PQ, n = 5)."""
    buses = [
        Bus(id=1, type=SLACK, base_voltage=1.06),
        Bus(id=2, type=PQ, p_load=0.5, q_load=0.2),
        Bus(id=3, type=PQ, p_load=0.3, q_load=0.1),
    ]
    branches = [
        Branch(1, 2, complex(0.02, 0.06), 0.03),
        Branch(1, 3, complex(0.08, 0.24), 0.025),
        Branch(2, 3, complex(0.06, 0.18), 0.02),
    ]
    return PowerNetwork(buses=buses, branches=branches, base_mva=100.0,
                        name="3bus")


def synthetic_network(n_buses: int, seed: int = 0) -> PowerNetwork:
    """Deterministic synthetic transmission network of a given size.

    Ring backbone plus random chords, realistic per-unit line parameters,
    roughly one PV bus per five buses. Used where archive test cases of a
    given size are not bundled; the geometry code only cares about the
    dimensions and sparsity, not the provenance of the data.
    """
    rng = np.random.default_rng(seed + 1000 * n_buses)
    buses = [Bus(id=1, type=SLACK, base_voltage=1.06, p_gen=2.0)]
    for i in range(2, n_buses + 1):
        if i % 5 == 0:
            buses.append(Bus(id=i, type=PV, base_voltage=1.04,
                             p_gen=round(float(rng.uniform(0.2, 0.8)), 4),
                             p_load=round(float(rng.uniform(0.0, 0.3)), 4)))
        else:
            buses.append(Bus(id=i, type=PQ,
                             p_load=round(float(rng.uniform(0.05, 0.6)), 4),
                             q_load=round(float(rng.uniform(0.01, 0.25)), 4)))
    branches = []
    for i in range(1, n_buses + 1):
        j = i + 1 if i < n_buses else 1
        r = round(float(rng.uniform(0.01, 0.08)), 5)
        x = round(float(rng.uniform(0.05, 0.25)), 5)
        b = round(float(rng.uniform(0.0, 0.05)), 5)
        branches.append(Branch(i, j, complex(r, x), b))
    n_chords = max(1, n_buses // 3)
    for _ in range(n_chords):
        i = int(rng.integers(1, n_buses + 1))
        j = int(rng.integers(1, n_buses + 1))
        if i == j or abs(i - j) == 1:
            continue
        r = round(float(rng.uniform(0.02, 0.1)), 5)
        x = round(float(rng.uniform(0.08, 0.3)), 5)
        branches.append(Branch(i, j, complex(r, x), 0.0))
    return PowerNetwork(buses=buses, branches=branches, base_mva=100.0,
                        name=f"synth{n_buses}")
