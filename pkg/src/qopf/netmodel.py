"""Feeder data model, validation, and nodal admittance construction.

Buses are indexed 0..n-1 with the slack at index 0.  Single-phase feeders
are expected in per-unit; three-phase feeders carry physical units (volts,
ohms, VA) with per-phase quantities stored as length-3 arrays (or 3x3
impedance matrices for mutually coupled lines).

Three-phase node ordering is by phase: all phase-a nodes first, then b,
then c.  Non-slack node index of (phase p, bus k) is p*(n-1) + (k-1).
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WYE = "wye"
DELTA = "delta"


class FeederError(ValueError):
    """Raised for schema violations or inconsistent feeder data."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str = "load"  # "slack" | "load"
    phases: int = 1
    v_nom: float = 1.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    z: complex | np.ndarray  # series impedance; (3,) or (3,3) when three-phase
    b_shunt: complex | np.ndarray = 0.0  # total shunt susceptance, split half per end


@dataclass(frozen=True)
class ZipLoad:
    bus: int
    s_p: complex | np.ndarray = 0.0
    s_i: complex | np.ndarray = 0.0
    s_z: complex | np.ndarray = 0.0
    connection: str = WYE  # meaningful in three-phase mode only

    def total(self):
        return np.sum(self.s_p) + np.sum(self.s_i) + np.sum(self.s_z)


@dataclass(frozen=True)
class Generator:
    bus: int
    s_max: complex
    s_min: complex = 0.0
    balanced: bool = False


@dataclass
class FeederModel:
    buses: list[Bus]
    branches: list[Branch]
    loads: list[ZipLoad]
    generators: list[Generator]
    slack_voltage: complex | np.ndarray = 1.0 + 0.0j

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def phases(self) -> int:
        return self.buses[0].phases if self.buses else 1

    @property
    def is_three_phase(self) -> bool:
        return self.phases == 3

    @property
    def v_nom(self) -> float:
        """Nominal phase voltage used for the three-phase normalization."""
        return float(self.buses[0].v_nom)

    def validate(self) -> None:
        if not self.buses:
            raise FeederError("feeder has no buses")
        ids = [b.id for b in self.buses]
        if ids != list(range(len(ids))):
            raise FeederError(f"bus ids must be contiguous 0..n-1, got {ids}")
        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if slacks != [0]:
            raise FeederError(f"exactly one slack bus at index 0 required, got {slacks}")
        phases = {b.phases for b in self.buses}
        if len(phases) != 1 or phases.pop() not in (1, 3):
            raise FeederError("all buses must share a phase count of 1 or 3")
        n = self.n_bus
        seen = set()
        for br in self.branches:
            if br.from_bus == br.to_bus:
                raise FeederError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
            if not (0 <= br.from_bus < n and 0 <= br.to_bus < n):
                raise FeederError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
            if np.min(np.abs(np.atleast_1d(np.diag(np.atleast_2d(br.z))))) == 0.0:
                raise FeederError(f"branch {br.from_bus}-{br.to_bus} has zero series impedance")
            key = (min(br.from_bus, br.to_bus), max(br.from_bus, br.to_bus))
            seen.add(key)
        for ld in self.loads:
            if not (0 <= ld.bus < n):
                raise FeederError(f"load references unknown bus {ld.bus}")
            if ld.connection not in (WYE, DELTA):
                raise FeederError(f"unknown load connection {ld.connection!r}")
        for g in self.generators:
            if not (0 < g.bus < n):
                raise FeederError(f"generator references unknown bus {g.bus}")
            for lo, hi, tag in ((g.s_min.real, g.s_max.real, "real"),
                                (g.s_min.imag, g.s_max.imag, "imag")):
                if not (lo <= 0.0 <= hi):
                    raise FeederError(
                        f"generator at bus {g.bus}: {tag} bounds [{lo}, {hi}] must bracket 0")
        # connectivity over the bus graph
        adj: dict[int, list[int]] = {i: [] for i in range(n)}
        for br in self.branches:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
        reached = {0}
        stack = [0]
        while stack:
            for m in adj[stack.pop()]:
                if m not in reached:
                    reached.add(m)
                    stack.append(m)
        if len(reached) != n:
            missing = sorted(set(range(n)) - reached)
            raise FeederError(f"feeder graph is disconnected; unreachable buses {missing}")

    def is_radial(self) -> bool:
        return len(self.branches) == self.n_bus - 1

    def total_load(self) -> complex:
        return sum((ld.total() for ld in self.loads), 0.0 + 0.0j)


@dataclass
class AdmittanceSystem:
    """Slack/non-slack partition of the nodal admittance matrix."""

    y00: np.ndarray
    y0n: np.ndarray
    yn0: np.ndarray
    ynn: np.ndarray
    g_n: np.ndarray = field(init=False)
    g_0: np.ndarray = field(init=False)
    v0: np.ndarray = None
    y_full: np.ndarray = None
    slack_idx: np.ndarray = None
    node_idx: np.ndarray = None

    def __post_init__(self):
        self.g_n = self.ynn.real.copy()
        self.g_0 = self.yn0.real.copy()

    @property
    def n_nodes(self) -> int:
        return self.ynn.shape[0]


def _branch_blocks(br: Branch, phases: int) -> tuple[np.ndarray, np.ndarray]:
    """Series admittance block and half-shunt block of a branch (PxP)."""
    z = np.asarray(br.z)
    if phases == 1:
        y = np.array([[1.0 / complex(z)]])
    elif z.ndim <= 1:
        y = np.diag(1.0 / np.broadcast_to(z, (3,)).astype(complex))
    else:
        y = np.linalg.inv(z.astype(complex))
    b = np.asarray(br.b_shunt)
    if phases == 1:
        ysh = np.array([[0.5j * complex(b)]])
    elif b.ndim <= 1:
        ysh = np.diag(0.5j * np.broadcast_to(b, (3,)).astype(complex))
    else:
        ysh = 0.5j * b.astype(complex)
    return y, ysh


def build_admittance(feeder: FeederModel) -> AdmittanceSystem:
    """Assemble the partitioned nodal admittance matrix of a validated feeder."""
    feeder.validate()
    nb = feeder.n_bus
    p = feeder.phases
    nn = p * nb
    y = np.zeros((nn, nn), dtype=complex)
    # phase-major node index of (phase, bus)
    idx = lambda ph, k: ph * nb + k
    # canonical stamping order: assembly is bit-identical under permutation
    # of the branch list
    branches = sorted(feeder.branches,
                      key=lambda b: (min(b.from_bus, b.to_bus),
                                     max(b.from_bus, b.to_bus),
                                     b.from_bus, str(np.asarray(b.z)),
                                     str(np.asarray(b.b_shunt))))
    for br in branches:
        ys, ysh = _branch_blocks(br, p)
        f, t = br.from_bus, br.to_bus
        for a in range(p):
            for b_ in range(p):
                y[idx(a, f), idx(b_, f)] += ys[a, b_] + ysh[a, b_]
                y[idx(a, t), idx(b_, t)] += ys[a, b_] + ysh[a, b_]
                y[idx(a, f), idx(b_, t)] -= ys[a, b_]
                y[idx(a, t), idx(b_, f)] -= ys[a, b_]
    slack = np.array([idx(a, 0) for a in range(p)])
    rest = np.array([idx(a, k) for a in range(p) for k in range(1, nb)])
    v0 = np.atleast_1d(np.asarray(feeder.slack_voltage, dtype=complex))
    adm = AdmittanceSystem(
        y00=y[np.ix_(slack, slack)],
        y0n=y[np.ix_(slack, rest)],
        yn0=y[np.ix_(rest, slack)],
        ynn=y[np.ix_(rest, rest)],
        v0=v0,
        y_full=y,
        slack_idx=slack,
        node_idx=rest,
    )
    return adm


# ---------------------------------------------------------------------------
# feeder JSON (schema documented in the README)

def _c(re, im) -> complex:
    return complex(re) + 1j * complex(im)


def _maybe_vec(re, im):
    """Scalar or per-phase pair -> complex scalar or (3,) complex array."""
    if isinstance(re, (list, tuple)):
        return np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)
    return _c(re, im)


def feeder_from_dict(doc: dict) -> FeederModel:
    try:
        buses = [Bus(id=int(b["id"]), kind=b.get("kind", "load"),
                     phases=int(b.get("phases", 1)), v_nom=float(b.get("v_nom", 1.0)))
                 for b in doc["buses"]]
        branches = []
        for b in doc["branches"]:
            r, x = b["r"], b["x"]
            if isinstance(r, (list, tuple)):
                z = np.asarray(r, dtype=float) + 1j * np.asarray(x, dtype=float)
            else:
                z = _c(r, x)
            branches.append(Branch(from_bus=int(b["from"]), to_bus=int(b["to"]),
                                   z=z, b_shunt=np.asarray(b.get("b_shunt", 0.0))
                                   if isinstance(b.get("b_shunt", 0.0), (list, tuple))
                                   else float(b.get("b_shunt", 0.0))))
        loads = [ZipLoad(bus=int(l["bus"]),
                         s_p=_maybe_vec(l.get("sp_re", 0.0), l.get("sp_im", 0.0)),
                         s_i=_maybe_vec(l.get("si_re", 0.0), l.get("si_im", 0.0)),
                         s_z=_maybe_vec(l.get("sz_re", 0.0), l.get("sz_im", 0.0)),
                         connection=l.get("connection", WYE))
                 for l in doc.get("loads", [])]
        gens = [Generator(bus=int(g["bus"]),
                          s_max=_c(g["smax_re"], g["smax_im"]),
                          s_min=_c(g.get("smin_re", 0.0), g.get("smin_im", 0.0)),
                          balanced=bool(g.get("balanced", False)))
                for g in doc.get("generators", [])]
        sv = doc.get("slack_voltage", {"re": 1.0, "im": 0.0})
        slack_voltage = _maybe_vec(sv.get("re", 1.0), sv.get("im", 0.0))
    except (KeyError, TypeError) as exc:
        raise FeederError(f"feeder document is malformed: {exc}") from exc
    feeder = FeederModel(buses=buses, branches=branches, loads=loads,
                         generators=gens, slack_voltage=slack_voltage)
    feeder.validate()
    return feeder


def feeder_to_dict(feeder: FeederModel) -> dict:
    def pair(v):
        a = np.asarray(v)
        if a.ndim == 0:
            return float(a.real), float(a.imag)
        return a.real.tolist(), a.imag.tolist()

    doc = {"buses": [{"id": b.id, "kind": b.kind, "phases": b.phases, "v_nom": b.v_nom}
                     for b in feeder.buses],
           "branches": [], "loads": [], "generators": []}
    for br in feeder.branches:
        r, x = pair(br.z)
        entry = {"from": br.from_bus, "to": br.to_bus, "r": r, "x": x}
        bsh = np.asarray(br.b_shunt)
        entry["b_shunt"] = float(bsh) if bsh.ndim == 0 else bsh.tolist()
        doc["branches"].append(entry)
    for ld in feeder.loads:
        pr, pi = pair(ld.s_p)
        ir, ii = pair(ld.s_i)
        zr, zi = pair(ld.s_z)
        doc["loads"].append({"bus": ld.bus, "sp_re": pr, "sp_im": pi,
                             "si_re": ir, "si_im": ii, "sz_re": zr, "sz_im": zi,
                             "connection": ld.connection})
    for g in feeder.generators:
        doc["generators"].append({"bus": g.bus,
                                  "smax_re": g.s_max.real, "smax_im": g.s_max.imag,
                                  "smin_re": g.s_min.real, "smin_im": g.s_min.imag,
                                  "balanced": g.balanced})
    re, im = pair(feeder.slack_voltage)
    doc["slack_voltage"] = {"re": re, "im": im}
    return doc


def load_feeder(path: str | Path) -> FeederModel:
    with open(path) as fh:
        doc = json.load(fh)
    return feeder_from_dict(doc)


def save_feeder(feeder: FeederModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(feeder_to_dict(feeder), indent=1))


@dataclass(frozen=True)
class Connection:
    """One two-terminal load element in non-slack node coordinates.

    ``rows``/``signs`` give the sparse incidence column of the element:
    current drawn by the element enters the network as -sign*i at each row.
    ``t`` is the normalized nominal voltage across the element (1 for
    single-phase and wye elements, a phase difference for delta elements).
    """

    rows: tuple[int, ...]
    signs: tuple[float, ...]
    t: complex
    s_p: complex
    s_i: complex
    s_z: complex


def load_connections(feeder: FeederModel) -> list[Connection]:
    """Expand feeder loads into per-element connections."""
    n = feeder.n_bus - 1
    conns: list[Connection] = []
    t_all = rotation_vector(feeder)

    def node(ph: int, bus: int) -> int:
        return ph * n + (bus - 1)

    for ld in feeder.loads:
        if ld.bus == 0:
            raise FeederError("loads at the slack bus are not supported")
        if not feeder.is_three_phase:
            conns.append(Connection(rows=(ld.bus - 1,), signs=(1.0,), t=1.0 + 0.0j,
                                    s_p=complex(np.asarray(ld.s_p).item()),
                                    s_i=complex(np.asarray(ld.s_i).item()),
                                    s_z=complex(np.asarray(ld.s_z).item())))
            continue
        sp = np.broadcast_to(np.asarray(ld.s_p, dtype=complex), (3,))
        si = np.broadcast_to(np.asarray(ld.s_i, dtype=complex), (3,))
        sz = np.broadcast_to(np.asarray(ld.s_z, dtype=complex), (3,))
        for p in range(3):
            if ld.connection == WYE:
                rows, signs = (node(p, ld.bus),), (1.0,)
                t = t_all[node(p, ld.bus)]
            else:  # delta element p sits between phase p and phase p+1
                q = (p + 1) % 3
                rows = (node(p, ld.bus), node(q, ld.bus))
                signs = (1.0, -1.0)
                t = t_all[node(p, ld.bus)] - t_all[node(q, ld.bus)]
            if sp[p] == 0 and si[p] == 0 and sz[p] == 0:
                continue
            conns.append(Connection(rows=rows, signs=signs, t=t,
                                    s_p=sp[p], s_i=si[p], s_z=sz[p]))
    return conns


def rotation_vector(feeder: FeederModel) -> np.ndarray:
    """Per-node nominal phase rotation (all ones for single-phase feeders).

    Three-phase rotations are taken from the slack voltage angles, so a
    feeder whose slack follows the canonical a-b-c sequence gets
    e^{j*0}, e^{-j*2pi/3}, e^{+j*2pi/3} and a rotated slack rotates the
    linearization point with it.
    """
    n = feeder.n_bus - 1
    if not feeder.is_three_phase:
        return np.ones(n, dtype=complex)
    v0 = np.asarray(feeder.slack_voltage, dtype=complex)
    if v0.shape != (3,) or np.any(v0 == 0):
        raise FeederError("three-phase slack voltage must be a nonzero 3-vector")
    t = v0 / np.abs(v0)
    return np.concatenate([np.full(n, t[p]) for p in range(3)])
