"""DC optimal power flow front end.

Reduces a power-system case to an mp-QP:

* variables x = [P_g for each generator | delta for each non-slack bus]
* per-bus power balance equalities with b_e = -P_d, so the effective
  demand at theta_e is P_d - theta_e (a renewable injection enters as a
  positive theta_e shift that lowers net demand)
* generator box constraints, two ">=" rows per generator in
  (upper, lower) order; optional line-flow limits append two rows per
  line in the same (upper, lower) order.

All quantities stay in MW; ``base_mva`` is carried for unit conversion
only.  Dataset sampling uses a counter-based RNG (Philox keyed by seed,
counter = point index) so generation order never affects the draws.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DisconnectedNetwork, MissingSlack, ProblemFormatError
from .oracle import is_feasible
from .problem import MpQpProblem, ParameterPoint

__all__ = [
    "Bus",
    "Generator",
    "Line",
    "PowerCase",
    "FlowLimits",
    "DcOpfIndexMap",
    "DatasetPoint",
    "build_dcopf",
    "build_dcopf_with_lines",
    "inject_renewable",
    "renewable_samples",
    "local_perturbation_dataset",
    "extreme_dataset",
    "scaled_dataset",
    "survival_counts",
    "parse_matpower",
]


@dataclass(frozen=True)
class Bus:
    id: int
    demand: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    q: float  # quadratic cost coefficient (cost = q P^2 + c P)
    c: float
    pmin: float
    pmax: float


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    limit: Optional[float] = None  # MW flow limit, None = unlimited


@dataclass(frozen=True)
class PowerCase:
    buses: Tuple[Bus, ...]
    generators: Tuple[Generator, ...]
    lines: Tuple[Line, ...]
    slack_bus: int
    name: str = "case"
    base_mva: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ProblemFormatError("duplicate bus ids")
        if self.slack_bus not in set(ids):
            raise MissingSlack(f"slack bus {self.slack_bus} is not a bus")
        for g in self.generators:
            if g.bus not in set(ids):
                raise ProblemFormatError(f"generator at unknown bus {g.bus}")
            if g.pmin > g.pmax:
                raise ProblemFormatError("generator limits must satisfy pmin <= pmax")
        for ln in self.lines:
            if ln.from_bus not in set(ids) or ln.to_bus not in set(ids):
                raise ProblemFormatError("line endpoint is not a bus")
            if ln.limit is not None and ln.limit <= 0:
                raise ProblemFormatError("line limits must be positive")
        # connectivity check (breadth-first search over line adjacency)
        adjacency: Dict[int, set] = {i: set() for i in ids}
        for ln in self.lines:
            adjacency[ln.from_bus].add(ln.to_bus)
            adjacency[ln.to_bus].add(ln.from_bus)
        seen = {self.slack_bus}
        frontier = [self.slack_bus]
        while frontier:
            nxt = []
            for b in frontier:
                for other in adjacency[b]:
                    if other not in seen:
                        seen.add(other)
                        nxt.append(other)
            frontier = nxt
        if len(self.buses) > 1 and seen != set(ids):
            raise DisconnectedNetwork(
                f"buses {sorted(set(ids) - seen)} unreachable from the slack bus"
            )

    @property
    def bus_ids(self) -> List[int]:
        return sorted(b.id for b in self.buses)

    def demand_vector(self) -> np.ndarray:
        """Base demand per bus, ascending bus id."""
        by_id = {b.id: b.demand for b in self.buses}
        return np.array([by_id[i] for i in self.bus_ids], dtype=np.float64)

    def susceptance_matrix(self) -> np.ndarray:
        """N x N nodal susceptance matrix (row sums zero)."""
        ids = self.bus_ids
        pos = {b: i for i, b in enumerate(ids)}
        B = np.zeros((len(ids), len(ids)))
        for ln in self.lines:
            i, j = pos[ln.from_bus], pos[ln.to_bus]
            B[i, i] += ln.susceptance
            B[j, j] += ln.susceptance
            B[i, j] -= ln.susceptance
            B[j, i] -= ln.susceptance
        return B

    # -- JSON ------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base_mva": self.base_mva,
            "slack_bus": self.slack_bus,
            "buses": [{"id": b.id, "demand": b.demand} for b in self.buses],
            "generators": [
                {"bus": g.bus, "q": g.q, "c": g.c, "pmin": g.pmin, "pmax": g.pmax}
                for g in self.generators
            ],
            "lines": [
                {
                    "from": ln.from_bus,
                    "to": ln.to_bus,
                    "susceptance": ln.susceptance,
                    **({"limit": ln.limit} if ln.limit is not None else {}),
                }
                for ln in self.lines
            ],
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, data: Mapping) -> "PowerCase":
        try:
            return cls(
                name=data.get("name", "case"),
                base_mva=float(data.get("base_mva", 100.0)),
                slack_bus=int(data["slack_bus"]),
                buses=tuple(
                    Bus(int(b["id"]), float(b.get("demand", 0.0)))
                    for b in data["buses"]
                ),
                generators=tuple(
                    Generator(
                        int(g["bus"]), float(g["q"]), float(g["c"]),
                        float(g["pmin"]), float(g["pmax"]),
                    )
                    for g in data["generators"]
                ),
                lines=tuple(
                    Line(
                        int(ln["from"]), int(ln["to"]), float(ln["susceptance"]),
                        None if ln.get("limit") is None else float(ln["limit"]),
                    )
                    for ln in data["lines"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemFormatError(f"invalid case data: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "PowerCase":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ProblemFormatError(f"invalid case JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class FlowLimits:
    """Per-line MW limits and the signed line-to-bus incidence used in
    the flow expression flow_l = susceptance_l * (H delta)_l."""

    F_plus: np.ndarray
    incidence: np.ndarray  # L x N, +1 at from bus, -1 at to bus

    def __post_init__(self):
        F = np.asarray(self.F_plus, dtype=np.float64)
        if (F <= 0).any():
            raise ProblemFormatError("flow limits must be positive")
        object.__setattr__(self, "F_plus", F)
        object.__setattr__(self, "incidence", np.asarray(self.incidence, dtype=np.float64))

    @classmethod
    def from_case(cls, case: PowerCase, default: Optional[float] = None) -> "FlowLimits":
        ids = case.bus_ids
        pos = {b: i for i, b in enumerate(ids)}
        H = np.zeros((len(case.lines), len(ids)))
        F = np.zeros(len(case.lines))
        for l, ln in enumerate(case.lines):
            H[l, pos[ln.from_bus]] = 1.0
            H[l, pos[ln.to_bus]] = -1.0
            lim = ln.limit if ln.limit is not None else default
            if lim is None:
                raise ProblemFormatError(
                    f"line {ln.from_bus}-{ln.to_bus} has no flow limit"
                )
            F[l] = lim
        return cls(F_plus=F, incidence=H)


@dataclass(frozen=True)
class DcOpfIndexMap:
    """Bookkeeping between the case and the reduced variable vector."""

    bus_ids: Tuple[int, ...]            # ascending; equality row / theta_e order
    gen_vars: Tuple[int, ...]           # variable index of each generator
    delta_vars: Mapping[int, Optional[int]]  # bus id -> delta variable (None at slack)
    slack_bus: int
    box_rows: Tuple[Tuple[int, int], ...]    # per generator: (upper row, lower row), 1-based
    flow_rows: Tuple[Tuple[int, int], ...]   # per line: (upper row, lower row), 1-based

    def theta_e_index(self, bus_id: int) -> int:
        return self.bus_ids.index(bus_id)

    def full_angles(self, x: np.ndarray) -> np.ndarray:
        """Reconstruct per-bus voltage angles, zero at the slack bus."""
        out = np.zeros(len(self.bus_ids))
        for i, b in enumerate(self.bus_ids):
            var = self.delta_vars[b]
            if var is not None:
                out[i] = x[var]
        return out


def _build(case: PowerCase, limits: Optional[FlowLimits]):
    ids = case.bus_ids
    pos = {b: i for i, b in enumerate(ids)}
    N = len(ids)
    G = len(case.generators)
    non_slack = [b for b in ids if b != case.slack_bus]
    n = G + len(non_slack)

    gen_vars = tuple(range(G))
    delta_vars = {b: (None if b == case.slack_bus else G + non_slack.index(b)) for b in ids}

    Q = np.zeros((n, n))
    C = np.zeros(n)
    for g_idx, g in enumerate(case.generators):
        Q[g_idx, g_idx] = g.q
        C[g_idx] = g.c

    Bmat = case.susceptance_matrix()
    # Balance at bus i: P_gen,i - (B delta)_i = P_d,i - theta_e,i,
    # written as A_e x = b_e + theta_e with b_e = -P_d:
    #   -P_gen,i + (B delta)_i = -P_d,i + theta_e,i
    A_e = np.zeros((N, n))
    b_e = -case.demand_vector()
    for g_idx, g in enumerate(case.generators):
        A_e[pos[g.bus], g_idx] = -1.0
    for b in ids:
        for b2 in non_slack:
            A_e[pos[b], delta_vars[b2]] = Bmat[pos[b], pos[b2]]

    rows_A: List[np.ndarray] = []
    rows_b: List[float] = []
    box_rows = []
    for g_idx, g in enumerate(case.generators):
        upper = np.zeros(n)
        upper[g_idx] = -1.0           # -P_g >= -P+  (P_g <= P+)
        lower = np.zeros(n)
        lower[g_idx] = 1.0            # P_g >= P-
        rows_A.extend([upper, lower])
        rows_b.extend([-g.pmax, g.pmin])
        box_rows.append((2 * g_idx + 1, 2 * g_idx + 2))

    flow_rows = []
    if limits is not None:
        base = len(rows_A)
        for l, ln in enumerate(case.lines):
            flow = np.zeros(n)
            for b, sign in ((ln.from_bus, 1.0), (ln.to_bus, -1.0)):
                var = delta_vars[b]
                if var is not None:
                    flow[var] = sign * ln.susceptance
            rows_A.extend([-flow, flow])          # flow <= F ; flow >= -F
            rows_b.extend([-limits.F_plus[l], -limits.F_plus[l]])
            flow_rows.append((base + 2 * l + 1, base + 2 * l + 2))

    problem = MpQpProblem(
        Q=Q,
        C=C,
        C0=0.0,
        A_e=A_e,
        b_e=b_e,
        A_C=np.vstack(rows_A),
        b_C=np.asarray(rows_b),
        variable_groups={
            "P_g": list(range(G)),
            "delta": list(range(G, n)),
        },
    )
    index_map = DcOpfIndexMap(
        bus_ids=tuple(ids),
        gen_vars=gen_vars,
        delta_vars=delta_vars,
        slack_bus=case.slack_bus,
        box_rows=tuple(box_rows),
        flow_rows=tuple(flow_rows),
    )
    return problem, index_map


def build_dcopf(case: PowerCase) -> Tuple[MpQpProblem, DcOpfIndexMap]:
    """Reduce a case to an mp-QP with generator box constraints only."""
    return _build(case, None)


def build_dcopf_with_lines(
    case: PowerCase, limits: Optional[FlowLimits] = None
) -> Tuple[MpQpProblem, DcOpfIndexMap]:
    """As build_dcopf, plus two flow-limit rows per line."""
    if limits is None:
        limits = FlowLimits.from_case(case)
    if len(limits.F_plus) != len(case.lines):
        raise ProblemFormatError("one flow limit per line is required")
    return _build(case, limits)


def inject_renewable(
    problem: MpQpProblem, theta_e_base: np.ndarray, P_ren: np.ndarray
) -> ParameterPoint:
    """Renewable output enters the balance as a positive theta_e shift
    (net demand P_d - theta_e drops by P_ren)."""
    theta_e_base = np.asarray(theta_e_base, dtype=np.float64)
    P_ren = np.asarray(P_ren, dtype=np.float64)
    if theta_e_base.shape != (problem.m1,) or P_ren.shape != (problem.m1,):
        raise ProblemFormatError("renewable vectors must have one entry per bus")
    return ParameterPoint.of_theta_e(problem, theta_e_base + P_ren)


def _point_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based per-point RNG: generation order never matters."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, index]))


def renewable_samples(
    count: int, buses: int, seed: int, lam: float = 1.25, cap: float = 1.5
) -> np.ndarray:
    """Per-bus renewable outputs: exponential(rate lam) capped at ``cap``."""
    out = np.empty((count, buses))
    for i in range(count):
        rng = _point_rng(seed, i)
        out[i] = np.minimum(rng.exponential(scale=1.0 / lam, size=buses), cap)
    return out


@dataclass(frozen=True)
class DatasetPoint:
    theta: ParameterPoint
    feasible: bool
    scale: Optional[float] = None
    ratios: Optional[tuple] = None


def local_perturbation_dataset(
    case: PowerCase,
    count: int,
    seed: int,
    problem: Optional[MpQpProblem] = None,
) -> List[DatasetPoint]:
    """Demand at each bus scaled by an independent Uniform(0.6, 1.4)
    ratio; infeasible draws are flagged, never dropped."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if problem is None:
        problem, _ = build_dcopf(case)
    P_d = case.demand_vector()
    out = []
    for i in range(count):
        rng = _point_rng(seed, i)
        r = rng.uniform(0.6, 1.4, size=P_d.shape)
        theta = ParameterPoint.of_theta_e(problem, (1.0 - r) * P_d)
        out.append(
            DatasetPoint(
                theta=theta,
                feasible=is_feasible(problem, theta),
                ratios=tuple(r.tolist()),
            )
        )
    return out


def extreme_dataset(
    case: PowerCase,
    steps: int = 100,
    problem: Optional[MpQpProblem] = None,
    floor: float = 0.01,
) -> List[DatasetPoint]:
    """Per-bus extreme sweeps: one bus's demand runs from 0 to the sum
    of generator upper limits while every other load is set to the
    floor value."""
    if problem is None:
        problem, _ = build_dcopf(case)
    P_d = case.demand_vector()
    total_cap = sum(g.pmax for g in case.generators)
    out = []
    for swept in range(len(P_d)):
        for value in np.linspace(0.0, total_cap, steps):
            target = np.full_like(P_d, floor)
            target[swept] = value
            theta = ParameterPoint.of_theta_e(problem, P_d - target)
            out.append(DatasetPoint(theta=theta, feasible=is_feasible(problem, theta)))
    return out


def scaled_dataset(
    case: PowerCase,
    scales: Sequence[float],
    per_scale_count: int,
    seed: int,
    problem: Optional[MpQpProblem] = None,
) -> List[DatasetPoint]:
    """Local perturbations around a scaled base load: effective demand
    is r * k * P_d with r ~ Uniform(0.6, 1.4) per bus, for each scale k."""
    scales = [float(s) for s in scales]
    if sorted(scales) != scales:
        raise ValueError("scales must be ascending")
    if problem is None:
        problem, _ = build_dcopf(case)
    P_d = case.demand_vector()
    out = []
    for s_idx, k in enumerate(scales):
        for i in range(per_scale_count):
            rng = _point_rng(seed, s_idx * per_scale_count + i)
            r = rng.uniform(0.6, 1.4, size=P_d.shape)
            theta = ParameterPoint.of_theta_e(problem, P_d - r * k * P_d)
            out.append(
                DatasetPoint(
                    theta=theta,
                    feasible=is_feasible(problem, theta),
                    scale=k,
                    ratios=tuple(r.tolist()),
                )
            )
    return out


def survival_counts(points: Sequence[DatasetPoint]) -> Dict[float, int]:
    """Feasible-point count per scale (insertion-ordered by scale)."""
    counts: Dict[float, int] = {}
    for p in points:
        if p.scale is None:
            continue
        counts.setdefault(p.scale, 0)
        if p.feasible:
            counts[p.scale] += 1
    return counts


# ---------------------------------------------------------------------------
# MATPOWER-style importer (limited to the fields this artifact needs)

_MP_BLOCK = re.compile(
    r"mpc\.(?P<name>\w+)\s*=\s*\[(?P<body>.*?)\];", re.DOTALL
)


def _parse_block(body: str) -> List[List[float]]:
    rows = []
    for raw in body.split(";"):
        line = raw.split("%")[0].strip()
        if not line:
            continue
        rows.append([float(tok) for tok in line.replace(",", " ").split()])
    return rows


def parse_matpower(text: str, name: str = "imported", half_quadratic: bool = False) -> PowerCase:
    """Parse a MATPOWER-style case file (bus, gen, branch, gencost
    tables) into a PowerCase.

    ``half_quadratic`` converts cost data given for (1/2) x^T H x form
    by halving the quadratic coefficient on ingestion.
    """
    blocks = {m.group("name"): _parse_block(m.group("body")) for m in _MP_BLOCK.finditer(text)}
    base_match = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)\s*;", text)
    base_mva = float(base_match.group(1)) if base_match else 100.0
    for required in ("bus", "gen", "branch"):
        if required not in blocks:
            raise ProblemFormatError(f"MATPOWER case is missing the {required} table")

    buses = []
    slack = None
    for row in blocks["bus"]:
        bus_id, bus_type, Pd = int(row[0]), int(row[1]), float(row[2])
        buses.append(Bus(id=bus_id, demand=Pd))
        if bus_type == 3:
            slack = bus_id
    if slack is None:
        raise MissingSlack("no type-3 (slack) bus in the MATPOWER case")

    gencost = blocks.get("gencost", [])
    generators = []
    for g_idx, row in enumerate(blocks["gen"]):
        bus_id = int(row[0])
        pmax = float(row[8]) if len(row) > 8 else float("inf")
        pmin = float(row[9]) if len(row) > 9 else 0.0
        q = c = 0.0
        if g_idx < len(gencost):
            cost = gencost[g_idx]
            if int(cost[0]) != 2:
                raise ProblemFormatError(
                    "only polynomial (model 2) generator costs are supported"
                )
            ncoef = int(cost[3])
            coeffs = cost[4:4 + ncoef]  # highest order first
            if ncoef >= 3:
                q = float(coeffs[-3])
            if ncoef >= 2:
                c = float(coeffs[-2])
            if half_quadratic:
                q *= 0.5
        generators.append(Generator(bus=bus_id, q=q, c=c, pmin=pmin, pmax=pmax))

    lines = []
    for row in blocks["branch"]:
        fbus, tbus, x = int(row[0]), int(row[1]), float(row[3])
        if x == 0.0:
            raise ProblemFormatError("branch with zero reactance")
        rate_a = float(row[5]) if len(row) > 5 else 0.0
        lines.append(
            Line(
                from_bus=fbus,
                to_bus=tbus,
                susceptance=1.0 / x,
                limit=rate_a if rate_a > 0 else None,
            )
        )
    return PowerCase(
        buses=tuple(buses),
        generators=tuple(generators),
        lines=tuple(lines),
        slack_bus=slack,
        name=name,
        base_mva=base_mva,
    )
