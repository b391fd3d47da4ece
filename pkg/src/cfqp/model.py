"""The closed-form solver network.

A :class:`ClosedFormModel` is the exact piecewise-linear solution map
built from region slopes:

* shadow-price subnetwork: first layer W0 stacks each region's
  ``grad_mu`` block; the incidence layer combines candidate shadow
  prices of a region with its discovery-tree parent; ReLU applies to
  the combined differences; the direction vector signs each block's
  contribution.  mu*(theta) is the signed sum of all blocks.
* solution subnetwork: the fixed base inverse J^{-1} recovers
  (x, lambda) from mu* and theta.

The model is immutable; ``expand`` returns a new model value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    assemble_base_jacobian,
    factorize,
    objective_value,
    region_slopes,
)
from .errors import DigestMismatch, DuplicateRegion, MalformedModel
from .problem import (
    ActiveSet,
    MpQpProblem,
    ParameterPoint,
    PrimalDualSolution,
    RegionSlopes,
    resolve_dtype,
)

__all__ = [
    "RegionEntry",
    "ClosedFormModel",
    "init_model",
    "forward_mu",
    "forward",
    "expand",
    "cast",
    "batch_forward",
    "locate_region",
    "serialize",
    "deserialize",
]

_FORMAT = "cfqp-model"
_VERSION = 1


@dataclass(frozen=True)
class RegionEntry:
    """One critical region: its active set, slopes, discovery-tree
    parent and a parameter point known to lie inside it."""

    id: int
    active_set: ActiveSet
    slopes: RegionSlopes
    parent_id: Optional[int]
    witness_theta: ParameterPoint


@dataclass(frozen=True)
class ClosedFormModel:
    problem: MpQpProblem
    precision: int
    regions: Tuple[RegionEntry, ...]
    direction: Tuple[int, ...]
    W0: np.ndarray  # (k, m2, d) stacked grad_mu blocks
    base_inverse: np.ndarray  # (n+m1, n+m1)
    problem_digest: str

    def __post_init__(self):
        w0 = np.ascontiguousarray(self.W0)
        w0.setflags(write=False)
        object.__setattr__(self, "W0", w0)
        inv = np.ascontiguousarray(self.base_inverse)
        inv.setflags(write=False)
        object.__setattr__(self, "base_inverse", inv)

    @property
    def k(self) -> int:
        return len(self.regions)

    @property
    def dtype(self) -> np.dtype:
        return resolve_dtype(self.precision)

    def active_sets(self) -> List[ActiveSet]:
        return [r.active_set for r in self.regions]

    def region_by_id(self, region_id: int) -> RegionEntry:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(f"no region with id {region_id}")

    def incidence_matrix(self) -> np.ndarray:
        """Dense k x k signed incidence: root column (0,0)=+1; column j
        has entries -v_j at the parent row and +v_j at row j."""
        k = self.k
        inc = np.zeros((k, k), dtype=np.int64)
        for j, region in enumerate(self.regions):
            v = self.direction[j]
            if region.parent_id is None:
                inc[j, j] = v
            else:
                p = self._row_of(region.parent_id)
                inc[p, j] = -v
                inc[j, j] = v
        return inc

    def _row_of(self, region_id: int) -> int:
        for i, r in enumerate(self.regions):
            if r.id == region_id:
                return i
        raise KeyError(f"no region with id {region_id}")


def _stack_w0(regions: Sequence[RegionEntry], m2: int, d: int, dtype) -> np.ndarray:
    W0 = np.empty((len(regions), m2, d), dtype=dtype)
    for i, r in enumerate(regions):
        W0[i] = r.slopes.grad_mu.astype(dtype)
    return W0


def init_model(
    problem: MpQpProblem,
    B0: ActiveSet,
    theta0: ParameterPoint,
    precision: int = 64,
) -> ClosedFormModel:
    """One-region model anchored at the confirmed active set of theta0."""
    dtype = resolve_dtype(precision)
    theta0.check_dims(problem)
    slopes = region_slopes(problem, B0, dtype=dtype)
    root = RegionEntry(
        id=0, active_set=B0, slopes=slopes, parent_id=None, witness_theta=theta0
    )
    base_inv = factorize(assemble_base_jacobian(problem, dtype=dtype)).inverse()
    return ClosedFormModel(
        problem=problem,
        precision=precision,
        regions=(root,),
        direction=(1,),
        W0=_stack_w0([root], problem.m2, problem.d, dtype),
        base_inverse=base_inv,
        problem_digest=problem.digest(),
    )


def _stacked_input(model: ClosedFormModel, theta: ParameterPoint) -> np.ndarray:
    """z = -B - theta at model precision."""
    dtype = model.dtype
    B = model.problem.stacked_coefficients(dtype)
    return (-B - theta.stacked(dtype)).astype(dtype)


def forward_mu(model: ClosedFormModel, theta: ParameterPoint) -> np.ndarray:
    """mu*(theta) from the shadow-price subnetwork."""
    theta.check_dims(model.problem)
    z = _stacked_input(model, theta)
    h1 = model.W0 @ z  # (k, m2) candidate shadow prices per region
    mu = np.zeros(model.problem.m2, dtype=model.dtype)
    rows = {r.id: i for i, r in enumerate(model.regions)}
    for j, region in enumerate(model.regions):
        v = model.direction[j]
        if region.parent_id is None:
            pre = v * h1[j]
        else:
            pre = v * (h1[j] - h1[rows[region.parent_id]])
        mu += v * np.maximum(pre, 0.0).astype(model.dtype)
    return mu


def forward(model: ClosedFormModel, theta: ParameterPoint) -> PrimalDualSolution:
    """Full solution: shadow prices, then (x, lambda) via the base inverse."""
    problem = model.problem
    dtype = model.dtype
    mu = forward_mu(model, theta)
    top = (
        (-problem.C - theta.theta_c).astype(dtype)
        + problem.A_C.T.astype(dtype) @ mu
    )
    bottom = (-problem.b_e - theta.theta_e).astype(dtype)
    sol = model.base_inverse @ np.concatenate([top, bottom]).astype(dtype)
    x = sol[: problem.n]
    lam = sol[problem.n:]
    return PrimalDualSolution(
        x=x, lam=lam, mu=mu, objective=objective_value(problem, x, theta)
    )


def expand(
    model: ClosedFormModel,
    parent_id: int,
    new_set: ActiveSet,
    probe_theta: ParameterPoint,
) -> ClosedFormModel:
    """Register a newly discovered region adjacent to ``parent_id``.

    The sign of the new direction entry comes from the slope-difference
    test at the probe point: delta = (W0_new - W0_parent) z_probe, and
    the sign of delta's largest-magnitude entry decides whether the new
    block is added or subtracted.
    """
    problem = model.problem
    new_set.validate(problem)
    for r in model.regions:
        if r.active_set == new_set:
            raise DuplicateRegion(
                f"active set {sorted(new_set)} is already region {r.id}"
            )
    dtype = model.dtype
    slopes = region_slopes(problem, new_set, dtype=dtype)
    parent = model.region_by_id(parent_id)
    z = _stacked_input(model, probe_theta)
    delta = (slopes.grad_mu.astype(dtype) - parent.slopes.grad_mu.astype(dtype)) @ z
    pick = int(np.argmax(np.abs(delta)))
    v = 1 if delta[pick] >= 0.0 else -1
    entry = RegionEntry(
        id=max(r.id for r in model.regions) + 1,
        active_set=new_set,
        slopes=slopes,
        parent_id=parent_id,
        witness_theta=probe_theta,
    )
    regions = model.regions + (entry,)
    return ClosedFormModel(
        problem=problem,
        precision=model.precision,
        regions=regions,
        direction=model.direction + (v,),
        W0=_stack_w0(regions, problem.m2, problem.d, dtype),
        base_inverse=model.base_inverse,
        problem_digest=model.problem_digest,
    )


def cast(model: ClosedFormModel, precision: int) -> ClosedFormModel:
    """Re-express a model's weights at another precision.

    Useful for evaluating a 64-bit-discovered model at 32 bits on
    problems whose magnitudes put 32-bit KKT noise above any workable
    discovery tolerance.
    """
    if precision == model.precision:
        return model
    dtype = resolve_dtype(precision)
    regions = tuple(
        RegionEntry(
            id=r.id,
            active_set=r.active_set,
            slopes=RegionSlopes(
                grad_x=r.slopes.grad_x.astype(dtype),
                grad_lambda=r.slopes.grad_lambda.astype(dtype),
                grad_mu=r.slopes.grad_mu.astype(dtype),
                active_set=r.active_set,
            ),
            parent_id=r.parent_id,
            witness_theta=r.witness_theta,
        )
        for r in model.regions
    )
    return ClosedFormModel(
        problem=model.problem,
        precision=precision,
        regions=regions,
        direction=model.direction,
        W0=_stack_w0(regions, model.problem.m2, model.problem.d, dtype),
        base_inverse=model.base_inverse.astype(dtype),
        problem_digest=model.problem_digest,
    )


def batch_forward(
    model: ClosedFormModel, thetas: Sequence[ParameterPoint]
) -> List[PrimalDualSolution]:
    """Evaluate many parameter points; identical (bitwise, at fixed
    precision) to mapping :func:`forward` elementwise, order preserved."""
    return [forward(model, theta) for theta in thetas]


def locate_region(
    model: ClosedFormModel, theta: ParameterPoint, tol: float = 1e-7
) -> Optional[RegionEntry]:
    """Which discovered critical region contains theta, if any.

    A region contains theta when its own affine map gives a primal
    feasible point with nonnegative active multipliers (the defining
    inequalities of the critical region).  Tolerances are relative to
    the data scale.
    """
    problem = model.problem
    z = (-problem.stacked_coefficients() - theta.stacked()).astype(np.float64)
    rhs = problem.b_C + theta.theta_C
    rhs_scale = max(1.0, float(np.abs(rhs).max()) if problem.m2 else 1.0)
    best = None
    best_violation = np.inf
    for region in model.regions:
        x = region.slopes.grad_x.astype(np.float64) @ z
        mu = region.slopes.grad_mu.astype(np.float64) @ z
        primal = float((rhs - problem.A_C @ x).max()) if problem.m2 else 0.0
        idx = region.active_set.as_index_array()
        dual = float(-mu[idx].min()) if len(idx) else 0.0
        mu_scale = max(1.0, float(np.abs(mu[idx]).max()) if len(idx) else 1.0)
        violation = max(primal / rhs_scale, dual / mu_scale)
        if violation <= tol and violation < best_violation:
            best = region
            best_violation = violation
    return best


# ---------------------------------------------------------------------------
# serialization


def serialize(model: ClosedFormModel) -> bytes:
    """Versioned JSON container; floats survive bit-exactly at the
    stored precision because shortest-repr doubles round-trip."""
    inc = model.incidence_matrix()
    triplets = [
        [int(i), int(j), int(inc[i, j])]
        for i, j in zip(*np.nonzero(inc))
    ]
    regions = []
    for row, r in enumerate(model.regions):
        regions.append(
            {
                "id": r.id,
                "active_set": list(r.active_set),
                "parent": r.parent_id,
                "direction": model.direction[row],
                "witness": {
                    "theta_c": r.witness_theta.theta_c.tolist(),
                    "theta_e": r.witness_theta.theta_e.tolist(),
                    "theta_C": r.witness_theta.theta_C.tolist(),
                },
                "grad_x": [[float(v) for v in row_] for row_ in r.slopes.grad_x],
                "grad_lambda": [[float(v) for v in row_] for row_ in r.slopes.grad_lambda],
                "grad_mu": [[float(v) for v in row_] for row_ in r.slopes.grad_mu],
            }
        )
    payload = {
        "format": _FORMAT,
        "version": _VERSION,
        "precision": model.precision,
        "digest": model.problem_digest,
        "regions": regions,
        "incidence": triplets,
        "base_inverse": [[float(v) for v in row_] for row_ in model.base_inverse],
    }
    return json.dumps(payload, separators=(",", ":")).encode("utf-8")


def deserialize(data: bytes, problem: MpQpProblem) -> ClosedFormModel:
    """Load a serialized model, re-verifying the problem digest."""
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedModel(f"cannot parse model payload: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != _FORMAT:
        raise MalformedModel("not a cfqp model container")
    if payload.get("version") != _VERSION:
        raise MalformedModel(f"unknown model version {payload.get('version')!r}")
    if payload.get("digest") != problem.digest():
        raise DigestMismatch(
            "model was built for a different problem (digest mismatch)"
        )
    try:
        precision = int(payload["precision"])
        dtype = resolve_dtype(precision)
        regions = []
        direction = []
        for rec in payload["regions"]:
            witness = ParameterPoint(
                np.asarray(rec["witness"]["theta_c"], dtype=np.float64),
                np.asarray(rec["witness"]["theta_e"], dtype=np.float64),
                np.asarray(rec["witness"]["theta_C"], dtype=np.float64),
            )
            active = ActiveSet(rec["active_set"]).validate(problem)
            slopes = RegionSlopes(
                grad_x=np.asarray(rec["grad_x"], dtype=dtype),
                grad_lambda=np.asarray(rec["grad_lambda"], dtype=dtype),
                grad_mu=np.asarray(rec["grad_mu"], dtype=dtype),
                active_set=active,
            )
            if slopes.grad_x.shape != (problem.n, problem.d):
                raise MalformedModel("grad_x shape does not match the problem")
            if slopes.grad_mu.shape != (problem.m2, problem.d):
                raise MalformedModel("grad_mu shape does not match the problem")
            regions.append(
                RegionEntry(
                    id=int(rec["id"]),
                    active_set=active,
                    slopes=slopes,
                    parent_id=None if rec["parent"] is None else int(rec["parent"]),
                    witness_theta=witness,
                )
            )
            direction.append(int(rec["direction"]))
        base_inverse = np.asarray(payload["base_inverse"], dtype=dtype)
        if base_inverse.shape != (problem.n + problem.m1, problem.n + problem.m1):
            raise MalformedModel("base_inverse shape does not match the problem")
        model = ClosedFormModel(
            problem=problem,
            precision=precision,
            regions=tuple(regions),
            direction=tuple(direction),
            W0=_stack_w0(regions, problem.m2, problem.d, dtype),
            base_inverse=base_inverse,
            problem_digest=payload["digest"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedModel(f"model payload is structurally invalid: {exc}") from exc
    stored = sorted(tuple(t) for t in payload.get("incidence", []))
    rebuilt_inc = model.incidence_matrix()
    rebuilt = sorted(
        (int(i), int(j), int(rebuilt_inc[i, j])) for i, j in zip(*np.nonzero(rebuilt_inc))
    )
    if stored != rebuilt:
        raise MalformedModel("incidence triplets inconsistent with region tree")
    return model
