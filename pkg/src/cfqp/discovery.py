"""Region discovery: grow a closed-form model by walking search
patterns and reacting to KKT violations.

The model is seeded with one oracle solve at the anchor point; every
further region comes from the add/drop transition test, not from an
analytic solver.  A JSON-lines log records every evaluated point,
transition and warning for replay and audit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateRegion,
    Infeasible,
    InfeasibleStart,
    SingularActiveJacobian,
    UnresolvableTransition,
)
from .model import ClosedFormModel, RegionEntry, expand, forward, init_model, locate_region
from .oracle import brute_force_solve, is_feasible, kkt_report
from .problem import ActiveSet, MpQpProblem, ParameterPoint

__all__ = [
    "Direction",
    "SearchPattern",
    "Transition",
    "DiscoveryLog",
    "discover",
    "identify_transition",
    "axis_sweep_pattern",
    "scaled_base_pattern",
    "feasible_extent",
    "default_tol",
]

#: Default KKT tolerance per precision: loose enough at 32-bit that
#: representation noise does not trigger false region detections.
_DEFAULT_TOL = {64: 1e-10, 32: 1e-4}

_MAX_HALVINGS = 20
_MAX_EXPANSIONS_PER_POINT = 16


def default_tol(precision: int) -> float:
    return _DEFAULT_TOL[precision]


@dataclass(frozen=True)
class Direction:
    """One sweep: start point, per-step delta, number of steps."""

    start: ParameterPoint
    step: ParameterPoint
    max_steps: int

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if (np.abs(self.step.stacked()) == 0.0).all():
            raise ValueError("step must be nonzero")

    def point(self, i: int) -> ParameterPoint:
        return self.start + self.step.scale(float(i))


@dataclass(frozen=True)
class SearchPattern:
    directions: tuple

    def __init__(self, directions: Sequence[Direction]):
        object.__setattr__(self, "directions", tuple(directions))


@dataclass(frozen=True)
class Transition:
    """A single-constraint active-set change: kind is 'add' or 'drop'."""

    kind: str
    constraint: int

    def __post_init__(self):
        if self.kind not in ("add", "drop"):
            raise ValueError("kind must be 'add' or 'drop'")


class DiscoveryLog:
    """Append-only JSON-lines event stream (in memory, optionally
    mirrored to a file)."""

    def __init__(self, path: Optional[str] = None):
        self.records: List[dict] = []
        self._path = path
        self._fh = open(path, "w") if path else None

    def emit(self, **record):
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def identify_transition(
    problem: MpQpProblem,
    model: ClosedFormModel,
    current_region: RegionEntry,
    theta: ParameterPoint,
    tol: float = 1e-9,
) -> Transition:
    """Which single constraint change explains a KKT violation at theta.

    Add(k): the non-active constraint with the largest positive residual
    b_k + theta_k - A_k x(theta), with x from the current region's
    affine map.  Drop(k): the active constraint whose candidate
    multiplier is most negative.  When both occur the larger normalized
    magnitude wins (add on ties).
    """
    theta.check_dims(problem)
    z = (-problem.stacked_coefficients() - theta.stacked()).astype(np.float64)
    x = current_region.slopes.grad_x.astype(np.float64) @ z
    mu_cand = current_region.slopes.grad_mu.astype(np.float64) @ z
    rhs = problem.b_C + theta.theta_C
    resid = rhs - problem.A_C @ x

    active = set(current_region.active_set)
    add_k, add_val = None, 0.0
    for k in range(1, problem.m2 + 1):
        if k in active:
            continue
        if resid[k - 1] > add_val:
            add_k, add_val = k, float(resid[k - 1])
    drop_k, drop_val = None, 0.0
    for k in active:
        v = float(mu_cand[k - 1])
        if -v > drop_val:
            drop_k, drop_val = k, -v

    rhs_scale = max(1.0, float(np.abs(rhs).max()) if problem.m2 else 1.0)
    mu_scale = max(
        1.0,
        float(np.abs(mu_cand[[k - 1 for k in active]]).max()) if active else 1.0,
    )
    add_norm = add_val / rhs_scale if add_k is not None else 0.0
    drop_norm = drop_val / mu_scale if drop_k is not None else 0.0

    if add_norm <= tol and drop_norm <= tol:
        raise UnresolvableTransition(
            "no violated constraint and no negative candidate multiplier "
            f"beyond tolerance at theta (add={add_norm:g}, drop={drop_norm:g})"
        )
    if add_norm >= drop_norm:
        return Transition("add", add_k)
    return Transition("drop", drop_k)


def axis_sweep_pattern(
    theta0: ParameterPoint, extent: Sequence[float], steps: int
) -> SearchPattern:
    """One direction per equality-RHS coordinate with nonzero extent,
    stepping uniformly from theta0 by extent_i along that axis."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    extent = np.asarray(extent, dtype=np.float64)
    if extent.shape != theta0.theta_e.shape:
        raise ValueError("extent must match the theta_e dimension")
    directions = []
    m1 = theta0.theta_e.shape[0]
    for i in range(m1):
        if extent[i] == 0.0:
            continue
        delta = np.zeros(m1)
        delta[i] = extent[i] / steps
        step = ParameterPoint(
            np.zeros_like(theta0.theta_c), delta, np.zeros_like(theta0.theta_C)
        )
        directions.append(Direction(start=theta0, step=step, max_steps=steps))
    return SearchPattern(directions)


def scaled_base_pattern(
    base: ParameterPoint,
    scales: Sequence[float],
    steps: int,
    extent: Sequence[float],
    origin: Optional[ParameterPoint] = None,
) -> SearchPattern:
    """Axis sweeps repeated from a scaled base point for every scale k.

    Each scale's anchor is ``origin + k * base`` (origin defaults to
    zero, giving the plain ``k * base`` anchors).  ``extent`` gives the
    per-axis sweep displacement applied at every scale.
    """
    scales = [float(s) for s in scales]
    if not scales:
        raise ValueError("scales must be nonempty")
    if sorted(scales) != scales:
        raise ValueError("scales must be ascending")
    directions = []
    for k in scales:
        anchor = base.scale(k) if origin is None else origin + base.scale(k)
        directions.extend(axis_sweep_pattern(anchor, extent, steps).directions)
    return SearchPattern(directions)


def feasible_extent(
    problem: MpQpProblem,
    theta0: ParameterPoint,
    direction: ParameterPoint,
    cap: float = 1e9,
    resolution: float = 1e-6,
) -> float:
    """Largest step length t such that theta0 + t * direction stays
    feasible, found by bracketing and bisection against the oracle."""
    theta0.check_dims(problem)
    if not is_feasible(problem, theta0):
        raise InfeasibleStart("feasible_extent called from an infeasible point")
    lo, hi = 0.0, 1.0
    while hi < cap and is_feasible(problem, theta0 + direction.scale(hi)):
        lo, hi = hi, hi * 2.0
    if hi >= cap:
        if is_feasible(problem, theta0 + direction.scale(cap)):
            return cap
    while hi - lo > resolution * max(1.0, abs(lo)):
        mid = 0.5 * (lo + hi)
        if is_feasible(problem, theta0 + direction.scale(mid)):
            lo = mid
        else:
            hi = mid
    return lo


def discover(
    problem: MpQpProblem,
    theta0: ParameterPoint,
    pattern: SearchPattern,
    tol: Optional[float] = None,
    precision: int = 64,
    log: Optional[DiscoveryLog] = None,
    strict: bool = True,
) -> ClosedFormModel:
    """Grow a closed-form model along a search pattern.

    A single oracle solve anchors the root region at theta0.  Along
    every direction, the first point whose prediction violates ``tol``
    triggers transition identification and model expansion; evaluation
    resumes at the violating point.  Coarse steps that skip regions are
    refined by local step halving (up to 20 levels).  With
    ``strict=False`` an unresolvable point is logged and skipped instead
    of aborting the run.
    """
    theta0.check_dims(problem)
    if tol is None:
        tol = default_tol(precision)
    if log is None:
        log = DiscoveryLog()

    try:
        seed = brute_force_solve(problem, theta0)
    except Infeasible as exc:
        raise InfeasibleStart("discovery anchor theta0 is infeasible") from exc
    model = init_model(problem, seed.active_set, theta0, precision=precision)
    log.emit(event="init", active_set=list(seed.active_set), degenerate=seed.degenerate)

    current = model.regions[0]
    last_set = seed.active_set

    def evaluate(theta):
        sol = forward(model, theta)
        return kkt_report(problem, sol, theta).scalar

    def settle(theta, di, pi):
        """Record a passing point: update the current region and check
        the one-transition invariant along the sweep."""
        nonlocal current, last_set
        region = locate_region(model, theta)
        if region is not None:
            sym = set(region.active_set.indices) ^ set(last_set.indices)
            if len(sym) > 1:
                log.emit(
                    event="warning",
                    kind="multi_constraint_jump",
                    direction=di,
                    index=pi,
                    from_set=list(last_set),
                    to_set=list(region.active_set),
                )
            current = region
            last_set = region.active_set

    def resolve(theta, lo_theta, di, pi, depth=0):
        """Make ``theta`` pass ``tol``, expanding the model as needed.
        ``lo_theta`` is the nearest point already known to pass.
        Returns True on success, False when the point was abandoned
        (only in non-strict mode or past the feasible boundary)."""
        nonlocal model, current
        for _ in range(_MAX_EXPANSIONS_PER_POINT):
            scalar = evaluate(theta)
            log.emit(
                event="point", direction=di, index=pi, kkt=scalar,
                region=current.id, depth=depth,
            )
            if scalar <= tol:
                settle(theta, di, pi)
                return True
            try:
                tr = identify_transition(problem, model, current, theta)
            except UnresolvableTransition:
                return halve(theta, lo_theta, di, pi, depth)
            if tr.kind == "add":
                new_set = ActiveSet(set(current.active_set) | {tr.constraint})
            else:
                new_set = ActiveSet(set(current.active_set) - {tr.constraint})
            try:
                model = expand(model, current.id, new_set, theta)
            except DuplicateRegion:
                existing = next(
                    r for r in model.regions if r.active_set == new_set
                )
                if existing.id == current.id:
                    return halve(theta, lo_theta, di, pi, depth)
                current = existing
                continue
            except SingularActiveJacobian:
                # Adding this constraint overdetermines the KKT system:
                # typically the sweep has reached the feasible boundary.
                return abandon(theta, di, pi, "singular_expansion")
            current = model.regions[-1]
            log.emit(
                event="transition", direction=di, index=pi,
                kind=tr.kind, constraint=tr.constraint,
                region=current.id, active_set=list(new_set),
            )
        return abandon(theta, di, pi, "expansion_limit")

    def halve(theta, lo_theta, di, pi, depth):
        nonlocal model
        if depth >= _MAX_HALVINGS:
            return abandon(theta, di, pi, "halving_limit")
        mid = lo_theta + (theta - lo_theta).scale(0.5)
        if not resolve(mid, lo_theta, di, pi, depth + 1):
            return False
        return resolve(theta, mid, di, pi, depth + 1)

    def abandon(theta, di, pi, reason):
        nonlocal boundary_hit
        if not is_feasible(problem, theta):
            log.emit(event="boundary", direction=di, index=pi, reason=reason)
            boundary_hit = True
            return False
        if strict:
            raise UnresolvableTransition(
                f"cannot resolve KKT violation at direction {di} point {pi} "
                f"({reason})"
            )
        log.emit(event="warning", kind="unresolved", direction=di,
                 index=pi, reason=reason)
        return False

    boundary_hit = False
    for di, direction in enumerate(pattern.directions):
        log.emit(event="direction", direction=di, max_steps=direction.max_steps)
        boundary_hit = False
        # The one-transition invariant is per sweep: restart the tracked
        # active set at each new direction.
        anchor = locate_region(model, direction.start)
        last_set = anchor.active_set if anchor is not None else seed.active_set
        # Anchor the sweep: the start point must itself pass.
        start_ok = resolve(direction.start, theta0, di, 0)
        if boundary_hit:
            continue
        prev = direction.start if start_ok else None
        for i in range(1, direction.max_steps + 1):
            target = direction.point(i)
            if prev is None:
                # Earlier points were abandoned (non-strict mode);
                # try this one anchored at the sweep start.
                prev = direction.start
            if resolve(target, prev, di, i):
                prev = target
            else:
                prev = None
            if boundary_hit:
                break
    log.emit(event="end", regions=model.k,
             active_sets=[list(r.active_set) for r in model.regions])
    return model
