"""Shared fixtures: bundled problems, standard search patterns and the
discovered models the test suite reuses."""

import numpy as np
import pytest

from cfqp import dcopf
from cfqp.cases import case6, two_parameter_problem, two_parameter_theta0
from cfqp.discovery import Direction, SearchPattern, axis_sweep_pattern, discover
from cfqp.problem import ParameterPoint


@pytest.fixture(scope="session")
def two_param():
    return two_parameter_problem()


@pytest.fixture(scope="session")
def theta0_2d():
    return two_parameter_theta0()


def two_param_pattern(theta0, steps=200):
    """The standard increasing sweep for the two-parameter problem:
    +theta1 and +theta2 from (100, 100) out to the feasible boundary."""
    return axis_sweep_pattern(theta0, [800.0, 800.0], steps)


@pytest.fixture(scope="session")
def model_2d(two_param, theta0_2d):
    return discover(two_param, theta0_2d, two_param_pattern(theta0_2d))


@pytest.fixture(scope="session")
def power_case():
    return case6()


@pytest.fixture(scope="session")
def box_problem(power_case):
    problem, index_map = dcopf.build_dcopf(power_case)
    return problem, index_map


@pytest.fixture(scope="session")
def line_problem(power_case):
    problem, index_map = dcopf.build_dcopf_with_lines(power_case)
    return problem, index_map


def box_pattern(problem, extent_up=56.0, extent_dn=56.0, steps=40):
    """Load-bus sweeps for the 6-bus box problem: one uniform direction
    over all load buses plus per-axis sweeps, both ways."""
    theta0 = ParameterPoint.zeros(problem)
    load = np.zeros(problem.m1)
    load[3:] = 1.0
    directions = []
    for ext in (extent_up, -extent_dn):
        uniform = ParameterPoint.of_theta_e(problem, load * ext / steps)
        directions.append(Direction(start=theta0, step=uniform, max_steps=steps))
        directions.extend(
            axis_sweep_pattern(theta0, load * ext, steps).directions
        )
    return theta0, SearchPattern(directions)


@pytest.fixture(scope="session")
def box_model(box_problem):
    problem, _ = box_problem
    theta0, pattern = box_pattern(problem)
    return discover(problem, theta0, pattern)


def on_sweep_samples_2d(problem, count, seed):
    """Random points on the two-parameter discovery sweeps (the domain
    the discovered model certifies)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        axis = int(rng.integers(2))
        theta_e = [100.0, 100.0]
        theta_e[axis] += float(rng.uniform(0.0, 800.0))
        out.append(ParameterPoint.of_theta_e(problem, theta_e))
    return out


def local_samples_6bus(case, problem, count, seed):
    """Per-bus demand ratios r ~ Uniform(0.6, 1.4), counter-based RNG."""
    P_d = case.demand_vector()
    out = []
    for i in range(count):
        rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, i]))
        r = rng.uniform(0.6, 1.4, size=P_d.shape)
        out.append(ParameterPoint.of_theta_e(problem, (1.0 - r) * P_d))
    return out
