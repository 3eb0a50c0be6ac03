"""Linearized load flow: constants, sensitivity representation, error bound."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LOAD2, Z2, make_two_bus, random_feeder
from qopf import exactflow, linflow
from qopf.netmodel import (Branch, Bus, FeederModel, Generator, ZipLoad,
                           build_admittance)


def _model(feeder):
    adm = build_admittance(feeder)
    return adm, linflow.linearize(feeder, adm)


def test_constant_impedance_only_structure():
    sz = 0.08 + 0.03j
    feeder = make_two_bus(load=sz, load_kind="z")
    adm, model = _model(feeder)
    assert np.all(model.B == 0)
    # consumption-positive convention: the impedance load adds +conj(Sz)
    # on the diagonal of C
    assert np.allclose(model.C, adm.ynn + np.diag([np.conj(sz)]), atol=1e-15)


def test_two_bus_u_within_laurent_bound():
    feeder = make_two_bus()
    adm, model = _model(feeder)
    exact = exactflow.fixed_point_flow(feeder, adm)
    delta = float(np.abs(1.0 - exact.v_nodes).max())
    assert np.abs(model.U - exact.v_nodes).max() <= linflow.laurent_error_bound(delta)


def test_no_generators_w_empty():
    feeder = make_two_bus()
    _, model = _model(feeder)
    assert model.W.shape == (2, 0)
    sol = linflow.solve_linear_flow(model, np.zeros(0, dtype=complex))
    assert np.array_equal(sol.v, model.U)


def test_zero_dispatch_returns_u():
    feeder = random_feeder(21)
    _, model = _model(feeder)
    sol = linflow.solve_linear_flow(model, np.zeros(model.n_vars, dtype=complex))
    assert np.array_equal(sol.v, model.U)


def test_matches_direct_solve():
    """V = U + W.[Sr;Si] equals re-solving the stacked real system directly."""
    feeder = random_feeder(22)
    _, model = _model(feeder)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        s_g = rng.normal(size=model.n_vars) + 1j * rng.normal(size=model.n_vars)
        sol = linflow.solve_linear_flow(model, s_g)
        dr, di = model.Dc.real, model.Dc.imag
        rhs = (-np.concatenate([model.A.real, model.A.imag])
               + np.block([[dr, di], [di, -dr]]) @ np.concatenate([s_g.real, s_g.imag]))
        v_stack = np.linalg.solve(model.M, rhs)
        direct = v_stack[:model.n_nodes] + 1j * v_stack[model.n_nodes:]
        worst = max(worst, float(np.abs(sol.v - direct).max()))
    assert worst <= 1e-10


def test_injection_raises_voltage():
    feeder = make_two_bus(gen_cap=1.0 + 1.0j)
    adm, model = _model(feeder)
    with_gen = linflow.solve_linear_flow(model, np.array([LOAD2]))
    assert np.abs(1.0 - with_gen.v).max() < np.abs(1.0 - model.U).max()
    # direction confirmed by the exact oracle
    ex0 = exactflow.fixed_point_flow(feeder, adm, np.zeros(1, dtype=complex))
    ex1 = exactflow.fixed_point_flow(feeder, adm, np.array([LOAD2]))
    assert np.abs(1.0 - ex1.v_nodes).max() < np.abs(1.0 - ex0.v_nodes).max()


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.0, 1.0),
       data=st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=4))
def test_superposition(alpha, data):
    feeder = random_feeder(23)
    _, model = _model(feeder)
    g = model.n_vars
    rng = np.random.default_rng(abs(hash(tuple(data))) % 2**32)
    s1 = rng.normal(size=g) * data[0] + 1j * rng.normal(size=g) * data[1]
    s2 = rng.normal(size=g) * data[2] + 1j * rng.normal(size=g) * data[3]
    va = linflow.solve_linear_flow(model, alpha * s1 + (1 - alpha) * s2).v
    vb = (alpha * linflow.solve_linear_flow(model, s1).v
          + (1 - alpha) * linflow.solve_linear_flow(model, s2).v)
    assert np.abs(va - vb).max() <= 1e-12


def test_dispatch_dimension_checked():
    _, model = _model(make_two_bus(gen_cap=1 + 1j))
    with pytest.raises(ValueError, match="shape"):
        linflow.solve_linear_flow(model, np.zeros(3, dtype=complex))


def test_nonzero_slack_angle_rejected():
    feeder = make_two_bus()
    feeder.slack_voltage = np.exp(0.1j)
    adm = build_admittance(feeder)
    with pytest.raises(ValueError, match="slack angle"):
        linflow.linearize(feeder, adm)


def test_singular_m_reported():
    # a constant-impedance "load" canceling the branch admittance makes the
    # linearized system singular
    z = 0.1 + 0.0j
    feeder = FeederModel(
        buses=[Bus(id=0, kind="slack"), Bus(id=1)],
        branches=[Branch(from_bus=0, to_bus=1, z=z)],
        loads=[ZipLoad(bus=1, s_z=-np.conj(1.0 / z))],
        generators=[])
    adm = build_admittance(feeder)
    from qopf.errors import SingularMatrixError
    with pytest.raises(SingularMatrixError, match="cond"):
        linflow.linearize(feeder, adm)


# --- Laurent bound -------------------------------------------------------

def test_bound_basics():
    assert linflow.laurent_error_bound(0.0) == 0.0
    assert linflow.laurent_error_bound(0.3) == pytest.approx(0.09 / 0.7)
    assert linflow.laurent_error_bound(0.3) == pytest.approx(0.1286, abs=5e-5)
    with pytest.raises(ValueError):
        linflow.laurent_error_bound(1.0)
    with pytest.raises(ValueError):
        linflow.laurent_error_bound(-0.1)


def test_bound_real_axis_example():
    v = 0.9
    err = abs(1.0 / v - (2.0 - v))
    assert err == pytest.approx(0.0111, abs=5e-5)
    assert err <= linflow.laurent_error_bound(0.1) + 1e-15


@settings(max_examples=50, deadline=None)
@given(delta=st.floats(0.01, 0.6), seed=st.integers(0, 2**31))
def test_bound_dominates_sampled_errors(delta, seed):
    rng = np.random.default_rng(seed)
    r = delta * np.sqrt(rng.uniform(0, 1, 1000))
    phi = rng.uniform(0, 2 * np.pi, 1000)
    v = 1.0 + r * np.exp(1j * phi)
    err = np.abs(1.0 / np.conj(v) - (2.0 - np.conj(v)))
    assert err.max() <= linflow.laurent_error_bound(delta) + 1e-12
