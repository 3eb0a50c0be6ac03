"""Three-phase extension: incidence patterns, balanced reduction, rotation."""

import numpy as np
import pytest

from conftest import SEQ, balanced_threephase, make_chain, random_feeder
from qopf import exactflow, linflow, qp, threephase
from qopf.netmodel import (Branch, Bus, FeederModel, Generator, ZipLoad,
                           build_admittance, rotation_vector)


def _three_bus_3ph(load_connection="wye", balanced_gen_bus=None, free_gen_bus=None):
    gens = []
    if balanced_gen_bus:
        gens.append(Generator(bus=balanced_gen_bus, s_max=3 + 3j, balanced=True))
    if free_gen_bus:
        gens.append(Generator(bus=free_gen_bus, s_max=1 + 1j))
    f = FeederModel(
        buses=[Bus(id=k, kind="slack" if k == 0 else "load", phases=3, v_nom=1.0)
               for k in range(3)],
        branches=[Branch(0, 1, 0.01 + 0.01j), Branch(1, 2, 0.01 + 0.01j)],
        loads=[ZipLoad(bus=2, s_p=0.05 + 0.02j, connection=load_connection)],
        generators=gens,
        slack_voltage=SEQ.copy())
    f.validate()
    return f


def test_rotation_vector_unit_modulus():
    f = _three_bus_3ph()
    t = rotation_vector(f)
    assert np.abs(np.abs(t) - 1.0).max() <= 1e-15
    n = f.n_bus - 1
    for p in range(3):
        assert np.allclose(t[p * n:(p + 1) * n], SEQ[p])


def test_balanced_incidence_pattern():
    f = _three_bus_3ph(balanced_gen_bus=1, free_gen_bus=2)
    d = threephase.real_incidence(f)
    n = f.n_bus - 1
    assert d.shape == (3 * n, 4)  # 1 balanced column + 3 per-phase columns
    col = d[:, 0]
    for p in range(3):
        assert col[p * n + 0] == pytest.approx(1.0 / 3.0)
    assert col.sum() == pytest.approx(1.0)
    # free generator: one unit entry per phase column
    for p in range(3):
        assert d[p * n + 1, 1 + p] == 1.0
        assert d[:, 1 + p].sum() == 1.0


def test_connection_matrix_delta_rows_sum_zero():
    f = _three_bus_3ph(load_connection="delta")
    j = threephase.connection_matrix(f)
    n = f.n_bus - 1
    assert j.shape == (3 * n, 3 * n)
    delta_rows = [p * n + 1 for p in range(3)]  # bus 2 carries the delta load
    for row in delta_rows:
        assert j[row].sum() == pytest.approx(0.0)
        assert sorted(j[row][j[row] != 0]) == [-1.0, 1.0]
    # wye bus rows stay identity
    for p in range(3):
        row = p * n + 0
        assert j[row, row] == 1.0 and j[row].sum() == 1.0


def test_all_delta_connection_blocks():
    f = FeederModel(
        buses=[Bus(id=k, kind="slack" if k == 0 else "load", phases=3, v_nom=1.0)
               for k in range(4)],
        branches=[Branch(k, k + 1, 0.01 + 0.01j) for k in range(3)],
        loads=[ZipLoad(bus=k, s_p=0.03 + 0.01j, connection="delta")
               for k in range(1, 4)],
        generators=[], slack_voltage=SEQ.copy())
    f.validate()
    j = threephase.connection_matrix(f)
    assert j.shape == (9, 9)
    assert np.abs(j @ np.ones(9)).max() <= 1e-15  # common-mode rejection


def test_balanced_reduction_matches_single_phase():
    f1 = random_feeder(31)
    f3 = balanced_threephase(f1)
    adm1 = build_admittance(f1)
    m1 = linflow.linearize(f1, adm1)
    _, m3 = threephase.build_threephase(f3)
    rng = np.random.default_rng(2)
    n = f1.n_bus - 1
    for _ in range(3):
        s1 = 0.1 * (rng.uniform(size=m1.n_vars) + 1j * rng.uniform(size=m1.n_vars))
        v1 = linflow.solve_linear_flow(m1, s1).v
        v3 = linflow.solve_linear_flow(m3, 3.0 * s1).v
        for p in range(3):
            assert np.abs(v3[p * n:(p + 1) * n] - SEQ[p] * v1).max() <= 1e-8


def test_balanced_dispatch_split_structural():
    f = _three_bus_3ph(balanced_gen_bus=1)
    from qopf.exactflow import _dispatch_per_node
    per_node = _dispatch_per_node(f, np.array([0.9 + 0.3j]))
    n = f.n_bus - 1
    shares = [per_node[p * n + 0] for p in range(3)]
    assert shares[0] == shares[1] == shares[2] == (0.9 + 0.3j) / 3.0


def test_rotation_invariance(ieee37_unbalanced):
    base = threephase.solve_threephase_opf(ieee37_unbalanced, method="relaxed")
    rot = np.exp(0.37j)
    feeder = FeederModel(buses=ieee37_unbalanced.buses,
                         branches=ieee37_unbalanced.branches,
                         loads=ieee37_unbalanced.loads,
                         generators=ieee37_unbalanced.generators,
                         slack_voltage=rot * np.asarray(ieee37_unbalanced.slack_voltage))
    res = threephase.solve_threephase_opf(feeder, method="relaxed")
    assert res.predicted_losses == pytest.approx(base.predicted_losses, rel=1e-9)
    assert res.exact_losses == pytest.approx(base.exact_losses, rel=1e-9)
    assert np.abs(np.abs(res.dispatch) - np.abs(base.dispatch)).max() \
        <= 1e-9 * np.abs(base.dispatch).max()


def test_zero_bounds_return_base_losses(ieee37_unbalanced):
    feeder = FeederModel(
        buses=ieee37_unbalanced.buses, branches=ieee37_unbalanced.branches,
        loads=ieee37_unbalanced.loads,
        generators=[Generator(bus=g.bus, s_max=0.0, balanced=g.balanced)
                    for g in ieee37_unbalanced.generators],
        slack_voltage=ieee37_unbalanced.slack_voltage)
    res = threephase.solve_threephase_opf(feeder)
    assert np.abs(res.dispatch).max() == 0.0
    adm = build_admittance(feeder)
    base = exactflow.fixed_point_flow(feeder, adm)
    assert res.exact_losses == pytest.approx(base.losses, rel=1e-12)


def test_bundled_unbalanced_opf(ieee37_unbalanced):
    adm = build_admittance(ieee37_unbalanced)
    base = exactflow.fixed_point_flow(ieee37_unbalanced, adm)
    res = threephase.solve_threephase_opf(ieee37_unbalanced, adm=adm)
    assert res.exact_losses < 0.5 * base.losses
    eps_p = 100 * abs(res.predicted_losses - res.exact_losses) / res.exact_losses
    assert eps_p <= 3.0


def test_single_phase_feeder_rejected():
    with pytest.raises(ValueError, match="three-phase"):
        threephase.build_threephase(make_chain(3))
