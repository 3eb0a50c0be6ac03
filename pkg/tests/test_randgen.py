"""Random feeder generator: determinism, ranges, topology, uniformity."""

import dataclasses

import numpy as np
import pytest
from scipy import stats

from qopf import randgen
from qopf.netmodel import feeder_to_dict


def _gen(seed, **kw):
    return randgen.generate(dataclasses.replace(randgen.GenParams(), seed=seed, **kw))


def test_determinism():
    assert feeder_to_dict(_gen(42)) == feeder_to_dict(_gen(42))
    assert feeder_to_dict(_gen(42)) != feeder_to_dict(_gen(43))


@pytest.mark.parametrize("seed", range(10))
def test_topology_and_ranges(seed):
    p = randgen.GenParams()
    f = _gen(seed)
    n = f.n_bus
    assert p.n_min <= n <= p.n_max
    assert len(f.branches) == n - 1  # tree
    f.validate()  # connectivity and referential integrity
    for br in f.branches:
        assert p.r_min <= br.z.real <= p.r_max
        assert p.x_min <= br.z.imag <= p.x_max
        assert p.b_min <= br.b_shunt <= p.b_max
    for ld in f.loads:
        s = ld.total()
        mag = abs(s)
        assert mag <= p.load_max + 1e-12
        if mag > 1e-12:
            pf = s.real / mag
            assert p.pf_min - 1e-12 <= pf <= p.pf_max + 1e-12
        assert s.imag >= 0
    n_g = max(1, round(p.dg_fraction * n))
    assert len(f.generators) == n_g
    total = sum(abs(ld.total()) for ld in f.loads)
    # caps are complex with equal real/imag parts drawn from the share range
    for g in f.generators:
        share = g.s_max.real / (total / n_g)
        assert p.dg_cap_min - 1e-12 <= share <= p.dg_cap_max + 1e-12
        assert g.s_max.real == g.s_max.imag
        assert g.s_min == 0


def test_zip_type_split():
    p = randgen.GenParams()
    f = _gen(3)
    n = f.n_bus
    kinds = {"p": 0, "i": 0, "z": 0}
    for ld in f.loads:
        if ld.s_p != 0:
            kinds["p"] += 1
        elif ld.s_i != 0:
            kinds["i"] += 1
        elif ld.s_z != 0:
            kinds["z"] += 1
    n_p = min(n - 1, round(p.const_power_fraction * n))
    rest = n - 1 - n_p
    assert len(f.loads) == n - 1
    assert kinds == {"p": n_p, "i": (rest + 1) // 2, "z": rest // 2}


def test_one_load_per_bus_sorted():
    f = _gen(8)
    buses = [ld.bus for ld in f.loads]
    assert buses == sorted(buses) == list(range(1, f.n_bus))
    gbuses = [g.bus for g in f.generators]
    assert gbuses == sorted(gbuses)


def test_invalid_params_rejected():
    with pytest.raises(ValueError, match="range"):
        _gen(0, n_min=50, n_max=40)
    with pytest.raises(ValueError, match="fraction"):
        _gen(0, dg_fraction=1.5)
    with pytest.raises(ValueError, match="2 buses"):
        _gen(0, n_min=1, n_max=1)


def test_parameter_uniformity_chi_square():
    """Pooled branch resistances across many feeders pass a chi-square
    uniformity test at the 99% level."""
    p = randgen.GenParams()
    rs, xs, pfs = [], [], []
    for seed in range(200):
        f = _gen(seed + 10_000)
        rs.extend(br.z.real for br in f.branches)
        xs.extend(br.z.imag for br in f.branches)
        for ld in f.loads:
            s = ld.total()
            if abs(s) > 1e-12:
                pfs.append(s.real / abs(s))
    crit = stats.chi2.ppf(0.99, df=9)
    for sample, lo, hi in ((rs, p.r_min, p.r_max), (xs, p.x_min, p.x_max),
                           (pfs, p.pf_min, p.pf_max)):
        counts, _ = np.histogram(sample, bins=10, range=(lo, hi))
        expected = len(sample) / 10
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < crit, f"chi-square {chi2:.1f} exceeds {crit:.1f}"


def test_regime_min_voltage(fleet_1000):
    """At the default parameter ranges, at least 90% of feeders keep the
    exact-flow voltage profile above 0.7 pu."""
    rows = fleet_1000["rows"]
    frac = sum(1 for r in rows if r["min_v"] >= 0.7) / len(rows)
    assert frac >= 0.90
