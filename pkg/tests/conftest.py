"""Shared fixtures and feeder builders for the test suite."""

from __future__ import annotations

import dataclasses
import time
from importlib import resources

import numpy as np
import pytest

from qopf import fleet, randgen
from qopf.netmodel import (Branch, Bus, FeederModel, Generator, ZipLoad,
                           load_feeder)

Z2 = 0.01 + 0.01j
LOAD2 = 0.1 + 0.05j


def make_two_bus(load=LOAD2, z=Z2, gen_cap=None, load_kind="p"):
    """Slack + one load bus, optionally with a generator at the load bus."""
    kw = {{"p": "s_p", "i": "s_i", "z": "s_z"}[load_kind]: load}
    gens = [] if gen_cap is None else [Generator(bus=1, s_max=gen_cap)]
    f = FeederModel(
        buses=[Bus(id=0, kind="slack"), Bus(id=1)],
        branches=[Branch(from_bus=0, to_bus=1, z=z)],
        loads=[ZipLoad(bus=1, **kw)],
        generators=gens,
    )
    f.validate()
    return f


def make_chain(n, z=Z2, load=0.05 + 0.02j, b_shunt=0.0):
    f = FeederModel(
        buses=[Bus(id=0, kind="slack")] + [Bus(id=k) for k in range(1, n)],
        branches=[Branch(from_bus=k - 1, to_bus=k, z=z, b_shunt=b_shunt)
                  for k in range(1, n)],
        loads=[ZipLoad(bus=k, s_p=load) for k in range(1, n)],
        generators=[],
    )
    f.validate()
    return f


def random_feeder(seed, **overrides):
    params = dataclasses.replace(randgen.GenParams(), seed=seed, **overrides)
    return randgen.generate(params)


def zero_constant_power(feeder):
    """Copy of a feeder with every constant-power load component removed."""
    loads = [dataclasses.replace(ld, s_p=0.0) for ld in feeder.loads]
    return FeederModel(buses=feeder.buses, branches=feeder.branches,
                       loads=loads, generators=feeder.generators,
                       slack_voltage=feeder.slack_voltage)


SEQ = np.array([1.0, np.exp(-2j * np.pi / 3), np.exp(2j * np.pi / 3)])


def balanced_threephase(feeder_1ph, gen_scale=3.0):
    """Lift a single-phase per-unit feeder to a balanced three-phase one.

    Every phase carries the same per-unit load and impedance; v_nom is 1 so
    physical and per-unit quantities coincide.  Generators become balanced
    three-phase units with `gen_scale` times the single-phase capability.
    """
    buses = [Bus(id=b.id, kind=b.kind, phases=3, v_nom=1.0)
             for b in feeder_1ph.buses]
    gens = [Generator(bus=g.bus, s_max=gen_scale * g.s_max,
                      s_min=gen_scale * g.s_min, balanced=True)
            for g in feeder_1ph.generators]
    f = FeederModel(buses=buses, branches=list(feeder_1ph.branches),
                    loads=list(feeder_1ph.loads), generators=gens,
                    slack_voltage=SEQ * complex(np.asarray(feeder_1ph.slack_voltage).item()))
    f.validate()
    return f


@pytest.fixture(scope="session")
def ieee37_balanced():
    return load_feeder(resources.files("qopf.data") / "ieee37_balanced.json")


@pytest.fixture(scope="session")
def ieee37_unbalanced():
    return load_feeder(resources.files("qopf.data") / "ieee37_unbalanced.json")


@pytest.fixture(scope="session")
def fleet_1000():
    """The 1000-case Monte-Carlo fleet shared by the acceptance tests."""
    t0 = time.time()
    out = fleet.run_fleet(1000, seed=0)
    out["elapsed"] = time.time() - t0
    return out
