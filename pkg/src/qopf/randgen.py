"""Seedable random radial feeder generator for Monte-Carlo validation.

Feeders are grown as random trees: each new bus attaches to a uniformly
chosen existing bus.  Electrical parameters are drawn uniformly from the
configured ranges; half of the buses receive constant-power loads and the
remainder split evenly between constant-current and constant-impedance.
The RNG is numpy's PCG64 seeded with a 64-bit integer, so a fixed seed
reproduces the feeder bit-for-bit on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmodel import Branch, Bus, FeederModel, Generator, ZipLoad


@dataclass(frozen=True)
class GenParams:
    n_min: int = 30
    n_max: int = 60
    r_min: float = 0.001
    r_max: float = 0.017
    x_min: float = 0.001
    x_max: float = 0.017
    b_min: float = 0.0
    b_max: float = 0.0002
    load_min: float = 0.0
    load_max: float = 0.2
    pf_min: float = 0.7
    pf_max: float = 1.0
    const_power_fraction: float = 0.5
    dg_fraction: float = 0.05
    dg_cap_min: float = 0.5   # generator cap range, as a multiple of
    dg_cap_max: float = 1.5   # total feeder load / generator count
    seed: int = 0

    def validate(self) -> None:
        pairs = [(self.n_min, self.n_max), (self.r_min, self.r_max),
                 (self.x_min, self.x_max), (self.b_min, self.b_max),
                 (self.load_min, self.load_max), (self.pf_min, self.pf_max),
                 (self.dg_cap_min, self.dg_cap_max)]
        if any(lo > hi for lo, hi in pairs):
            raise ValueError("empty parameter range")
        if not (0.0 <= self.const_power_fraction <= 1.0
                and 0.0 <= self.dg_fraction <= 1.0):
            raise ValueError("fractions must lie in [0, 1]")
        if self.n_min < 2:
            raise ValueError("need at least 2 buses")


def generate(params: GenParams) -> FeederModel:
    """Draw one random radial feeder."""
    params.validate()
    rng = np.random.default_rng(np.random.PCG64(params.seed))
    n = int(rng.integers(params.n_min, params.n_max + 1))

    buses = [Bus(id=0, kind="slack")] + [Bus(id=k) for k in range(1, n)]
    branches = []
    for k in range(1, n):
        parent = int(rng.integers(0, k))
        r = rng.uniform(params.r_min, params.r_max)
        x = rng.uniform(params.x_min, params.x_max)
        b = rng.uniform(params.b_min, params.b_max)
        branches.append(Branch(from_bus=parent, to_bus=k, z=complex(r, x), b_shunt=b))

    # one load per non-slack bus; ZIP type by shuffled assignment
    n_p = min(n - 1, round(params.const_power_fraction * n))
    rest = n - 1 - n_p
    n_i = (rest + 1) // 2
    order = rng.permutation(np.arange(1, n))
    loads = []
    for pos, bus in enumerate(order):
        s_mag = rng.uniform(params.load_min, params.load_max)
        pf = rng.uniform(params.pf_min, params.pf_max)
        s = complex(s_mag * pf, s_mag * np.sqrt(1.0 - pf * pf))
        if pos < n_p:
            loads.append(ZipLoad(bus=int(bus), s_p=s))
        elif pos < n_p + n_i:
            loads.append(ZipLoad(bus=int(bus), s_i=s))
        else:
            loads.append(ZipLoad(bus=int(bus), s_z=s))
    loads.sort(key=lambda ld: ld.bus)

    n_g = max(1, round(params.dg_fraction * n))
    gen_buses = rng.choice(np.arange(1, n), size=min(n_g, n - 1), replace=False)
    total = sum(abs(ld.total()) for ld in loads)
    share = total / max(len(gen_buses), 1)
    generators = []
    for bus in gen_buses:
        cap = rng.uniform(params.dg_cap_min, params.dg_cap_max) * share
        generators.append(Generator(bus=int(bus), s_max=complex(cap, cap)))
    generators.sort(key=lambda g: g.bus)

    feeder = FeederModel(buses=buses, branches=branches, loads=loads,
                         generators=generators, slack_voltage=1.0 + 0.0j)
    feeder.validate()
    return feeder
