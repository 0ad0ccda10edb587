"""Quick closed-form checks run by ``spinrenew selftest``."""

from __future__ import annotations

import math

import numpy as np

from . import meanfield_pde as mf
from . import model, particle_sim, spectral
from .analysis import Phase, classify_trajectory, estimate_period_amplitude


def _close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def _checks():
    p1 = model.ModelParams(gamma=1, beta=0.769)
    yield "hazard at m=0", _close(model.hazard_rate(1, 2.0, 0.0, p1), 2.0)
    yield "hazard at m=1", _close(model.hazard_rate(1, 1.0, 1.0, p1.replace(beta=0.5)), math.exp(-1))
    yield "survival(1, 0)", model.survival(1, 0.0) == 1.0
    yield "survival(1, 2)", _close(model.survival(1, 2.0), math.exp(-2))
    yield "survival(2, 3)", _close(model.survival(2, 3.0), math.exp(-9))
    yield "flip time gamma=1", _close(model.sample_flip_time(0.0, 1.0, 0.5, 1), 1.0)
    yield "flip time gamma=2", _close(model.sample_flip_time(0.0, 1.0, 9.0, 2), 3.0)
    yield "Lambda(0)", _close(model.normalization_lambda(0), 1.0)
    yield "Lambda(1)", _close(model.normalization_lambda(1), math.sqrt(math.pi / 2))

    st = model.SystemState([1], [0.0])
    p = model.ModelParams(gamma=1, beta=0.0, n_particles=1, t_final=10.0)
    yield "single clock", particle_sim.next_event(st, p, [0.5]) == (0, 1.0)
    st2 = model.SystemState([1, 1], [0.0, 0.0])
    yield "tie to lowest index", particle_sim.next_event(st2, p.replace(n_particles=2), [0.7, 0.7])[0] == 0
    s = model.SystemState([1, 1, -1, 1], np.zeros(4))
    particle_sim.apply_flip(s, 2)
    yield "flip updates m", s.m == 1.0

    yield "H1(0)", _close(spectral.eval_H1(0), math.sqrt(math.pi / 2))
    h = 1e-5
    yield "H1'(0)", abs((spectral.eval_H1(h) - spectral.eval_H1(-h)).real / (2 * h) + 1.0) < 1e-8
    yield "H_{0,1}(0)", spectral.eval_Hbg(0.0, 1, 0.0) == 0
    yield "empty rectangle", spectral.count_zeros_rect(0.5, 1, (0, 0, -1, 1)) == 0

    g = mf.DensityGrid.stationary(1)
    yield "stationary inflow", abs(mf.boundary_inflow(g, 1, p1.replace(beta=0.0)) - 1 / (2 * math.sqrt(math.pi / 2))) < 1e-3
    ode = mf.curie_weiss_ode(0.0, 2.0, 5.0)
    yield "ODE fixed point", bool(np.all(ode.magnetization == 0.0))

    t = np.arange(0.0, 100.0 + 1e-9, 0.05)
    period, amp = estimate_period_amplitude((t, 0.3 * np.sin(1.171 * t)), 50.0)
    yield "sinusoid period", period is not None and abs(period - 2 * math.pi / 1.171) < 0.02 * 5.366
    yield "constant is Magnetized", classify_trajectory((t, 0.9 + 0 * t)).kind is Phase.MAGNETIZED
    yield "sine is Oscillatory", classify_trajectory((t, 0.4 * np.sin(t))).kind is Phase.OSCILLATORY


def run_selftest(verbose: bool = True) -> int:
    failures = 0
    for name, ok in _checks():
        failures += not ok
        if verbose:
            print(f"{'ok  ' if ok else 'FAIL'} {name}")
    if verbose:
        print(f"{failures} failure(s)")
    return failures
