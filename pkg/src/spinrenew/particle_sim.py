"""Exact event-driven simulation of the N-particle renewal spin system.

Each particle owns a unit-exponential budget drawn from its own random stream.
Between flips the budget is consumed at the particle's current hazard rate;
the particle flips when its budget runs out, then draws the next mark.  Since
the hazard only changes at flip times (through ``m``), all candidate flip
times have closed forms and the simulation carries no time-step error.

The coupling harness drives the interacting system and N independent copies
(which see a prescribed deterministic magnetization instead of ``m^N``) with
the same per-particle Poisson point process, realized by thinning.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .model import ModelParams, SystemState, sample_stationary_ages, sample_flip_time

log = logging.getLogger(__name__)

DEFAULT_SAMPLE_DT = 0.05

# initial marks per particle: _MARK_SLACK + _MARK_RATE * horizon; the bank doubles on demand
_MARK_SLACK = 16
_MARK_RATE = 2.0

# purposes for the per-particle streams
_MARKS = 0
_THINNING = 1

_DONE = 0
_NEED_MARKS = 1
_LOG_FULL = 2


class RngStreams:
    """Reproducible per-particle random streams.

    Stream ``(seed, index)`` is a PCG64 generator seeded by
    ``SeedSequence(seed, spawn_key=(index, purpose))``; streams with distinct
    indices are independent and a given stream never depends on how many
    other streams exist.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)

    def generator(self, index: int, purpose: int = _MARKS, *sub: int) -> np.random.Generator:
        key = (int(index), int(purpose)) + tuple(int(k) for k in sub)
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def exponentials(self, index: int, count: int) -> np.ndarray:
        return self.generator(index).standard_exponential(count)


class _MarkBank:
    """Rows of unit-exponential marks, one row per particle, grown on demand."""

    def __init__(self, streams: RngStreams, indices: np.ndarray, width: int):
        self._gens = [streams.generator(i, _MARKS) for i in indices]
        self.marks = np.stack([g.standard_exponential(width) for g in self._gens])

    def grow(self):
        width = self.marks.shape[1]
        extra = np.stack([g.standard_exponential(width) for g in self._gens])
        self.marks = np.ascontiguousarray(np.hstack([self.marks, extra]))
        log.debug("mark bank grown to %d per particle", self.marks.shape[1])


# ---------------------------------------------------------------------------
# jitted kernels


@njit(cache=True, inline="always")
def _ipow(y, k):
    out = 1.0
    for _ in range(k):
        out *= y
    return out


@njit(cache=True, inline="always")
def _delay(gamma, y, c, e):
    # closed-form inversion of c * ((y+tau)^(g+1) - y^(g+1)) / (g+1) = e
    if gamma == 0:
        return e / c
    k = gamma + 1
    target = k * e / c
    if gamma == 1:
        a = math.sqrt(y * y + target)
        return target / (a + y)
    if gamma == 2:
        a = np.cbrt(y * y * y + target)
        return target / (a * a + a * y + y * y)
    a = (_ipow(y, k) + target) ** (1.0 / k)
    denom = 0.0
    for j in range(k):
        denom += _ipow(a, j) * _ipow(y, gamma - j)
    return target / denom


@njit(cache=True, inline="always")
def _age_integral(gamma, y, tau):
    # ((y+tau)^(g+1) - y^(g+1)) / (g+1)
    if gamma == 0:
        return tau
    if gamma == 1:
        return tau * (y + 0.5 * tau)
    if gamma == 2:
        return tau * (y * y + y * tau + tau * tau / 3.0)
    a = y + tau
    acc = 0.0
    for j in range(gamma + 1):
        acc += _ipow(a, j) * _ipow(y, gamma - j)
    return tau * acc / (gamma + 1)


@njit(cache=True, nogil=True)
def _event_loop(gamma, beta, t, t_final, sigma, last_flip, budget, spin_sum, flip_count,
                marks, mark_pos, sample_times, sample_pos, out_m, out_age,
                log_time, log_index, log_age, log_pos, log_enabled):
    n = sigma.shape[0]
    k = (gamma + 1) * beta
    m = spin_sum / n
    c_plus = math.exp(-k * m)
    c_minus = math.exp(k * m)

    # candidate pass
    j = -1
    tau_min = np.inf
    for i in range(n):
        c = c_plus if sigma[i] > 0 else c_minus
        tau = _delay(gamma, t - last_flip[i], c, budget[i])
        if tau < tau_min:
            tau_min = tau
            j = i

    while True:
        t_ev = t + tau_min
        stop = t_ev > t_final
        horizon = t_final if stop else t_ev
        while sample_pos < sample_times.shape[0] and (
            sample_times[sample_pos] < horizon or (stop and sample_times[sample_pos] <= horizon)
        ):
            s = sample_times[sample_pos]
            out_m[sample_pos] = spin_sum / n
            acc = 0.0
            for i in range(n):
                acc += s - last_flip[i]
            out_age[sample_pos] = acc / n
            sample_pos += 1
        if stop:
            dt = t_final - t
            for i in range(n):
                c = c_plus if sigma[i] > 0 else c_minus
                b = budget[i] - c * _age_integral(gamma, t - last_flip[i], dt)
                budget[i] = b if b > 0.0 else 0.0
            return _DONE, t_final, spin_sum, flip_count, sample_pos, log_pos
        if mark_pos[j] >= marks.shape[1]:
            return _NEED_MARKS, t, spin_sum, flip_count, sample_pos, log_pos
        if log_enabled and log_pos >= log_time.shape[0]:
            return _LOG_FULL, t, spin_sum, flip_count, sample_pos, log_pos

        # commit the flip of particle j at t_ev
        if log_enabled:
            log_time[log_pos] = t_ev
            log_index[log_pos] = j
            log_age[log_pos] = t_ev - last_flip[j]
            log_pos += 1
        old_plus = c_plus
        old_minus = c_minus
        spin_sum -= 2 * sigma[j]
        sigma[j] = -sigma[j]
        last_flip[j] = t_ev
        budget[j] = marks[j, mark_pos[j]]
        mark_pos[j] += 1
        flip_count += 1
        m = spin_sum / n
        c_plus = math.exp(-k * m)
        c_minus = math.exp(k * m)

        # fused pass: consume budgets over [t, t_ev], then next candidates
        flipped = j
        j = -1
        best = np.inf
        for i in range(n):
            if i != flipped:
                if sigma[i] > 0:
                    c_old = old_plus
                    c = c_plus
                else:
                    c_old = old_minus
                    c = c_minus
                b = budget[i] - c_old * _age_integral(gamma, t - last_flip[i], tau_min)
                if b < 0.0:
                    b = 0.0
                budget[i] = b
            else:
                c = c_plus if sigma[i] > 0 else c_minus
            tau = _delay(gamma, t_ev - last_flip[i], c, budget[i])
            if tau < best:
                best = tau
                j = i
        tau_min = best
        t = t_ev


@njit(cache=True, nogil=True)
def _coupled_window(gamma, beta, times, owner, xi, m_copy,
                    sigma, last_flip, spin_sum, sigma_c, last_c, sup_dist, jump_t, jump_sum):
    n = sigma.shape[0]
    k = (gamma + 1) * beta
    n_flips = 0
    for p in range(times.shape[0]):
        s = times[p]
        i = owner[p]
        m = spin_sum / n
        y = s - last_flip[i]
        rate = _ipow(y, gamma) * math.exp(-k * sigma[i] * m)
        yc = s - last_c[i]
        rate_c = _ipow(yc, gamma) * math.exp(-k * sigma_c[i] * m_copy[p])
        hit = xi[p] < rate
        hit_c = xi[p] < rate_c
        if hit:
            spin_sum -= 2 * sigma[i]
            sigma[i] = -sigma[i]
            last_flip[i] = s
            jump_t[n_flips] = s
            jump_sum[n_flips] = spin_sum
            n_flips += 1
        if hit_c:
            sigma_c[i] = -sigma_c[i]
            last_c[i] = s
        if hit or hit_c:
            d = abs(sigma[i] - sigma_c[i]) + abs(last_c[i] - last_flip[i])
            if d > sup_dist[i]:
                sup_dist[i] = d
    return spin_sum, n_flips


# ---------------------------------------------------------------------------
# initial conditions


def all_plus(n: int) -> SystemState:
    """All spins +1, all ages 0."""
    return SystemState(np.ones(n, dtype=np.int64), np.zeros(n))


def fair_spins(n: int, seed: int, stationary_ages: bool = False, gamma: int = 1) -> SystemState:
    """I.i.d. fair spins; ages 0, or drawn from the neutral stationary law."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2**32,)))
    sigma = rng.choice(np.array([-1, 1]), size=n)
    ages = sample_stationary_ages(gamma, n, rng) if stationary_ages else np.zeros(n)
    return SystemState.from_ages(sigma, ages)


def with_magnetization(n: int, m0: float) -> SystemState:
    """Deterministic start with ``round(n (1 + m0) / 2)`` plus spins first, ages 0."""
    if abs(m0) > 1:
        raise ValueError("|m0| must be <= 1")
    n_plus = int(round(n * (1 + m0) / 2))
    sigma = np.where(np.arange(n) < n_plus, 1, -1)
    return SystemState(sigma, np.zeros(n))


INITIAL_CONDITIONS = ("all-plus", "fair", "fair-stationary")


def make_initial(kind: str, params: ModelParams) -> SystemState:
    if kind == "all-plus":
        return all_plus(params.n_particles)
    if kind == "fair":
        return fair_spins(params.n_particles, params.seed)
    if kind == "fair-stationary":
        return fair_spins(params.n_particles, params.seed, stationary_ages=True, gamma=params.gamma)
    raise ValueError(f"unknown initial condition {kind!r}; expected one of {INITIAL_CONDITIONS}")


# ---------------------------------------------------------------------------
# single-step API


def candidate_times(state: SystemState, params: ModelParams, marks) -> np.ndarray:
    """Absolute candidate flip times for every particle given residual budgets ``marks``."""
    marks = np.broadcast_to(np.asarray(marks, dtype=np.float64), state.sigma.shape)
    c = np.exp(-(params.gamma + 1) * params.beta * state.sigma * state.m)
    return state.t + sample_flip_time(state.ages, c, marks, params.gamma)


def next_event(state: SystemState, params: ModelParams, marks) -> Optional[tuple[int, float]]:
    """Competing-clocks step: the particle whose budget runs out first.

    Returns ``(index, time)`` or ``None`` if no flip happens before
    ``params.t_final``.  Ties go to the lowest index.
    """
    if not state.t < params.t_final:
        raise ValueError("state is already at the horizon")
    times = candidate_times(state, params, marks)
    j = int(np.argmin(times))
    if times[j] > params.t_final:
        return None
    return j, float(times[j])


def advance(state: SystemState, t_new: float) -> SystemState:
    """Let time run without flips; ages grow with unit slope."""
    if t_new < state.t:
        raise ValueError("cannot move backwards in time")
    state.t = t_new
    return state


def apply_flip(state: SystemState, index: int) -> SystemState:
    """Flip particle ``index`` at the current time and reset its age."""
    s = int(state.sigma[index])
    state.sigma[index] = -s
    state.last_flip[index] = state.t
    state.spin_sum -= 2 * s
    state.flip_count += 1
    return state


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class FlipLog:
    time: np.ndarray
    index: np.ndarray
    age: np.ndarray

    def interarrival_times(self, n: int, first_k: Optional[int] = None) -> np.ndarray:
        """Ages at flip, optionally only the first ``first_k`` of every particle.

        Taking a fixed number per particle avoids the length bias of the
        interval straddling the horizon.
        """
        if first_k is None:
            return self.age.copy()
        rank = np.zeros(self.index.size, dtype=np.int64)
        seen = np.zeros(n, dtype=np.int64)
        for p, i in enumerate(self.index):
            rank[p] = seen[i]
            seen[i] += 1
        return self.age[rank < first_k]

    def per_particle_counts(self, n: int) -> np.ndarray:
        return np.bincount(self.index, minlength=n)


@dataclass
class Trajectory:
    sample_times: np.ndarray
    magnetization: np.ndarray
    mean_age: np.ndarray
    flip_count: int
    final_state: Optional[SystemState] = None
    flips: Optional[FlipLog] = None

    def __post_init__(self):
        if not (len(self.sample_times) == len(self.magnetization) == len(self.mean_age)):
            raise ValueError("trajectory columns must share one length")
        if np.any(np.diff(self.sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")


def sample_grid(t0: float, t_final: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("sample_dt must be > 0")
    count = int(math.floor((t_final - t0) / dt + 1e-9)) + 1
    return t0 + dt * np.arange(count)


def simulate(params: ModelParams, initial: SystemState, sample_dt: float = DEFAULT_SAMPLE_DT,
             streams: Optional[np.ndarray] = None, record_flips: bool = False) -> Trajectory:
    """Run the interacting system from ``initial`` to ``params.t_final``.

    ``streams`` assigns a random-stream index to every particle (default
    ``0..N-1``).  The result is a deterministic function of
    ``(params, initial, streams)``.  Every call starts the streams from their
    beginning, so continuing from ``final_state`` needs a fresh seed or the
    continuation replays the marks already used.
    """
    n = initial.n
    if n != params.n_particles:
        raise ValueError(f"initial state has {n} particles, params say {params.n_particles}")
    if not initial.t < params.t_final:
        raise ValueError("initial time must precede t_final")
    grid = sample_grid(initial.t, params.t_final, sample_dt)
    indices = np.arange(n) if streams is None else np.asarray(streams, dtype=np.int64)
    if indices.shape != (n,):
        raise ValueError("need one stream index per particle")

    state = initial.copy()
    rng = RngStreams(params.seed)
    width = max(1, _MARK_SLACK + int(_MARK_RATE * (params.t_final - initial.t)))
    bank = _MarkBank(rng, indices, width)
    budget = bank.marks[:, 0].copy()
    mark_pos = np.ones(n, dtype=np.int64)

    out_m = np.empty(grid.size)
    out_age = np.empty(grid.size)
    cap = max(1024, 2 * n) if record_flips else 1
    log_time = np.empty(cap)
    log_index = np.empty(cap, dtype=np.int64)
    log_age = np.empty(cap)

    t = state.t
    spin_sum = state.spin_sum
    flip_count = state.flip_count
    sample_pos = 0
    log_pos = 0
    while True:
        status, t, spin_sum, flip_count, sample_pos, log_pos = _event_loop(
            params.gamma, params.beta, t, params.t_final, state.sigma, state.last_flip, budget,
            spin_sum, flip_count, bank.marks, mark_pos, grid, sample_pos, out_m, out_age,
            log_time, log_index, log_age, log_pos, record_flips)
        if status == _DONE:
            break
        if status == _NEED_MARKS:
            bank.grow()
        elif status == _LOG_FULL:
            log_time = np.concatenate([log_time, np.empty_like(log_time)])
            log_index = np.concatenate([log_index, np.empty_like(log_index)])
            log_age = np.concatenate([log_age, np.empty_like(log_age)])

    state.t = t
    state.spin_sum = spin_sum
    state.flip_count = flip_count
    flips = None
    if record_flips:
        flips = FlipLog(log_time[:log_pos].copy(), log_index[:log_pos].copy(), log_age[:log_pos].copy())
    return Trajectory(grid, out_m, out_age, flip_count - initial.flip_count, state, flips)


# ---------------------------------------------------------------------------
# stationary age law


@dataclass
class AgeHistogram:
    edges: np.ndarray
    density: np.ndarray
    samples: np.ndarray


def ages_at(flips: FlipLog, initial: SystemState, times) -> list[np.ndarray]:
    """Particle ages at each of ``times``, reconstructed from a flip log."""
    last = initial.last_flip.copy()
    out = []
    pos = 0
    for s in np.sort(np.asarray(times, dtype=np.float64)):
        while pos < flips.time.size and flips.time[pos] <= s:
            last[flips.index[pos]] = flips.time[pos]
            pos += 1
        out.append(s - last)
    return out


def stationary_age_histogram(params: ModelParams, burn_in: float, n_bins: int = 50,
                             initial: Optional[SystemState] = None,
                             snapshot_spacing: Optional[float] = None) -> AgeHistogram:
    """Histogram of particle ages observed after ``burn_in``.

    Ages are read off snapshots at ``burn_in, burn_in + spacing, ...`` up to
    ``t_final`` (default: just ``burn_in`` and ``t_final``) of a single run.
    The density is normalized over both spin values, so it is comparable to
    ``exp(-y**(gamma+1)/(gamma+1)) / Lambda``.
    """
    if not 0 <= burn_in < params.t_final:
        raise ValueError("burn_in must lie in [0, t_final)")
    if initial is None:
        initial = fair_spins(params.n_particles, params.seed)
    spacing = snapshot_spacing or (params.t_final - burn_in)
    times = np.arange(burn_in, params.t_final + 1e-9, spacing)
    traj = simulate(params, initial, sample_dt=params.t_final - initial.t, record_flips=True)
    ages = np.concatenate(ages_at(traj.flips, initial, times))
    y_max = max(float(ages.max()), 1e-12)
    density, edges = np.histogram(ages, bins=n_bins, range=(0.0, y_max), density=True)
    return AgeHistogram(edges, density, ages)


def stationary_age_cdf(gamma: int, y):
    """CDF of the stationary age law (both spins pooled)."""
    from scipy.special import gammainc

    k = gamma + 1
    y = np.asarray(y, dtype=np.float64)
    return gammainc(1.0 / k, y**k / k)


# ---------------------------------------------------------------------------
# coupling with the mean-field limit


class StepPath:
    """Piecewise-constant path; the value at a jump time is the left limit."""

    def __init__(self, jump_times, values, t0: float = 0.0, t1: float = np.inf):
        self.jump_times = np.asarray(jump_times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.size != self.jump_times.size + 1:
            raise ValueError("need one more value than jump times")
        self.domain = (t0, t1)

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=np.float64), side="left")
        return self.values[idx]


@dataclass
class CouplingStats:
    n: int
    distance: float
    per_particle_sup: np.ndarray
    interacting_m: Optional[StepPath] = field(default=None, repr=False)

    def __post_init__(self):
        if self.distance < 0:
            raise ValueError("distance must be >= 0")


def _check_domain(mean_field_m, t0: float, t1: float):
    domain = getattr(mean_field_m, "domain", None)
    if domain is not None:
        lo, hi = domain
        if lo > t0 + 1e-9 or hi < t1 - 1e-9:
            raise ValueError(f"mean-field path covers [{lo}, {hi}], need [{t0}, {t1}]")
    probe = np.asarray(mean_field_m(np.array([t0, 0.5 * (t0 + t1), t1])), dtype=np.float64)
    if probe.shape != (3,) or not np.all(np.isfinite(probe)) or np.any(np.abs(probe) > 1 + 1e-12):
        raise ValueError("mean-field path must return finite values in [-1, 1] on [0, t_final]")


def simulate_coupled(params: ModelParams, mean_field_m: Callable, initial: Optional[SystemState] = None,
                     window: float = 1.0, streams: Optional[np.ndarray] = None) -> CouplingStats:
    """Interacting system vs. independent copies driven by ``mean_field_m``.

    Particle ``i`` of both systems reads the same Poisson random measure on
    ``[0, T] x [0, inf)`` and flips at a point ``(s, xi)`` when ``xi`` lies below
    its current rate.  The measure is realized window by window in horizontal
    layers of height ``exp((g+1) beta)``, each window from its own stream
    ``(i, window)``; only as many layers are drawn as the larger of the two
    ages requires, and the lower layers never depend on how many are drawn.
    So the interacting system's path does not depend on ``mean_field_m``.
    Returns the mean over particles of ``sup_t |sigma_i - sigma~_i| + |y_i - y~_i|``.
    """
    if initial is None:
        initial = all_plus(params.n_particles)
    n = initial.n
    if n != params.n_particles:
        raise ValueError(f"initial state has {n} particles, params say {params.n_particles}")
    if not window > 0:
        raise ValueError("window must be > 0")
    t0, t1 = initial.t, params.t_final
    _check_domain(mean_field_m, t0, t1)
    indices = np.arange(n) if streams is None else np.asarray(streams, dtype=np.int64)
    rng = RngStreams(params.seed)

    g, beta = params.gamma, params.beta
    sigma = initial.sigma.copy()
    last = initial.last_flip.copy()
    sigma_c = initial.sigma.copy()
    last_c = initial.last_flip.copy()
    spin_sum = int(sigma.sum())
    sup_dist = np.zeros(n)
    jump_times = [np.empty(0)]
    jump_values = [np.array([spin_sum / n])]
    height = math.exp((g + 1) * beta)

    a = t0
    w_index = 0
    while a < t1:
        b = min(a + window, t1)
        width = b - a
        # both rates stay below age_hi**g * height on [a, b)
        age_hi = np.maximum(a - last, a - last_c) + width
        layers = np.maximum(1, np.ceil(age_hi**g)).astype(np.int64) if g else np.ones(n, dtype=np.int64)
        chunks_t, chunks_i, chunks_x = [], [], []
        for i in range(n):
            gen = rng.generator(int(indices[i]), _THINNING, w_index)
            for layer in range(layers[i]):
                count = gen.poisson(height * width)
                ts = a + width * gen.random(count)
                xs = height * (layer + gen.random(count))
                if count:
                    chunks_t.append(ts)
                    chunks_x.append(xs)
                    chunks_i.append(np.full(count, i, dtype=np.int64))
        if chunks_t:
            times = np.concatenate(chunks_t)
            order = np.argsort(times, kind="stable")
            times = times[order]
            owner = np.concatenate(chunks_i)[order]
            xi = np.concatenate(chunks_x)[order]
            m_copy = np.asarray(mean_field_m(times), dtype=np.float64)
            jt = np.empty(times.size)
            js = np.empty(times.size, dtype=np.int64)
            spin_sum, n_flips = _coupled_window(g, beta, times, owner, xi, m_copy, sigma, last,
                                                spin_sum, sigma_c, last_c, sup_dist, jt, js)
            jump_times.append(jt[:n_flips])
            jump_values.append(js[:n_flips] / n)
        a = b
        w_index += 1

    path = StepPath(np.concatenate(jump_times), np.concatenate(jump_values), t0, t1)
    return CouplingStats(n, float(sup_dist.mean()), sup_dist, path)
