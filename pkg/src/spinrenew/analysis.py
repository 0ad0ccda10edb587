"""Oscillation statistics and phase classification of magnetization series."""

from __future__ import annotations

import enum
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d

from .model import ModelParams
from .particle_sim import make_initial, simulate

MIN_SAMPLES = 50
DEFAULT_AMP_THRESHOLD = 0.25
DEFAULT_MAG_THRESHOLD = 0.5
HYSTERESIS = 0.25


class TooShortSeries(ValueError):
    pass


class Phase(str, enum.Enum):
    STABLE = "Stable"
    OSCILLATORY = "Oscillatory"
    MAGNETIZED = "Magnetized"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PhaseLabel:
    kind: Phase
    amplitude: float
    period: Optional[float]
    late_mean_abs_m: float


def _series(traj):
    if isinstance(traj, tuple):
        t, m = traj
    else:
        t, m = traj.sample_times, traj.magnetization
    return np.asarray(t, dtype=np.float64), np.asarray(m, dtype=np.float64)


def _post_burn_in(traj, burn_in):
    t, m = _series(traj)
    if t.size == 0 or burn_in >= t[-1]:
        raise TooShortSeries(f"burn_in={burn_in} leaves no samples")
    keep = t >= burn_in
    if keep.sum() < MIN_SAMPLES:
        raise TooShortSeries(f"{int(keep.sum())} samples after burn-in, need {MIN_SAMPLES}")
    return t[keep], m[keep]


def detrend(m: np.ndarray) -> np.ndarray:
    """Subtract a running mean over a quarter of the series.

    The boxcar mean is applied twice (a triangular kernel): a single pass lets
    a sinc-weighted fraction of the oscillation itself into the trend.
    """
    window = max(1, m.size // 4)
    trend = uniform_filter1d(uniform_filter1d(m, window, mode="nearest"), window, mode="nearest")
    return m - trend


def upward_crossings(t: np.ndarray, x: np.ndarray, band: float) -> np.ndarray:
    """Times where ``x`` rises through 0 on its way from below ``-band`` to above ``+band``.

    A Schmitt trigger: noise wiggles inside the band do not count as crossings.
    """
    out = []
    low = False
    last_zero = None
    for i in range(1, x.size):
        if x[i - 1] < 0 <= x[i]:
            w = -x[i - 1] / (x[i] - x[i - 1])
            last_zero = t[i - 1] + w * (t[i] - t[i - 1])
        if x[i] < -band:
            low = True
        elif x[i] > band and low:
            if last_zero is not None:
                out.append(last_zero)
            low = False
    return np.asarray(out)


def estimate_period_amplitude(traj, burn_in: float = 0.0) -> tuple[Optional[float], float]:
    """(mean gap between upward zero crossings or None, half the 5-95 percentile range)."""
    t, m = _post_burn_in(traj, burn_in)
    x = detrend(m)
    p5, p95 = np.percentile(x, [5, 95])
    amplitude = float(0.5 * (p95 - p5))
    if amplitude <= 0:
        return None, 0.0
    crossings = upward_crossings(t, x, HYSTERESIS * amplitude)
    if crossings.size < 4:
        return None, amplitude
    return float(np.mean(np.diff(crossings))), amplitude


def late_mean_abs(traj) -> float:
    t, m = _series(traj)
    start = t[0] + 0.75 * (t[-1] - t[0])
    return float(abs(m[t >= start].mean()))


def classify_trajectory(traj, burn_in: Optional[float] = None,
                        amp_threshold: float = DEFAULT_AMP_THRESHOLD,
                        mag_threshold: float = DEFAULT_MAG_THRESHOLD) -> PhaseLabel:
    """Stable / Oscillatory / Magnetized label for one series; ``burn_in`` defaults to half the run."""
    t, _ = _series(traj)
    if burn_in is None:
        burn_in = t[0] + 0.5 * (t[-1] - t[0]) if t.size else 0.0
    period, amplitude = estimate_period_amplitude(traj, burn_in)
    late = late_mean_abs(traj)
    if late >= mag_threshold and amplitude < amp_threshold:
        kind = Phase.MAGNETIZED
    elif amplitude >= amp_threshold and period is not None:
        kind = Phase.OSCILLATORY
    else:
        kind = Phase.STABLE
    return PhaseLabel(kind, amplitude, period, min(late, 1.0))


# ---------------------------------------------------------------- sweeps

def replica_seed(master: int, beta_index: int, replica: int) -> int:
    """Seed of replica ``replica`` at the ``beta_index``-th sweep value.

    Derived from ``SeedSequence(master, spawn_key=(beta_index, replica))`` so adding
    replicas or values never changes existing ones.
    """
    ss = np.random.SeedSequence(master, spawn_key=(beta_index, replica))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def worker_count() -> int:
    env = os.environ.get("SPINRENEW_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("SPINRENEW_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


_ORDER = {Phase.STABLE: 0, Phase.OSCILLATORY: 1, Phase.MAGNETIZED: 2}


@dataclass
class SweepRow:
    beta: float
    label: Phase
    votes: dict
    mean_amplitude: float
    mean_period: Optional[float]
    labels: list = field(default_factory=list, repr=False)

    @property
    def vote_split(self) -> str:
        return "/".join(f"{k.value}:{self.votes.get(k, 0)}" for k in Phase)


def majority(labels: Sequence[PhaseLabel]) -> Phase:
    """Most common kind; ties go to the earlier of Stable, Oscillatory, Magnetized."""
    counts = Counter(lab.kind for lab in labels)
    return min(counts, key=lambda k: (-counts[k], _ORDER[k]))


def sweep_beta(params: ModelParams, beta_list: Sequence[float], n_seeds: int = 5,
               initial: str = "all-plus", burn_in: Optional[float] = None,
               amp_threshold: float = DEFAULT_AMP_THRESHOLD,
               mag_threshold: float = DEFAULT_MAG_THRESHOLD, sample_dt: float = 0.05,
               threads: Optional[int] = None) -> list[SweepRow]:
    """Classify ``n_seeds`` runs per value of beta (``params.beta`` is ignored).

    Rows come back ordered by beta; the replica seeds come from ``replica_seed``
    with ``params.seed`` as master.
    """
    betas = [float(b) for b in beta_list]
    if not betas:
        raise ValueError("beta_list must be nonempty")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    burn = params.t_final / 2 if burn_in is None else burn_in

    def job(key):
        b_idx, rep = key
        p = params.replace(beta=betas[b_idx], seed=replica_seed(params.seed, b_idx, rep))
        traj = simulate(p, make_initial(initial, p), sample_dt=sample_dt)
        return classify_trajectory(traj, burn, amp_threshold, mag_threshold)

    keys = [(i, r) for i in range(len(betas)) for r in range(n_seeds)]
    n_workers = min(threads or worker_count(), len(keys))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            results = list(pool.map(job, keys))
    else:
        results = [job(k) for k in keys]

    rows = []
    for i, b in enumerate(betas):
        labs = results[i * n_seeds:(i + 1) * n_seeds]
        periods = [lab.period for lab in labs if lab.period is not None]
        rows.append(SweepRow(
            beta=b,
            label=majority(labs),
            votes=dict(Counter(lab.kind for lab in labs)),
            mean_amplitude=float(np.mean([lab.amplitude for lab in labs])),
            mean_period=float(np.mean(periods)) if periods else None,
            labels=labs,
        ))
    rows.sort(key=lambda r: r.beta)
    return rows


def onset_window(rows: Sequence[SweepRow]) -> Optional[tuple[float, float]]:
    """(last beta before the first Oscillatory majority, first Oscillatory beta)."""
    for i, row in enumerate(rows):
        if row.label is Phase.OSCILLATORY:
            lo = rows[i - 1].beta if i > 0 else row.beta
            return lo, row.beta
    return None
