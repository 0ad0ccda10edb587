"""Domain types and the hazard / survival laws shared by every engine.

A particle carries a spin ``sigma`` in {-1, +1} and an age ``y`` (time since
its last flip).  With tail exponent ``gamma`` it flips at rate

    y**gamma * exp(-(gamma + 1) * beta * sigma * m)

where ``m`` is the magnetization.  ``gamma = 0`` gives back the Curie-Weiss
spin-flip rate ``exp(-beta * sigma * m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class ModelParams:
    gamma: int
    beta: float
    n_particles: int = 1500
    t_final: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.gamma, bool) or int(self.gamma) != self.gamma or self.gamma < 0:
            raise ValueError(f"gamma must be a nonnegative integer, got {self.gamma!r}")
        if self.gamma > 64:
            raise ValueError(f"gamma={self.gamma} is outside the supported range [0, 64]")
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta!r}")
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError(f"n_particles must be a positive integer, got {self.n_particles!r}")
        if not (self.t_final > 0 and math.isfinite(self.t_final)):
            raise ValueError(f"t_final must be finite and > 0, got {self.t_final!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "gamma", int(self.gamma))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "n_particles", int(self.n_particles))
        object.__setattr__(self, "t_final", float(self.t_final))
        object.__setattr__(self, "seed", int(self.seed))

    def replace(self, **changes) -> "ModelParams":
        values = {
            "gamma": self.gamma,
            "beta": self.beta,
            "n_particles": self.n_particles,
            "t_final": self.t_final,
            "seed": self.seed,
        }
        values.update(changes)
        return ModelParams(**values)


@dataclass(frozen=True)
class ParticleState:
    sigma: int
    y: float

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise ValueError(f"sigma must be -1 or +1, got {self.sigma!r}")
        if not self.y >= 0:
            raise ValueError(f"age must be >= 0, got {self.y!r}")


@dataclass
class SystemState:
    """Mutable N-particle state.

    Ages are stored as last-flip times so that ``age = t - last_flip`` holds
    exactly at every instant.  The magnetization is kept as the integer spin
    sum, which makes ``m == mean(sigma)`` exact.
    """

    sigma: np.ndarray
    last_flip: np.ndarray
    t: float = 0.0
    flip_count: int = 0
    spin_sum: int = field(init=False)

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=np.int64).copy()
        self.last_flip = np.asarray(self.last_flip, dtype=np.float64).copy()
        if self.sigma.ndim != 1 or self.sigma.shape != self.last_flip.shape:
            raise ValueError("sigma and last_flip must be 1-d arrays of equal length")
        if self.sigma.size == 0:
            raise ValueError("a system needs at least one particle")
        if not np.all(np.abs(self.sigma) == 1):
            raise ValueError("spins must be -1 or +1")
        if np.any(self.last_flip > self.t):
            raise ValueError("ages must be nonnegative (last_flip <= t)")
        self.spin_sum = int(self.sigma.sum())

    @classmethod
    def from_ages(cls, sigma, ages, t: float = 0.0) -> "SystemState":
        ages = np.asarray(ages, dtype=np.float64)
        if np.any(ages < 0):
            raise ValueError("ages must be nonnegative")
        return cls(sigma=sigma, last_flip=t - ages, t=t)

    @classmethod
    def from_particles(cls, particles, t: float = 0.0) -> "SystemState":
        particles = list(particles)
        return cls.from_ages([p.sigma for p in particles], [p.y for p in particles], t)

    @property
    def n(self) -> int:
        return self.sigma.size

    @property
    def m(self) -> float:
        return self.spin_sum / self.n

    @property
    def ages(self) -> np.ndarray:
        return self.t - self.last_flip

    @property
    def particles(self) -> list[ParticleState]:
        return [ParticleState(int(s), float(y)) for s, y in zip(self.sigma, self.ages)]

    def copy(self) -> "SystemState":
        out = SystemState(self.sigma, self.last_flip, self.t, self.flip_count)
        return out


def int_power(y, k: int):
    """``y**k`` by repeated multiplication for small integer ``k``."""
    if k > 8:
        return y**k
    out = np.ones_like(y) if isinstance(y, np.ndarray) else 1.0
    for _ in range(k):
        out = out * y
    return out


def rate_scale(sigma, m, gamma: int, beta: float):
    """Spin/magnetization factor ``exp(-(gamma+1) beta sigma m)`` of the flip rate."""
    return np.exp(-(gamma + 1) * beta * np.asarray(sigma) * np.asarray(m))


def hazard_rate(sigma, y, m, params: ModelParams):
    """Instantaneous flip rate of a particle with spin ``sigma`` and age ``y``."""
    g = params.gamma
    out = int_power(y, g) * rate_scale(sigma, m, g, params.beta)
    return float(out) if np.ndim(out) == 0 else out


def survival(gamma: int, t):
    """Probability that a free interarrival time exceeds ``t``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("survival is defined for t >= 0")
    out = np.exp(-int_power(t, gamma + 1) / (gamma + 1))
    return float(out) if out.ndim == 0 else out


def integrated_age_power(gamma: int, y0, tau):
    """``((y0 + tau)**(gamma+1) - y0**(gamma+1)) / (gamma+1)`` without cancellation."""
    a = y0 + tau
    acc = 0.0
    for k in range(gamma + 1):
        acc = acc + int_power(a, k) * int_power(y0, gamma - k)
    return tau * acc / (gamma + 1)


def _root(x, k: int):
    if k == 1:
        return x
    if k == 2:
        return np.sqrt(x)
    if k == 3:
        return np.cbrt(x)
    return x ** (1.0 / k)


def sample_flip_time(y0, c, e_mark, gamma: int):
    """Waiting time until a flip, given current age, rate scale and unit-exponential mark.

    Inverts ``c * integrated_age_power(gamma, y0, tau) = e_mark`` for ``tau``.
    Written as ``target / sum(a**k y0**(gamma-k))`` to avoid the cancellation
    in ``a - y0`` when the age is large compared to the increment.
    """
    c_arr = np.asarray(c, dtype=np.float64)
    if np.any(~(c_arr > 0)):
        raise ValueError("rate scale c must be > 0")
    y0 = np.asarray(y0, dtype=np.float64)
    e_mark = np.asarray(e_mark, dtype=np.float64)
    k = gamma + 1
    target = k * e_mark / c_arr
    a = _root(int_power(y0, k) + target, k)
    denom = 0.0
    for j in range(k):
        denom = denom + int_power(a, j) * int_power(y0, gamma - j)
    out = target / denom
    if gamma > 2:
        # the generic power root is a few ulps off; one Newton step on the
        # stable integrated hazard brings it back to rounding level
        rate = c_arr * int_power(y0 + out, gamma)
        out = out - (c_arr * integrated_age_power(gamma, y0, out) - e_mark) / rate
    return float(out) if out.ndim == 0 else out


def normalization_lambda(gamma: int) -> float:
    """Integral of the free survival function over [0, inf)."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    k = gamma + 1
    return k ** (1.0 / k - 1.0) * math.gamma(1.0 / k)


def stationary_density(gamma: int, y):
    """Age density of the neutral stationary state for one spin value, ``exp(-S(y)) / (2 Lambda)``."""
    return survival(gamma, y) / (2.0 * normalization_lambda(gamma))


def sample_stationary_ages(gamma: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ages from ``exp(-y**(gamma+1)/(gamma+1)) / Lambda``.

    ``y**(gamma+1)/(gamma+1)`` is Gamma(1/(gamma+1), 1) distributed.
    """
    k = gamma + 1
    u = rng.gamma(1.0 / k, 1.0, size=size)
    return _root(k * u, k)
