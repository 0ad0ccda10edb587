"""Mean-field Fokker-Planck solver for the age-structured spin densities.

The unknowns are ``f(t, +1, y)`` and ``f(t, -1, y)`` on a truncated age axis
``[0, y_max]`` split into ``n_cells`` cells.  Each step

1. damps every cell by the exact survival factor along its characteristic,
   ``exp(-c_sigma * ((y+dt)^(g+1) - y^(g+1)) / (g+1))``,
2. shifts mass one cell up the age axis with first-order upwind transport
   (exact when ``dt == dy``),
3. refills the age-0 cell from the renewal inflow of the opposite spin,
4. recomputes ``m`` from the new densities.

The rates are frozen at the start of the step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelParams, normalization_lambda

log = logging.getLogger(__name__)

MASS_TOL = 1e-8
DEFAULT_DY = 0.01


def default_y_max(gamma: int, beta: float = 1.0) -> float:
    """Age cutoff beyond which ``survival * exp((g+1) beta)`` drops under 1e-12."""
    if gamma == 1:
        return 10.0
    if gamma == 2:
        return 5.0
    k = gamma + 1
    need = math.log(1e12) + k * beta
    return float(math.ceil((k * need) ** (1.0 / k)))


@dataclass
class DensityGrid:
    y_max: float
    n_cells: int
    f_plus: np.ndarray
    f_minus: np.ndarray
    t: float = 0.0
    m: float = field(default=float("nan"))
    renormalization: float = 0.0

    def __post_init__(self):
        self.f_plus = np.asarray(self.f_plus, dtype=np.float64)
        self.f_minus = np.asarray(self.f_minus, dtype=np.float64)
        if self.f_plus.shape != (self.n_cells,) or self.f_minus.shape != (self.n_cells,):
            raise ValueError("density arrays must have n_cells entries")
        if np.any(self.f_plus < 0) or np.any(self.f_minus < 0):
            raise ValueError("densities must be nonnegative")
        if math.isnan(self.m):
            self.m = self.magnetization()

    @property
    def dy(self) -> float:
        return self.y_max / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dy

    def mass(self) -> float:
        return self.dy * (self.f_plus.sum() + self.f_minus.sum())

    def magnetization(self) -> float:
        return self.dy * (self.f_plus.sum() - self.f_minus.sum())

    def mean_age(self) -> float:
        return self.dy * float(np.dot(self.centers, self.f_plus + self.f_minus)) / self.mass()

    def check(self, mass_tol: float = MASS_TOL):
        if abs(self.mass() - 1.0) > mass_tol:
            raise ValueError(f"total mass {self.mass()!r} is not 1")
        if np.any(self.f_plus < 0) or np.any(self.f_minus < 0):
            raise ValueError("negative density")
        if abs(self.magnetization() - self.m) > 1e-12:
            raise ValueError("stored magnetization is stale")

    def mirrored(self) -> "DensityGrid":
        """Swap the spin labels."""
        return DensityGrid(self.y_max, self.n_cells, self.f_minus.copy(), self.f_plus.copy(),
                           self.t, -self.m, self.renormalization)

    # constructors

    @classmethod
    def stationary(cls, gamma: int, y_max: Optional[float] = None, dy: float = DEFAULT_DY,
                   tilt: float = 0.0) -> "DensityGrid":
        """Neutral equilibrium sampled at cell centers; ``tilt`` scales the spins by ``1 +/- tilt``.

        The samples are rescaled so the discrete mass is exactly 1.
        """
        y_max = default_y_max(gamma) if y_max is None else y_max
        n = int(round(y_max / dy))
        y = (np.arange(n) + 0.5) * (y_max / n)
        k = gamma + 1
        f = np.exp(-(y**k) / k)
        f /= 2.0 * (y_max / n) * f.sum()
        return cls(y_max, n, (1.0 + tilt) * f, (1.0 - tilt) * f)

    @classmethod
    def newborn(cls, gamma: int, m0: float = 1.0, y_max: Optional[float] = None,
                dy: float = DEFAULT_DY) -> "DensityGrid":
        """All particles at age 0, a fraction ``(1 + m0)/2`` with spin +1."""
        if abs(m0) > 1:
            raise ValueError("|m0| must be <= 1")
        y_max = default_y_max(gamma) if y_max is None else y_max
        n = int(round(y_max / dy))
        width = y_max / n
        f_plus = np.zeros(n)
        f_minus = np.zeros(n)
        f_plus[0] = 0.5 * (1.0 + m0) / width
        f_minus[0] = 0.5 * (1.0 - m0) / width
        return cls(y_max, n, f_plus, f_minus)


def _age_integral(gamma: int, y: np.ndarray, tau: float) -> np.ndarray:
    a = y + tau
    acc = np.zeros_like(y)
    for j in range(gamma + 1):
        acc += a**j * y ** (gamma - j)
    return tau * acc / (gamma + 1)


def boundary_inflow(grid: DensityGrid, sigma: int, params: ModelParams) -> float:
    """Density entering age 0 with spin ``sigma``: midpoint rule for
    ``int y^g exp((g+1) beta sigma m) f(-sigma, y) dy``."""
    if sigma not in (-1, 1):
        raise ValueError("sigma must be -1 or +1")
    g = params.gamma
    source = grid.f_minus if sigma > 0 else grid.f_plus
    scale = math.exp((g + 1) * params.beta * sigma * grid.m)
    return float(scale * grid.dy * np.dot(grid.centers**g, source))


def pde_step(grid: DensityGrid, params: ModelParams, dt: float) -> DensityGrid:
    """Advance the densities by one explicit step of length ``dt`` (needs ``dt <= dy``)."""
    dy = grid.dy
    if not 0 < dt <= dy * (1 + 1e-12):
        raise ValueError(f"CFL violation: dt={dt} must lie in (0, dy={dy}]")
    g = params.gamma
    k = (g + 1) * params.beta
    c_plus = math.exp(-k * grid.m)
    c_minus = math.exp(k * grid.m)
    in_plus = boundary_inflow(grid, 1, params)
    in_minus = boundary_inflow(grid, -1, params)

    surv = _age_integral(g, grid.centers, dt)
    nu = min(dt / dy, 1.0)
    new = []
    for f, c, inflow in ((grid.f_plus, c_plus, in_plus), (grid.f_minus, c_minus, in_minus)):
        damped = f * np.exp(-c * surv)
        out = np.empty_like(damped)
        out[1:] = (1.0 - nu) * damped[1:] + nu * damped[:-1]
        out[0] = (1.0 - nu) * damped[0] + nu * inflow
        new.append(out)
    f_plus, f_minus = new

    renorm = grid.renormalization
    s_plus, s_minus = f_plus.sum(), f_minus.sum()
    mass = dy * (s_plus + s_minus)
    if abs(mass - 1.0) > MASS_TOL:
        f_plus /= mass
        f_minus /= mass
        s_plus, s_minus = f_plus.sum(), f_minus.sum()
        renorm += abs(mass - 1.0)
        log.debug("t=%.6g: renormalized mass drift %.3e", grid.t + dt, mass - 1.0)
    m = dy * (s_plus - s_minus)
    return DensityGrid(grid.y_max, grid.n_cells, f_plus, f_minus, grid.t + dt, m, renorm)


@dataclass
class MeanFieldTrajectory:
    sample_times: np.ndarray
    magnetization: np.ndarray
    mean_age: Optional[np.ndarray] = None
    final_grid: Optional[DensityGrid] = field(default=None, repr=False)

    def __post_init__(self):
        self.sample_times = np.asarray(self.sample_times, dtype=np.float64)
        self.magnetization = np.asarray(self.magnetization, dtype=np.float64)
        if self.mean_age is not None:
            self.mean_age = np.asarray(self.mean_age, dtype=np.float64)
        if self.sample_times.shape != self.magnetization.shape or (
                self.mean_age is not None and self.mean_age.shape != self.sample_times.shape):
            raise ValueError("trajectory columns must share one length")
        if np.any(np.diff(self.sample_times) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.sample_times[0]), float(self.sample_times[-1])

    def __call__(self, t):
        """Linear interpolation of ``m``."""
        return np.interp(t, self.sample_times, self.magnetization)


def _steps_between(span: float, dt: float) -> int:
    count = span / dt
    n = int(round(count))
    if abs(count - n) > 1e-6 * max(1.0, count):
        raise ValueError(f"{span} is not a whole number of steps of {dt}")
    return n


def run_pde(params: ModelParams, initial: DensityGrid, sample_dt: float = 0.05,
            dt: Optional[float] = None) -> MeanFieldTrajectory:
    """Integrate from ``initial`` to ``params.t_final``, recording ``m`` every ``sample_dt``.

    ``dt`` defaults to the cell width, where upwind transport is exact.  It
    must divide ``sample_dt``.
    """
    initial.check()
    dt = initial.dy if dt is None else dt
    per_sample = _steps_between(sample_dt, dt)
    n_steps = _steps_between(params.t_final - initial.t, dt) if per_sample else 0
    times = [initial.t]
    values = [initial.m]
    ages = [initial.mean_age()]
    grid = initial
    for step in range(1, n_steps + 1):
        grid = pde_step(grid, params, dt)
        if step % per_sample == 0:
            times.append(initial.t + step * dt)
            values.append(grid.m)
            ages.append(grid.mean_age())
    if grid.renormalization:
        log.info("accumulated mass renormalization %.3e over %d steps", grid.renormalization, n_steps)
    return MeanFieldTrajectory(np.array(times), np.array(values), np.array(ages), grid)


def curie_weiss_ode(m0: float, beta: float, t_final: float, dt: float = 0.01) -> MeanFieldTrajectory:
    """RK4 integration of ``m' = 2 sinh(beta m) - 2 m cosh(beta m)``."""
    if abs(m0) > 1:
        raise ValueError("|m0| must be <= 1")
    if not dt > 0:
        raise ValueError("dt must be > 0")

    def rhs(m):
        return 2.0 * math.sinh(beta * m) - 2.0 * m * math.cosh(beta * m)

    n = int(math.ceil(t_final / dt - 1e-9))
    h = t_final / n
    out = np.empty(n + 1)
    out[0] = m = float(m0)
    for i in range(1, n + 1):
        k1 = rhs(m)
        k2 = rhs(m + 0.5 * h * k1)
        k3 = rhs(m + 0.5 * h * k2)
        k4 = rhs(m + h * k3)
        m = min(1.0, max(-1.0, m + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0))
        out[i] = m
    return MeanFieldTrajectory(h * np.arange(n + 1), out)


def stationary_profile(gamma: int, y) -> np.ndarray:
    """Continuous neutral equilibrium density for one spin value."""
    k = gamma + 1
    return np.exp(-np.asarray(y) ** k / k) / (2.0 * normalization_lambda(gamma))
