"""Eigenvalues of the linearization around the neutral equilibrium.

For ``gamma`` in {1, 2} the eigenvalues are the zeros of an entire function

    H_{beta,gamma}(lam) = A(lam) * H_gamma(lam) + B(lam)

where ``A``, ``B`` are polynomials and ``H_gamma`` is the Laplace transform
of the survival function ``exp(-y**(gamma+1)/(gamma+1))``.

``H_{beta,gamma}`` always has a zero of order ``gamma + 1`` at the origin
that does not correspond to an eigenvalue (the leading Taylor term is
``2 Lambda (1 - beta) lam**(gamma+1)``).  Root finding and zero counting
work on the deflated function ``G = H / lam**(gamma+1)`` by default; near the
origin ``G`` is evaluated from its own Taylor series.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate

from .model import normalization_lambda

SERIES_CAP = 400
SERIES_RTOL = 1e-16
R_SWITCH = {1: 4.0, 2: 2.5}
DEFLATE_RADIUS = 0.5
NEWTON_RTOL = 1e-10
NEWTON_MAXITER = 100
# Newton iterates beyond this modulus are abandoned (the real-axis integrand overflows
# for Re lam far below zero).
MAX_MODULUS = 30.0


class SpectralError(Exception):
    pass


class BracketError(SpectralError, ValueError):
    """The Hopf bracket does not straddle a crossing."""


class ContourError(SpectralError):
    """A zero sits on the counting contour."""


@dataclass(frozen=True)
class ComplexValue:
    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError("complex value must be finite")

    @classmethod
    def of(cls, z) -> "ComplexValue":
        z = complex(z)
        return cls(z.real, z.imag)

    def __complex__(self):
        return complex(self.re, self.im)

    def conjugate(self) -> "ComplexValue":
        return ComplexValue(self.re, -self.im)


@dataclass
class RootResult:
    lam: ComplexValue
    residual: float
    converged: bool
    iterations: int

    @property
    def z(self) -> complex:
        return complex(self.lam)


@dataclass
class HopfResult:
    beta_c: float
    omega_c: float
    bracket: tuple[float, float]
    path: list = field(default_factory=list, repr=False)


def _check_gamma(gamma):
    if gamma not in (1, 2):
        raise ValueError(f"spectral functions are implemented for gamma in {{1, 2}}, got {gamma!r}")


# ---------------------------------------------------------------- constants

def _gamma_fn(x: float) -> float:
    return math.gamma(x)


G13 = _gamma_fn(1.0 / 3.0)
G23 = _gamma_fn(2.0 / 3.0)
G43 = _gamma_fn(4.0 / 3.0)
G53 = _gamma_fn(5.0 / 3.0)
CBRT3 = 3.0 ** (1.0 / 3.0)
LAMBDA1 = math.sqrt(math.pi / 2.0)
LAMBDA2 = G13 / 3.0 ** (2.0 / 3.0)
SQRT_2PI = math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=None)
def series_coefficients(gamma: int) -> tuple[float, ...]:
    """``c_n`` with ``H_gamma(lam) = sum c_n (-lam)**n``; ``c_n = int y^n e^{-S(y)} dy / n!``."""
    _check_gamma(gamma)
    k = gamma + 1
    c = [0.0] * (SERIES_CAP + k)
    if gamma == 1:
        c[0], c[1] = LAMBDA1, 1.0
    else:
        c[0], c[1], c[2] = LAMBDA2, G23 / CBRT3, 0.5
    # int y^(m+k) e^-S = (m+1) int y^m e^-S
    for m in range(len(c) - k):
        c[m + k] = c[m] * (m + 1) / math.prod(range(m + 1, m + k + 1))
    return tuple(c)


def _poly(gamma: int, beta: float) -> tuple[list[float], list[float]]:
    """Ascending coefficients of A and B."""
    if gamma == 1:
        a = [-4.0 * beta, 0.0, 0.0, -math.sqrt(math.pi / 2.0)]
        b = [2.0 * beta * SQRT_2PI, -4.0 * beta, SQRT_2PI]
    else:
        lam2 = LAMBDA2
        a = [
            12.0 * beta,
            6.0 * beta * lam2 - 6.0 * beta * CBRT3 * G43,
            3.0 * beta * CBRT3**2 * G53 - 6.0 * beta * G23 / CBRT3,
            0.0,
            -lam2,
        ]
        b = [-12.0 * beta * lam2, 12.0 * beta * G23 / CBRT3, -6.0 * beta, 2.0 * lam2]
    return a, b


def _polyval(coeffs, z):
    out = 0j
    for c in reversed(coeffs):
        out = out * z + c
    return out


def _polyder(coeffs):
    return [i * c for i, c in enumerate(coeffs)][1:]


# ---------------------------------------------------------------- H_gamma

def _sum_series(coeffs, lam: complex, shift: int = 0) -> complex:
    """``sum coeffs[n] (-lam)**n`` with compensated accumulation and relative truncation."""
    x = -complex(lam)
    peak = abs(x) + 2
    re_terms, im_terms = [], []
    power = 1 + 0j
    partial = 0j
    small_run = 0
    for n in range(SERIES_CAP - shift):
        term = coeffs[n + shift] * power
        re_terms.append(term.real)
        im_terms.append(term.imag)
        partial += term
        if n > peak and abs(term) < SERIES_RTOL * abs(partial):
            small_run += 1
            if small_run > 3:
                break
        else:
            small_run = 0
        power *= x
    return complex(math.fsum(re_terms), math.fsum(im_terms))


def _series(gamma: int, lam: complex) -> complex:
    return _sum_series(series_coefficients(gamma), lam)


def _series_deriv(gamma: int, lam: complex) -> complex:
    c = series_coefficients(gamma)
    d = [-(n + 1) * c[n + 1] for n in range(len(c) - 1)]
    return _sum_series(d, lam)


def _quad(gamma: int, lam: complex) -> complex:
    """``int_0^inf exp(-y^(g+1)/(g+1) - lam y) dy`` by adaptive quadrature on the real axis."""
    k = gamma + 1
    a, b = lam.real, lam.imag
    y_peak = (-a) ** (1.0 / gamma) if a < 0 else 0.0

    def phi(y):
        return -(y**k) / k - a * y

    top = phi(y_peak)
    upper = max(1.0, 2.0 * y_peak)
    while phi(upper) > top - 50.0:
        upper *= 1.5

    def f(y):
        return math.exp(phi(y) - top)

    epsabs = 1e-16 * upper
    opts = dict(epsabs=epsabs, epsrel=1e-13, limit=400)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if b == 0.0:
            re = integrate.quad(f, 0.0, upper, **opts)[0]
            im = 0.0
        else:
            re = integrate.quad(f, 0.0, upper, weight="cos", wvar=b, **opts)[0]
            im = -integrate.quad(f, 0.0, upper, weight="sin", wvar=b, **opts)[0]
    return complex(re, im) * math.exp(top)


def eval_Hg(gamma: int, lam, r_switch: Optional[float] = None, branch: Optional[str] = None) -> complex:
    """Laplace transform of the survival function.

    ``branch`` forces "series" or "quad"; by default the series is used for
    ``|lam| <= r_switch``.
    """
    _check_gamma(gamma)
    lam = complex(lam)
    r = R_SWITCH[gamma] if r_switch is None else r_switch
    if branch is None:
        branch = "series" if abs(lam) <= r else "quad"
    if branch == "series":
        return _series(gamma, lam)
    if branch == "quad":
        return _quad(gamma, lam)
    raise ValueError(f"unknown branch {branch!r}")


def eval_Hg_deriv(gamma: int, lam, r_switch: Optional[float] = None) -> complex:
    _check_gamma(gamma)
    lam = complex(lam)
    r = R_SWITCH[gamma] if r_switch is None else r_switch
    if abs(lam) <= r:
        return _series_deriv(gamma, lam)
    h = 1e-6 * (1.0 + abs(lam))
    return (_quad(gamma, lam + h) - _quad(gamma, lam - h)) / (2.0 * h)


def eval_H1(lam, **kw) -> complex:
    return eval_Hg(1, lam, **kw)


def eval_H2(lam, **kw) -> complex:
    return eval_Hg(2, lam, **kw)


# ---------------------------------------------------------------- H_{beta,gamma}

def _parts(beta: float, gamma: int, lam: complex):
    a, b = _poly(gamma, beta)
    return _polyval(a, lam), eval_Hg(gamma, lam), _polyval(b, lam)


def eval_Hbg(beta: float, gamma: int, lam) -> complex:
    _check_gamma(gamma)
    lam = complex(lam)
    av, hv, bv = _parts(beta, gamma, lam)
    return av * hv + bv


def local_scale(beta: float, gamma: int, lam) -> float:
    """Magnitude of the terms that cancel at a root, for relative residuals."""
    av, hv, bv = _parts(beta, gamma, complex(lam))
    return abs(av) * abs(hv) + abs(bv)


def eval_Hbg_deriv(beta: float, gamma: int, lam) -> complex:
    _check_gamma(gamma)
    lam = complex(lam)
    a, b = _poly(gamma, beta)
    if abs(lam) <= R_SWITCH[gamma]:
        return (_polyval(_polyder(a), lam) * eval_Hg(gamma, lam)
                + _polyval(a, lam) * eval_Hg_deriv(gamma, lam) + _polyval(_polyder(b), lam))
    h = 1e-6 * (1.0 + abs(lam))
    return (eval_Hbg(beta, gamma, lam + h) - eval_Hbg(beta, gamma, lam - h)) / (2.0 * h)


@lru_cache(maxsize=256)
def _deflated_coefficients(beta: float, gamma: int, n_terms: int = 60) -> tuple[float, ...]:
    """Taylor coefficients of ``H_{beta,gamma}(lam) / lam**(gamma+1)``, in powers of ``lam``."""
    a, b = _poly(gamma, beta)
    c = series_coefficients(gamma)
    k = gamma + 1
    h = [c[n] * (-1) ** n for n in range(n_terms + k + len(a))]
    e = []
    for n in range(k, n_terms + k):
        acc = [a[i] * h[n - i] for i in range(len(a)) if n - i >= 0]
        if n < len(b):
            acc.append(b[n])
        e.append(math.fsum(acc))
    return tuple(e)


def origin_coefficient(beta: float, gamma: int) -> float:
    """Leading Taylor coefficient of ``H_{beta,gamma}`` at 0 (coefficient of ``lam**(gamma+1)``)."""
    return _deflated_coefficients(float(beta), gamma)[0]


def eval_G(beta: float, gamma: int, lam) -> complex:
    """``H_{beta,gamma}(lam) / lam**(gamma+1)``, continuous through the origin."""
    _check_gamma(gamma)
    lam = complex(lam)
    if abs(lam) < DEFLATE_RADIUS:
        return _polyval(_deflated_coefficients(float(beta), gamma), lam)
    return eval_Hbg(beta, gamma, lam) / lam ** (gamma + 1)


def _newton_ratio(beta: float, gamma: int, lam: complex, deflate: bool) -> tuple[complex, complex]:
    """(f, f/f') for the function Newton runs on."""
    if deflate and abs(lam) < DEFLATE_RADIUS:
        coeffs = _deflated_coefficients(float(beta), gamma)
        g = _polyval(coeffs, lam)
        gp = _polyval(_polyder(coeffs), lam)
        return g, (g / gp if gp != 0 else complex("inf"))
    hv = eval_Hbg(beta, gamma, lam)
    hp = eval_Hbg_deriv(beta, gamma, lam)
    if hv == 0:
        return hv, 0j
    log_deriv = hp / hv
    if deflate:
        log_deriv -= (gamma + 1) / lam
    return hv, (1.0 / log_deriv if log_deriv != 0 else complex("inf"))


# ---------------------------------------------------------------- Newton

def newton_root(beta: float, gamma: int, lambda0, rtol: float = NEWTON_RTOL,
                max_iter: int = NEWTON_MAXITER, deflate: bool = True) -> RootResult:
    """Newton iteration on the (deflated) eigenvalue function from ``lambda0``.

    Non-convergence is reported through ``converged=False``.
    """
    _check_gamma(gamma)
    lam = complex(lambda0)
    if not cmath.isfinite(lam):
        raise ValueError("starting point must be finite")
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            _, step = _newton_ratio(beta, gamma, lam, deflate)
        except (OverflowError, ZeroDivisionError):
            lam = complex("inf")
            break
        if not cmath.isfinite(step):
            break
        lam = lam - step
        if not cmath.isfinite(lam) or abs(lam) > MAX_MODULUS:
            break
        if abs(step) <= 1e-14 * (1.0 + abs(lam)):
            converged = True
            break
    if cmath.isfinite(lam) and abs(lam) <= MAX_MODULUS:
        # one damped polishing step
        try:
            _, step = _newton_ratio(beta, gamma, lam, deflate)
            if cmath.isfinite(step) and abs(step) < 1e-6 * (1.0 + abs(lam)):
                lam = lam - 0.5 * step
        except (OverflowError, ZeroDivisionError):
            pass
        residual = abs(eval_Hbg(beta, gamma, lam))
        scale = local_scale(beta, gamma, lam)
        rel = residual / scale if scale > 0 else residual
        if deflate and abs(lam) < DEFLATE_RADIUS:
            g = abs(eval_G(beta, gamma, lam))
            rel = g / max(abs(origin_coefficient(beta, gamma)), 1e-300)
        converged = rel < rtol or (converged and rel < 1e3 * rtol)
    else:
        lam = complex(lambda0)
        residual = float("inf")
        converged = False
    return RootResult(ComplexValue.of(lam), float(residual), bool(converged), it)


# ---------------------------------------------------------------- zero counting

def _rect_tuple(rect):
    x0, x1, y0, y1 = (float(v) for v in rect)
    if x1 < x0 or y1 < y0:
        raise ValueError("rectangle bounds must be ordered (re_lo, re_hi, im_lo, im_hi)")
    return x0, x1, y0, y1


def _winding(func, corners, on_zero_tol) -> int:
    total = 0.0
    for za, zb in zip(corners, corners[1:] + corners[:1]):
        fa, fb = func(za), func(zb)
        stack = [(za, zb, fa, fb)]
        edge = abs(zb - za)
        while stack:
            a, b, fa_, fb_ = stack.pop()
            if min(abs(fa_), abs(fb_)) < on_zero_tol(a if abs(fa_) < abs(fb_) else b):
                raise ContourError("zero on the contour")
            d = cmath.phase(fb_ / fa_)
            if abs(d) < math.pi / 2 and abs(b - a) <= edge / 16:
                total += d
                continue
            if abs(b - a) < 1e-12 * (1.0 + abs(a)):
                raise ContourError("argument jump on an unresolvably short segment")
            mid = 0.5 * (a + b)
            fm = func(mid)
            # process the first half first (stack is LIFO)
            stack.append((mid, b, fm, fb_))
            stack.append((a, mid, fa_, fm))
    return int(round(total / (2.0 * math.pi)))


def count_zeros_rect(beta: float, gamma: int, rect, deflate: bool = True, retries: int = 3) -> int:
    """Number of zeros (with multiplicity) inside ``rect = (re_lo, re_hi, im_lo, im_hi)``.

    With ``deflate`` the trivial zero at the origin is excluded.
    """
    _check_gamma(gamma)
    x0, x1, y0, y1 = _rect_tuple(rect)
    if x1 == x0 or y1 == y0:
        return 0
    if deflate:
        def func(z):
            return eval_G(beta, gamma, z)

        def tol(z):
            return 1e-11 * (local_scale(beta, gamma, z) / max(abs(z), 1e-300) ** (gamma + 1)
                            if abs(z) >= DEFLATE_RADIUS else abs(origin_coefficient(beta, gamma)))
    else:
        def func(z):
            return eval_Hbg(beta, gamma, z)

        def tol(z):
            return 1e-11 * max(local_scale(beta, gamma, z), 1e-300)

    pad = 0.0
    for _ in range(retries + 1):
        corners = [complex(x0 - pad, y0 - pad), complex(x1 + pad, y0 - pad),
                   complex(x1 + pad, y1 + pad), complex(x0 - pad, y1 + pad)]
        try:
            return _winding(func, corners, tol)
        except ContourError:
            pad += 1e-6
    raise ContourError(f"zero on the contour of {rect} after {retries} perturbations")


# ---------------------------------------------------------------- scanning

class RootList(list):
    """Roots sorted by (Re, Im); ``flagged_cells`` lists cells whose Newton and winding counts differ."""

    flagged_cells: list


def _newton_grid(beta, gamma, box, nx, ny):
    x0, x1, y0, y1 = box
    xs = np.linspace(x0, x1, nx) if nx > 1 else np.array([0.5 * (x0 + x1)])
    ys = np.linspace(y0, y1, ny) if ny > 1 else np.array([0.5 * (y0 + y1)])
    found = []
    for x in xs:
        for y in ys:
            r = newton_root(beta, gamma, complex(x, y))
            if r.converged:
                found.append(r)
    return found


def _inside(z, box, eps=0.0):
    x0, x1, y0, y1 = box
    return x0 - eps <= z.real <= x1 + eps and y0 - eps <= z.imag <= y1 + eps


def _dedup(roots, tol=1e-6):
    roots = sorted(roots, key=lambda r: (r.lam.re, r.lam.im))
    out = []
    for r in roots:
        if any(abs(r.z - q.z) < tol for q in out):
            continue
        out.append(r)
    return out


def scan_roots(beta: float, gamma: int, box, grid_density: float = 1.5, cells: int = 2,
               check: bool = True) -> RootList:
    """Roots of the deflated function inside ``box = (re_lo, re_hi, im_lo, im_hi)``.

    Newton is started from a grid with ``grid_density`` starts per unit
    length.  With ``check``, the box is split into ``cells x cells`` pieces and
    each piece's root count is compared with the winding number; mismatched
    cells are rescanned three times more densely and flagged if still off.
    """
    _check_gamma(gamma)
    box = _rect_tuple(box)
    x0, x1, y0, y1 = box
    out = RootList()
    out.flagged_cells = []
    if x1 == x0 or y1 == y0:
        return out

    def grid_for(b, density):
        nx = max(2, int(math.ceil((b[1] - b[0]) * density)) + 1)
        ny = max(2, int(math.ceil((b[3] - b[2]) * density)) + 1)
        return nx, ny

    roots = [r for r in _newton_grid(beta, gamma, box, *grid_for(box, grid_density)) if _inside(r.z, box)]
    roots = _dedup(roots)
    if check:
        xs = np.linspace(x0, x1, cells + 1)
        ys = np.linspace(y0, y1, cells + 1)
        for i in range(cells):
            for j in range(cells):
                cell = (xs[i], xs[i + 1], ys[j], ys[j + 1])
                try:
                    expected = count_zeros_rect(beta, gamma, cell)
                except ContourError:
                    out.flagged_cells.append(cell)
                    continue
                have = sum(1 for r in roots if _in_cell(r.z, cell, box))
                if have == expected:
                    continue
                extra = _newton_grid(beta, gamma, cell, *grid_for(cell, 3 * grid_density + 2))
                roots = _dedup(roots + [r for r in extra if _inside(r.z, box)])
                have = sum(1 for r in roots if _in_cell(r.z, cell, box))
                if have != expected:
                    out.flagged_cells.append(cell)
    out.extend(roots)
    return out


def _in_cell(z, cell, box):
    """Half-open cell membership so that every point of the box lies in exactly one cell."""
    x0, x1, y0, y1 = cell
    in_x = x0 <= z.real < x1 or (x1 == box[1] and z.real == x1)
    in_y = y0 <= z.imag < y1 or (y1 == box[3] and z.imag == y1)
    return in_x and in_y


# ---------------------------------------------------------------- Hopf crossing

DEFAULT_SEED_BOX = (-3.0, 1.0, 0.05, 4.0)


def rightmost_root(beta: float, gamma: int, box=DEFAULT_SEED_BOX) -> RootResult:
    roots = scan_roots(beta, gamma, box, check=False)
    if not roots:
        raise SpectralError(f"no roots found in {box} at beta={beta}")
    return max(roots, key=lambda r: r.lam.re)


def find_hopf(gamma: int, beta_lo: float, beta_hi: float, tol_beta: float = 1e-6,
              n_continuation: int = 20, seed_box=DEFAULT_SEED_BOX) -> HopfResult:
    """Locate the value of ``beta`` where the rightmost upper-half-plane root crosses Re = 0."""
    _check_gamma(gamma)
    if not (math.isfinite(beta_lo) and math.isfinite(beta_hi)) or beta_hi <= beta_lo:
        raise BracketError(f"invalid bracket [{beta_lo}, {beta_hi}]")
    start = rightmost_root(beta_lo, gamma, seed_box)
    path = [(beta_lo, start)]
    if start.lam.re >= 0:
        raise BracketError(f"traced root has Re >= 0 at beta_lo={beta_lo}")

    def follow(beta, guess):
        r = newton_root(beta, gamma, guess)
        if not r.converged:
            raise SpectralError(f"continuation lost the root at beta={beta}")
        return r

    lo, hi = beta_lo, None
    r_lo = start
    r_hi = None
    for b in np.linspace(beta_lo, beta_hi, n_continuation + 1)[1:]:
        r = follow(float(b), r_lo.z if r_hi is None else r_hi.z)
        path.append((float(b), r))
        if r.lam.re > 0:
            hi, r_hi = float(b), r
            break
        lo, r_lo = float(b), r
    if hi is None:
        raise BracketError(f"traced root has Re <= 0 at beta_hi={beta_hi}")
    while hi - lo > tol_beta:
        # secant-guarded bisection on Re lambda(beta)
        mid = 0.5 * (lo + hi)
        guess = r_lo.z + (r_hi.z - r_lo.z) * (mid - lo) / (hi - lo)
        r = follow(mid, guess)
        path.append((mid, r))
        if r.lam.re > 0:
            hi, r_hi = mid, r
        else:
            lo, r_lo = mid, r
    w = -r_lo.lam.re / (r_hi.lam.re - r_lo.lam.re) if r_hi.lam.re != r_lo.lam.re else 0.5
    beta_c = lo + w * (hi - lo)
    omega_c = r_lo.lam.im + w * (r_hi.lam.im - r_lo.lam.im)
    return HopfResult(float(beta_c), float(abs(omega_c)), (lo, hi), path)
