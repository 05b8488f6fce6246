"""Closed-form results for two coupled oscillators.

With Z = z1/z2, a = alpha1 - alpha2, gamma = omega1 - omega2 and l = r1^2 - r2^2,

    dZ/dt = (a + i gamma - l) Z + (kappa/2) (1 - Z^2).

Amplitude death is stable exactly when

    f = alpha1 + alpha2 - kappa + sqrt((sqrt(4 a^2 gamma^2 + A^2) + A) / 2),
    A = a^2 - gamma^2 + kappa^2,

is negative: both amplitude eigenvalues of the linearisation at the origin
equal f/2.  Phase-locked active states are found by reducing the fixed-point
equations in (l, R, Phi) to a scalar root problem g(R) = h(R) on a bracket.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrator import Amplitude, Phase, RegimeLabel
from .model import ContractError, DomainError, OscillatorParams

BOUNDARY_RTOL = 1e-9


class ConsistencyError(RuntimeError):
    """A bracket failed a sign condition that the theory guarantees."""


class PoleError(ArithmeticError):
    """The closed-form solution has a pole at the requested time."""


@dataclass(frozen=True)
class Params2:
    """Two-oscillator parameters with alpha1 >= alpha2 and gamma >= 0."""

    alpha1: float
    alpha2: float
    kappa: float
    gamma: float = 0.0

    def __post_init__(self):
        a1, a2 = float(self.alpha1), float(self.alpha2)
        if a1 < a2:
            a1, a2 = a2, a1
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "gamma", abs(float(self.gamma)))
        if not self.kappa > 0:
            raise ContractError("kappa must be positive")
        if not all(map(math.isfinite, (a1, a2, self.kappa, self.gamma))):
            raise ContractError("parameters must be finite")

    @property
    def a(self) -> float:
        return self.alpha1 - self.alpha2

    def to_params(self) -> OscillatorParams:
        return OscillatorParams.pair(self.alpha1, self.alpha2, self.kappa, self.gamma)


def _near(x: float, y: float) -> bool:
    return abs(x - y) <= BOUNDARY_RTOL * max(abs(x), abs(y), 1.0)


# ---------------------------------------------------------------- identical amplitudes


def kappa_star_homog(alpha: float, gamma: float) -> float:
    """Coupling above which identical oscillators stay active when gamma > 2 alpha."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not gamma >= 2 * alpha:
        raise DomainError("curve is defined for gamma >= 2 alpha")
    return (4 * alpha**2 + gamma**2) / (4 * alpha)


def classify_homog(alpha: float, kappa: float, gamma: float) -> RegimeLabel:
    """Regime of two oscillators with identical alpha."""
    gamma = abs(gamma)
    locked = kappa > gamma
    near = [_near(kappa, gamma)]
    if alpha <= 0:
        amp = Amplitude.AMPLITUDE_DEATH
    else:
        near.append(_near(kappa, 2 * alpha) and gamma >= 2 * alpha * (1 - BOUNDARY_RTOL))
        if kappa <= 2 * alpha:
            amp = Amplitude.ACTIVE
        elif gamma <= 2 * alpha:
            amp = Amplitude.ACTIVE
        else:
            ks = kappa_star_homog(alpha, gamma)
            near.append(_near(kappa, ks))
            amp = Amplitude.ACTIVE if kappa > ks else Amplitude.AMPLITUDE_DEATH
    phase = Phase.PHASE_LOCKED if locked else Phase.INCOHERENT
    return RegimeLabel(amp, phase, boundary=any(near))


# ---------------------------------------------------------------- curves


def _sqrt_term(a: float, kappa: float, gamma: float) -> float:
    big_a = a * a - gamma * gamma + kappa * kappa
    return math.sqrt(max(0.0, 0.5 * (math.hypot(2 * a * gamma, big_a) + big_a)))


def f_value(alpha1: float, alpha2: float, kappa: float, gamma: float) -> float:
    a = alpha1 - alpha2
    return alpha1 + alpha2 - kappa + _sqrt_term(a, kappa, gamma)


def f_curve(p: Params2) -> float:
    """Signed distance-like function whose zero set separates active from amplitude death.

    Negative values mean amplitude death is linearly stable.
    """
    return f_value(p.alpha1, p.alpha2, p.kappa, p.gamma)


def gamma_star(p: Params2) -> float:
    """Frequency gap at which the locked state loses existence for kappa < 2 alpha2."""
    a1, a2, k = p.alpha1, p.alpha2, p.kappa
    if not (a1 > a2 > 0):
        raise DomainError("requires alpha1 > alpha2 > 0")
    if not 0 < k < 2 * a2:
        raise DomainError("requires 0 < kappa < 2 alpha2")
    return k * (a1 + a2 - k) / math.sqrt((2 * a1 - k) * (2 * a2 - k))


def gamma_sq_on_f_curve(alpha1: float, alpha2: float, kappa: float) -> float:
    """gamma^2 along f = 0 expressed as a function of kappa."""
    s = alpha1 + alpha2
    num = -2 * (kappa - s) ** 2 * (2 * alpha1 * alpha2 - kappa * s)
    return num / (kappa * kappa - 2 * s * kappa + 4 * alpha1 * alpha2)


def gamma_prime(alpha1: float, alpha2: float) -> tuple:
    """Point of smallest gamma on f = 0 for supercritical-on-average pairs.

    Stationary points of gamma^2(kappa) solve a cubic with no linear term
    after the shift kappa = y + (alpha1 + alpha2); its single real root beyond
    2 alpha1 comes from Cardano's formula.
    """
    if alpha1 < alpha2:
        alpha1, alpha2 = alpha2, alpha1
    s = alpha1 + alpha2
    if not s > 0:
        raise DomainError("requires alpha1 + alpha2 > 0")
    if not alpha1 > alpha2:
        raise DomainError("requires alpha1 > alpha2")
    p = 12 * alpha1 * alpha2 - 3 * s * s
    q = -2 * s**3 + 12 * alpha1 * alpha2 * s - 16 * alpha1**2 * alpha2**2 / s
    disc = q * q / 4 + p**3 / 27
    root = math.sqrt(disc)
    kappa = s + np.cbrt(-q / 2 + root) + np.cbrt(-q / 2 - root)
    return float(kappa), math.sqrt(gamma_sq_on_f_curve(alpha1, alpha2, kappa))


# ---------------------------------------------------------------- Riccati


@dataclass(frozen=True)
class RiccatiPoint:
    y: complex
    stable: bool


def riccati_rhs(y: complex, a: float, kappa: float, gamma: float, l: float = 0.0) -> complex:
    return (a + 1j * gamma - l) * y + 0.5 * kappa * (1 - y * y)


def riccati_fixed_points(p: Params2) -> tuple:
    """Equilibria of the ratio equation at l = 0: (stable, unstable)."""
    b = complex(p.a, p.gamma)
    root = cmath.sqrt(b * b + p.kappa**2)
    plus = (b + root) / p.kappa
    minus = (b - root) / p.kappa
    return RiccatiPoint(plus, root.real > 0), RiccatiPoint(minus, root.real < 0)


def riccati_solution_homog(y0: complex, t: float, kappa: float, gamma: float) -> complex:
    """Exact Y(t) for identical amplitudes on the manifold |z1| = |z2|.

    Solves dY/dt = (kappa/2)(1 + 2 i gamma Y / kappa - Y^2).  For kappa < gamma
    the solution is periodic and no closed form is implemented here, so the
    equation is integrated numerically instead.
    """
    y0 = complex(y0)
    if kappa > gamma:
        s = math.sqrt(kappa * kappa - gamma * gamma)
        y_inf = complex(s / kappa, gamma / kappa)
        yb = y_inf.conjugate()
        if y0 + yb == 0:
            return y0  # the unstable equilibrium -conj(Y_inf)
        # cross-ratio W = (Y - Y_inf)/(Y + conj(Y_inf)) obeys dW/dt = -s W
        w = (y0 - y_inf) / (y0 + yb) * math.exp(-s * t)
        den = 1 - w
        if abs(den) < 1e-14:
            raise PoleError("closed form has a pole at this time")
        return (y_inf + yb * w) / den
    if kappa == gamma:
        d = y0 - 1j
        if d == 0:
            return 1j
        w = kappa * t / 2 + 1 / d
        if abs(w) < 1e-14:
            raise PoleError("closed form has a pole at this time")
        return 1j + 1 / w
    return _riccati_numeric(y0, t, kappa, gamma)


def _riccati_numeric(y0: complex, t: float, kappa: float, gamma: float) -> complex:
    from scipy.integrate import solve_ivp

    def rhs(_, v):
        y = complex(v[0], v[1])
        d = 0.5 * kappa * (1 + 2j * gamma * y / kappa - y * y)
        return [d.real, d.imag]

    sol = solve_ivp(rhs, (0.0, t), [y0.real, y0.imag], method="DOP853", rtol=1e-12, atol=1e-14)
    return complex(sol.y[0, -1], sol.y[1, -1])


# ---------------------------------------------------------------- locked state


@dataclass(frozen=True)
class LockedState2:
    l_inf: float
    R_inf: float
    Phi_inf: float
    r1_inf: float
    r2_inf: float
    char_coeffs: tuple
    stable: bool
    eigenvalues: tuple = ()
    residuals: tuple = ()


def _g(x, kappa, gamma):
    s = 2 * gamma / (kappa * (x + 1 / x))
    return math.sqrt(max(0.0, 1 - s * s))


def _h(x, p: Params2):
    k = p.kappa
    return (x**3 * (k - 2 * p.alpha2) + x * (2 * p.alpha1 - k)) / (k * (x**4 - 1))


def locked_brackets(p: Params2) -> tuple:
    """Open interval (x-, x+) that contains the amplitude ratio of the locked state."""
    k, g = p.kappa, p.gamma
    lo = g / k + math.sqrt(g * g - k * k) / k if k < g else 1.0
    if k > 2 * p.alpha1:
        hi = math.sqrt((k - 2 * p.alpha2) / (k - 2 * p.alpha1))
    elif k >= 2 * p.alpha2:
        hi = math.inf
    else:
        hi = math.sqrt((2 * p.alpha1 - k) / (2 * p.alpha2 - k))
    return lo, hi


def locked_exists(p: Params2) -> bool:
    if not p.a > 0:
        raise ContractError("requires alpha1 > alpha2")
    if f_curve(p) <= 0:
        return False
    if p.alpha2 > 0 and p.kappa < 2 * p.alpha2 and p.gamma > gamma_star(p):
        return False
    return True


def reduced_field(l: float, R: float, Phi: float, p: Params2) -> np.ndarray:
    """Time derivatives of (l, R, Phi) with r1, r2 recovered from (l, R)."""
    r2s = l / (R * R - 1)
    r1s = R * R * r2s
    dl = 2 * (p.alpha1 * r1s - p.alpha2 * r2s) - l * (p.kappa + 2 * (r1s + r2s))
    dR = (p.a - l) * R + 0.5 * p.kappa * math.cos(Phi) * (1 - R * R)
    dP = p.gamma - 0.5 * p.kappa * (R + 1 / R) * math.sin(Phi)
    return np.array([dl, dR, dP])


def locked_state_het(p: Params2) -> Optional[LockedState2]:
    """Active phase-locked equilibrium for alpha1 > alpha2, or None when it does not exist."""
    if not locked_exists(p):
        return None
    k, gam = p.kappa, p.gamma
    lo, hi = locked_brackets(p)

    def diff(x):
        return _g(x, k, gam) - _h(x, p)

    if math.isinf(hi):
        hi = max(2.0, 2 * lo)
        while diff(hi) <= 0:
            if _h(hi, p) < 1e-12 and hi > 1e12:
                raise ConsistencyError("no sign change found on the unbounded bracket")
            hi *= 2
    if hi <= lo * (1 + 1e-12):
        # on the incoherence boundary the bracket closes onto the root
        hi = lo = 0.5 * (lo + hi)
    a, b = lo, hi
    # the left end has g - h < 0 and the right end g - h > 0
    for _ in range(400):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if diff(m) < 0:
            a = m
        else:
            b = m
    R = 0.5 * (a + b)
    if abs(diff(R)) > 1e-6 * max(1.0, abs(_h(R, p))):
        raise ConsistencyError("bracket endpoints do not straddle a root of g - h")
    l = ((2 * p.alpha1 - k) * R * R + (k - 2 * p.alpha2)) / (2 * (R * R + 1))
    sin_phi = 2 * gam / (k * (R + 1 / R))
    Phi = math.atan2(sin_phi, _g(R, k, gam))
    l, R, Phi = _polish(l, R, Phi, p)
    r2s = l / (R * R - 1)
    r1s = R * R * r2s
    res = tuple(abs(v) for v in reduced_field(l, R, Phi, p))
    base = LockedState2(l, R, Phi, math.sqrt(r1s), math.sqrt(r2s), (), False, (), res)
    stable, coeffs, eig = jacobian3_stability(base, p)
    return LockedState2(l, R, Phi, math.sqrt(r1s), math.sqrt(r2s), coeffs, stable, tuple(eig), res)


def _polish(l, R, Phi, p: Params2, steps: int = 3):
    """A few Newton steps on the (l, R, Phi) equations to remove bisection round-off."""
    best = (l, R, Phi)
    best_res = np.max(np.abs(reduced_field(l, R, Phi, p)))
    for _ in range(steps):
        if best_res == 0:
            break
        jac = jacobian3(LockedState2(*best, 0.0, 0.0, (), False), p)
        try:
            step = np.linalg.solve(jac, -reduced_field(*best, p))
        except np.linalg.LinAlgError:
            break
        cand = tuple(np.add(best, step))
        if not (cand[1] > 1 and cand[0] > 0):
            break
        res = np.max(np.abs(reduced_field(*cand, p)))
        if not res < best_res:
            break
        best, best_res = cand, res
    return tuple(float(v) for v in best)


def jacobian3(ls: LockedState2, p: Params2) -> np.ndarray:
    """Linearisation of the (l, R, Phi) system at a locked state."""
    l, R, Phi, k = ls.l_inf, ls.R_inf, ls.Phi_inf, p.kappa
    c, s = math.cos(Phi), math.sin(Phi)
    q = R * R - 1
    d11 = -2 * l * (R * R + 1) / q
    d12 = 2 * l * R * (2 * p.alpha1 - 2 * l - k) / q
    d21 = -R
    d22 = -0.5 * k * (R + 1 / R) * c
    d23 = -0.5 * k * s * (1 - R * R)
    d32 = -0.5 * k * s * (1 - 1 / (R * R))
    d33 = -0.5 * k * (R + 1 / R) * c
    return np.array([[d11, d12, 0.0], [d21, d22, d23], [0.0, d32, d33]])


def char_poly3(m: np.ndarray) -> tuple:
    """Coefficients (c3, c2, c1, c0) of det(M - lambda I) = c3 l^3 + c2 l^2 + c1 l + c0."""
    tr = float(np.trace(m))
    tr2 = float(np.trace(m @ m))
    return (-1.0, tr, -0.5 * (tr * tr - tr2), float(np.linalg.det(m)))


def routh_hurwitz3(coeffs) -> bool:
    """All roots of a real cubic in the open left half-plane."""
    c3, c2, c1, c0 = coeffs
    if c3 == 0:
        raise DomainError("leading coefficient vanishes")
    if c3 < 0:
        c3, c2, c1, c0 = -c3, -c2, -c1, -c0
    return c2 > 0 and c1 > 0 and c0 > 0 and c2 * c1 > c3 * c0


def jacobian3_stability(ls: LockedState2, p: Params2):
    """Routh-Hurwitz verdict, characteristic coefficients and eigenvalues of the 3x3 linearisation."""
    m = jacobian3(ls, p)
    coeffs = char_poly3(m)
    stable = routh_hurwitz3(coeffs)
    eig = np.linalg.eigvals(m)
    return stable, coeffs, eig


def ad_jacobian(p: Params2) -> np.ndarray:
    """Block-diagonal 4x4 linearisation in (r1, r2, Re Z, Im Z) at the origin with Z at the stable ratio."""
    y = riccati_fixed_points(p)[0].y
    k = p.kappa
    j = np.zeros((4, 4))
    j[0, 0] = p.alpha1 + 0.5 * k * ((1 / y).real - 1)
    j[1, 1] = p.alpha2 + 0.5 * k * (y.real - 1)
    d = p.a - k * y.real
    o = -p.gamma + k * y.imag
    j[2:, 2:] = [[d, o], [-o, d]]
    return j


def ad_stability(p: Params2) -> bool:
    """True iff amplitude death is linearly stable; the 4x4 eigenvalues must agree with the sign of f."""
    if not p.a > 0:
        raise ContractError("requires alpha1 > alpha2")
    fv = f_curve(p)
    eig = np.linalg.eigvals(ad_jacobian(p))
    stable_eig = bool(np.max(eig.real) < 0)
    if abs(fv) > 1e-9 and stable_eig != (fv < 0):
        raise ConsistencyError("4x4 spectrum disagrees with the sign of f")
    return fv < 0


# ---------------------------------------------------------------- classification


def leader_zone(p: Params2) -> bool:
    if p.alpha2 > 0:
        return 2 * p.alpha2 <= p.kappa <= 2 * p.alpha1
    return p.kappa < 2 * p.alpha1


def classify_het(p: Params2) -> RegimeLabel:
    """Analytic regime for any pair; identical amplitudes defer to classify_homog."""
    if p.a == 0:
        return classify_homog(p.alpha1, p.kappa, p.gamma)
    fv = f_curve(p)
    scale = max(abs(p.alpha1) + abs(p.alpha2) + p.kappa, 1.0)
    boundary = abs(fv) <= BOUNDARY_RTOL * scale
    if fv < 0:
        return RegimeLabel(Amplitude.AMPLITUDE_DEATH, Phase.PHASE_LOCKED, boundary=boundary)
    if p.alpha2 > 0 and p.kappa < 2 * p.alpha2:
        gs = gamma_star(p)
        boundary = boundary or _near(p.gamma, gs)
        if p.gamma > gs:
            return RegimeLabel(Amplitude.ACTIVE, Phase.INCOHERENT, boundary=boundary)
    return RegimeLabel(Amplitude.ACTIVE, Phase.PHASE_LOCKED, leader_driven=leader_zone(p), boundary=boundary)


def classify_pair(alpha1: float, alpha2: float, kappa: float, gamma: float) -> RegimeLabel:
    return classify_het(Params2(alpha1, alpha2, kappa, gamma))


# ---------------------------------------------------------------- curve tabulation


def f_zero_kappa(alpha1: float, alpha2: float, gamma: float, kappa_max: float = 1e6) -> list:
    """All kappa in (0, kappa_max] with f = 0 at this gamma, located to 1e-10."""
    from scipy.optimize import brentq

    def fk(k):
        return f_value(alpha1, alpha2, k, gamma)

    top = min(kappa_max, 10 * max(abs(alpha1), abs(alpha2), gamma, 1.0))
    grid = np.unique(np.concatenate([np.linspace(1e-9, top, 4001), np.geomspace(1e-9, top, 2001)]))
    vals = np.array([fk(k) for k in grid])
    out = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        out.append(brentq(fk, grid[i], grid[i + 1], xtol=1e-12, rtol=1e-14))
    out += [float(k) for k, v in zip(grid, vals) if v == 0.0]
    return sorted(out)


def f_zero_gamma(alpha1: float, alpha2: float, kappa: float, gamma_max: float) -> list:
    from scipy.optimize import brentq

    def fg(g):
        return f_value(alpha1, alpha2, kappa, g)

    grid = np.linspace(0.0, gamma_max, 4001)
    vals = np.array([fg(g) for g in grid])
    out = []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        out.append(brentq(fg, grid[i], grid[i + 1], xtol=1e-12, rtol=1e-14))
    return sorted(out)
