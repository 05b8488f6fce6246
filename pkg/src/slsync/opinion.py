"""Real-line reduction: dx_j/dt = (alpha_j - x_j^2) x_j + (kappa/N) sum_l (x_l - x_j).

Fixed points are enumerated by Newton from a seed grid and labelled by the
eigenvalues of the (symmetric) Jacobian.  Branches are followed in kappa by
pseudo-arclength continuation; folds are turning points in kappa and branch
points are sign changes of the Jacobian determinant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .model import ContractError


class Kind(str, Enum):
    STABLE = "Stable"
    SADDLE = "Saddle"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


class Outcome(str, Enum):
    DISAGREEMENT = "Disagreement"
    COMPROMISE = "Compromise"
    CONSENSUS = "Consensus"
    BALANCED_CONSENSUS = "BalancedConsensus"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class OpinionFixedPoint:
    x: tuple
    kind: Kind
    taxonomy: Outcome
    eigenvalues: tuple = ()
    residual: float = 0.0


def opinion_rhs(x, alphas, kappa):
    x = np.asarray(x, float)
    return (np.asarray(alphas) - x * x) * x + kappa * (np.mean(x, axis=-1, keepdims=True) - x)


def opinion_jacobian(x, alphas, kappa) -> np.ndarray:
    """diag(alpha - 3 x^2) - (kappa/N)(N I - 1 1^T); works on stacked points."""
    x = np.asarray(x, float)
    n = x.shape[-1]
    d = np.asarray(alphas) - 3 * x * x - kappa
    jac = np.zeros(x.shape + (n,)) + kappa / n
    idx = np.arange(n)
    jac[..., idx, idx] += d
    return jac


def potential(x, alphas, kappa) -> float:
    from .ensemble import potential as _p

    return _p(x, alphas, kappa)


def classify_kind(eig, tol: float = 1e-8) -> Kind:
    eig = np.asarray(eig)
    if np.any(np.abs(eig) <= tol):
        return Kind.MARGINAL
    if np.all(eig < 0):
        return Kind.STABLE
    if np.all(eig > 0):
        return Kind.UNSTABLE
    return Kind.SADDLE


def classify_outcome(x, tol: float = 1e-9) -> Outcome:
    x = np.asarray(x, float)
    if np.all(np.abs(x) <= tol):
        return Outcome.BALANCED_CONSENSUS
    if np.max(x) - np.min(x) <= tol:
        return Outcome.CONSENSUS
    pos, neg = x > tol, x < -tol
    if pos.any() and neg.any():
        return Outcome.DISAGREEMENT
    if pos.all() or neg.all():
        return Outcome.COMPROMISE
    return Outcome.UNCLASSIFIED


def _fixed_point(x, alphas, kappa) -> OpinionFixedPoint:
    eig = np.linalg.eigvalsh(opinion_jacobian(x, alphas, kappa))
    res = float(np.max(np.abs(opinion_rhs(x, alphas, kappa))))
    return OpinionFixedPoint(tuple(float(v) for v in x), classify_kind(eig), classify_outcome(x), tuple(eig), res)


def enumerate_fixed_points(alphas, kappa: float, search_radius: Optional[float] = None,
                           grid_per_dim: int = 7, dedup: float = 1e-6) -> list:
    """Every fixed point reached by Newton from a uniform seed grid, sorted lexicographically."""
    al = np.asarray(alphas, float)
    n = al.size
    if n > 6:
        raise ContractError("exhaustive enumeration is limited to six agents")
    min_radius = 2 * max(math.sqrt(np.max(np.abs(al))), 1.0)
    if search_radius is None:
        search_radius = min_radius
    if search_radius < min_radius * (1 - 1e-12):
        raise ContractError(f"search radius must be at least {min_radius:.6g}")
    axis = np.linspace(-search_radius, search_radius, grid_per_dim)
    x = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    alive = np.ones(len(x), bool)
    for _ in range(100):
        f = opinion_rhs(x, al, kappa)
        jac = opinion_jacobian(x, al, kappa)
        ok = alive & (np.abs(np.linalg.det(jac)) > 1e-300)
        step = np.zeros_like(x)
        if ok.any():
            step[ok] = np.linalg.solve(jac[ok], -f[ok][..., None])[..., 0]
        x = np.where(ok[:, None], x + step, x)
        alive = ok & np.all(np.isfinite(x), axis=1) & (np.max(np.abs(x), axis=1) < 1e6)
        if np.all(np.max(np.abs(step[alive]), axis=1, initial=0.0) < 1e-15) if alive.any() else True:
            break
    res = np.max(np.abs(opinion_rhs(np.where(alive[:, None], x, 0.0), al, kappa)), axis=1)
    good = alive & (res < 1e-10)
    roots: list = []
    for p in x[good]:
        if not any(np.max(np.abs(p - q)) < dedup for q in roots):
            roots.append(p.copy())
    roots.sort(key=lambda v: tuple(v))
    return [_fixed_point(r, al, kappa) for r in roots]


def bifurcations_n2_homog(alpha: float) -> tuple:
    """Coupling values of the two bifurcations for two agents with identical alpha > 0."""
    if not alpha > 0:
        raise ContractError("alpha must be positive")
    return 2 * alpha / 3, alpha


def merged_point(alpha: float) -> np.ndarray:
    """Where the saddles meet the disagreement node at the first bifurcation."""
    s = math.sqrt(alpha / 3)
    return np.array([-s, s])


def on_ellipse(x, alpha: float) -> float:
    """Residual of x1^2 - x1 x2 + x2^2 = alpha, the curve the saddle points travel along."""
    x1, x2 = x
    return x1 * x1 - x1 * x2 + x2 * x2 - alpha


def weighted_sum(alphas, kappa: float) -> float:
    al = np.asarray(alphas, float)
    return float(np.sum(al / (kappa - al)))


def kappa_star_bounds(alphas) -> tuple:
    """(upper bound max alpha for the last disagreement-removing bifurcation, pitchfork coupling or None)."""
    from scipy.optimize import brentq

    al = np.asarray(alphas, float)
    bound = max(float(al.max()), 0.0)
    if not al.sum() < 0:
        return bound, None
    lo = bound + 1e-12 * max(1.0, bound) + 1e-12
    if not weighted_sum(al, lo) > 0:
        return bound, None
    hi = max(2 * lo, 1.0)
    while weighted_sum(al, hi) > 0:
        hi *= 2
    return bound, float(brentq(lambda k: weighted_sum(al, k), lo, hi, xtol=1e-14, rtol=1e-15))


# ---------------------------------------------------------------- continuation


@dataclass
class BifurcationReport:
    kappa_values: list
    kinds: list
    branch: list = field(default_factory=list)  # (kappa, x tuple, Kind)
    partial: bool = False
    message: str = ""
    event_points: list = field(default_factory=list)


def _dfdk(x):
    return np.mean(x) - x


def _tangent(y, alphas, prev=None):
    x, k = y[:-1], y[-1]
    a = np.column_stack([opinion_jacobian(x, alphas, k), _dfdk(x)])
    t = np.linalg.svd(a)[2][-1]
    if prev is not None and np.dot(t, prev) < 0:
        t = -t
    return t / np.linalg.norm(t)


def _correct(y_pred, t, alphas, tol=1e-12, max_iter=12):
    y = y_pred.copy()
    n = y.size - 1
    for _ in range(max_iter):
        x, k = y[:-1], y[-1]
        f = np.concatenate([opinion_rhs(x, alphas, k), [np.dot(t, y - y_pred)]])
        if np.max(np.abs(f)) < tol:
            return y
        m = np.zeros((n + 1, n + 1))
        m[:n, :n] = opinion_jacobian(x, alphas, k)
        m[:n, n] = _dfdk(x)
        m[n] = t
        try:
            y = y - np.linalg.solve(m, f)
        except np.linalg.LinAlgError:
            return None
    x, k = y[:-1], y[-1]
    if np.max(np.abs(opinion_rhs(x, alphas, k))) < 1e-10:
        return y
    return None


def _det(y, alphas):
    return float(np.linalg.det(opinion_jacobian(y[:-1], alphas, y[-1])))


def _refine(y0, t0, ds, alphas, test, tol=1e-9):
    """Bisect on arclength from y0 for a sign change of ``test``; returns the point of the event."""
    lo, hi = 0.0, ds
    s_lo = np.sign(test(y0, t0))
    best = y0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        y = _correct(y0 + mid * t0, t0, alphas)
        if y is None:
            break
        tm = _tangent(y, alphas, t0)
        if np.sign(test(y, tm)) == s_lo:
            lo = mid
        else:
            hi = mid
        best = y
    return best


def continue_branch(alphas, x_start, kappa_range, step: float = 1e-2, max_steps: int = 20000,
                    min_step: float = 1e-8) -> BifurcationReport:
    """Follow the fixed-point branch through x_start from kappa_range[0] towards kappa_range[1]."""
    al = np.asarray(alphas, float)
    k0, k1 = map(float, kappa_range)
    kmin, kmax = min(k0, k1), max(k0, k1)
    if np.max(np.abs(opinion_rhs(np.asarray(x_start, float), al, k0))) > 1e-6:
        raise ContractError("x_start is not a fixed point at the start of the range")
    y = np.concatenate([np.asarray(x_start, float), [k0]])
    y0 = _correct(y, np.eye(y.size)[-1], al)
    if y0 is None:
        raise ContractError("x_start is not a fixed point at the start of the range")
    y = y0
    t = _tangent(y, al)
    if np.sign(t[-1]) != np.sign(k1 - k0) and t[-1] != 0:
        t = -t
    events: list = []
    branch = [(float(y[-1]), tuple(y[:-1]), _fixed_point(y[:-1], al, y[-1]).kind)]
    ds = step
    partial, msg = False, ""
    retries = 0
    for _ in range(max_steps):
        y_new = _correct(y + ds * t, t, al)
        if y_new is None or np.linalg.norm(y_new - y) > 3 * ds:
            if ds <= min_step:
                retries += 1
                if retries >= 10:
                    partial, msg = True, f"step failure near kappa={y[-1]:.6g}"
                    break
                continue
            ds = max(ds / 2, min_step)
            continue
        retries = 0
        t_new = _tangent(y_new, al, t)
        d_old, d_new = _det(y, al), _det(y_new, al)
        if np.sign(t[-1]) * np.sign(t_new[-1]) < 0:
            ye = _refine(y, t, ds, al, lambda yy, tt: tt[-1])
            events.append((float(ye[-1]), "fold", tuple(ye[:-1])))
        if d_old != 0 and np.sign(d_old) * np.sign(d_new) < 0:
            ye = _refine(y, t, ds, al, lambda yy, tt: _det(yy, al))
            on_zero = np.max(np.abs(ye[:-1])) < 1e-8
            events.append((float(ye[-1]), "pitchfork" if on_zero else "branch_point", tuple(ye[:-1])))
        y, t = y_new, t_new
        branch.append((float(y[-1]), tuple(y[:-1]), _fixed_point(y[:-1], al, y[-1]).kind))
        ds = min(step, ds * 1.5)
        if not (kmin - 1e-12 <= y[-1] <= kmax + 1e-12):
            break
    else:
        partial, msg = True, "step budget exhausted"
    events.sort(key=lambda e: e[0])
    # a crossing that lands on a step boundary is seen from both sides
    merged: list = []
    for e in events:
        if merged and merged[-1][1] == e[1] and abs(merged[-1][0] - e[0]) < 1e-6:
            continue
        merged.append(e)
    events = merged
    return BifurcationReport([e[0] for e in events], [e[1] for e in events], branch, partial, msg,
                             [e[2] for e in events])


def real_line_trajectory(alphas, kappa: float, x0, t_end: float = 20.0, sample_dt: float = 0.05):
    """Integrate the real-line system with the complex integrator and return (times, x)."""
    from .integrator import IntegrateOptions, integrate
    from .model import EnsembleState, OscillatorParams

    al = tuple(float(a) for a in alphas)
    traj = integrate(OscillatorParams(kappa, al, (0.0,) * len(al)), EnsembleState(np.asarray(x0, float)),
                     IntegrateOptions(t_end=t_end, sample_dt=sample_dt))
    return traj.times, traj.z
