"""Many oscillators with identical frequencies.

With omega = 0 and synchronised phases the amplitudes follow the gradient flow
dr/dt = -grad P(r) with

    P(r) = (kappa/4N) sum_ij (r_i - r_j)^2 + 1/4 sum r_i^4 - 1/2 sum alpha_i r_i^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .integrator import IntegrateOptions, run_batch
from .model import ContractError, DomainError, Trajectory, sector_functional


class NoConvergence(RuntimeError):
    pass


@dataclass(frozen=True)
class AdVerdict:
    cond_sum_neg: bool
    cond_kappa_dominates: bool
    cond_weighted_neg: bool
    ad_stable: bool
    weighted_sum: Optional[float] = None
    boundary: bool = False


def ad_conditions(alphas, kappa: float) -> AdVerdict:
    """Linear stability of the origin: sum alpha < 0, kappa > every alpha, sum alpha/(kappa - alpha) < 0."""
    al = np.asarray(alphas, float)
    if not kappa > 0:
        raise ContractError("kappa must be positive")
    c1 = bool(al.sum() < 0)
    c2 = bool(np.all(kappa > al))
    ws = float(np.sum(al / (kappa - al))) if c2 else None
    c3 = bool(c2 and ws < 0)
    boundary = bool(abs(al.sum()) < 1e-12 or np.any(np.abs(kappa - al) < 1e-12) or (ws is not None and abs(ws) < 1e-12))
    return AdVerdict(c1, c2, c3, c1 and c2 and c3, ws, boundary)


def fixed_point_map(r, alphas, kappa):
    """F(r) = kappa r - (kappa/N) sum r + (r^2 - alpha) r; zeros are amplitude equilibria."""
    r = np.asarray(r, float)
    al = np.asarray(alphas, float)
    n = r.shape[-1]
    return kappa * r - kappa / n * np.sum(r, axis=-1, keepdims=True) + (r * r - al) * r


def fixed_point_jacobian(r, alphas, kappa) -> np.ndarray:
    r = np.asarray(r, float)
    n = r.size
    return np.diag(kappa + 3 * r * r - np.asarray(alphas, float)) - kappa / n * np.ones((n, n))


def ensemble_jacobian_det(r, alphas, kappa: float) -> float:
    """det(G - (kappa/N) 1 1^T) with G = diag(kappa + 3 r^2 - alpha), via the rank-one update formula."""
    r = np.asarray(r, float)
    al = np.asarray(alphas, float)
    if r.shape != al.shape:
        raise ContractError("dimensions differ")
    g = kappa + 3 * r * r - al
    if np.any(g == 0):
        return float(np.linalg.det(fixed_point_jacobian(r, al, kappa)))
    return float(np.prod(g) * (1 - kappa / r.size * np.sum(1 / g)))


def potential(r, alphas, kappa: float) -> float:
    r = np.asarray(r, float)
    al = np.asarray(alphas, float)
    n = r.size
    pair = np.sum((r[:, None] - r[None, :]) ** 2)
    return float(kappa / (4 * n) * pair + 0.25 * np.sum(r**4) - 0.5 * np.sum(al * r * r))


def gradient(r, alphas, kappa: float) -> np.ndarray:
    return fixed_point_map(r, alphas, kappa)


def amplitude_rhs(r, alphas, kappa: float) -> np.ndarray:
    """dr/dt for phase-synchronised amplitudes."""
    return -fixed_point_map(r, alphas, kappa)


@dataclass(frozen=True)
class ActiveFixedPoint:
    r_inf: tuple
    residual_norm: float
    stable: bool
    eigenvalues: tuple = ()


def _newton(r0, alphas, kappa, max_iter=100, tol=1e-13):
    r = np.array(r0, float)
    res = np.max(np.abs(fixed_point_map(r, alphas, kappa)))
    for _ in range(max_iter):
        if res < tol:
            break
        jac = fixed_point_jacobian(r, alphas, kappa)
        try:
            step = np.linalg.solve(jac, -fixed_point_map(r, alphas, kappa))
        except np.linalg.LinAlgError:
            return r, res, False
        lam = 1.0
        for _ in range(41):
            cand = np.maximum(r + lam * step, 1e-12)
            cres = np.max(np.abs(fixed_point_map(cand, alphas, kappa)))
            if cres < res:
                break
            lam *= 0.5
        else:
            return r, res, False
        r, res = cand, cres
    return r, res, res < 1e-10


def _relax(r0, alphas, kappa, chunk=200.0, rounds=10):
    """Integrate the amplitude flow until it is stationary."""
    al = np.asarray(alphas, float)
    u = np.asarray(r0, float).astype(complex)[None, :]
    zeros = np.zeros_like(al)[None, :]
    t0 = 0.0
    logs = np.zeros(1)
    for _ in range(rounds):
        opts = IntegrateOptions(t_end=t0 + chunk, sample_dt=chunk)
        res = run_batch(al[None, :], zeros, np.array([kappa]), u, opts, t0=t0, log_scale0=logs)
        u, logs, t0 = res.final_u, res.final_log, t0 + chunk
        r = np.abs(u[0]) * math.exp(logs[0])
        if np.max(np.abs(fixed_point_map(r, al, kappa))) < 1e-8:
            return r
    return np.abs(u[0]) * math.exp(logs[0])


def active_fixed_point(alphas, kappa: float) -> Optional[ActiveFixedPoint]:
    """Stable positive equilibrium of the amplitude flow, or None when amplitude death is stable."""
    al = np.asarray(alphas, float)
    if not kappa > 0:
        raise ContractError("kappa must be positive")
    verdict = ad_conditions(al, kappa)
    if verdict.ad_stable:
        return None
    eps0 = 0.05 * max(math.sqrt(max(al.max(), 0.0)), 1.0)
    r0 = np.sqrt(np.maximum(al, eps0))
    r, res, ok = _newton(r0, al, kappa)
    if not ok or np.min(r) < 1e-8:
        r = _relax(r0, al, kappa)
        r, res, ok = _newton(r, al, kappa)
    if not ok or np.min(r) < 1e-8:
        raise NoConvergence(f"no positive equilibrium found (residual {res:.3g}, min r {np.min(r):.3g})")
    eig = np.linalg.eigvalsh(-fixed_point_jacobian(r, al, kappa))
    return ActiveFixedPoint(tuple(float(v) for v in r), float(res), bool(np.max(eig) < 0), tuple(eig))


def multistart_fixed_points(alphas, kappa: float, starts: int = 100, seed: int = 0, scale: float = 2.0):
    """Positive equilibria reached by Newton from seeded random positive points, deduplicated at 1e-8."""
    al = np.asarray(alphas, float)
    roots: list = []
    for i in range(starts):
        rng = np.random.default_rng([seed, i])
        r0 = rng.uniform(0.01, scale * max(math.sqrt(max(al.max(), 0.0)), 1.0), al.size)
        r, _, ok = _newton(r0, al, kappa)
        if ok and np.min(r) > 1e-8 and not any(np.max(np.abs(r - q)) < 1e-8 for q in roots):
            roots.append(r)
    return sorted((tuple(float(v) for v in q) for q in roots))


def _series_1mcos(traj: Trajectory) -> np.ndarray:
    n = traj.params.n
    out = np.zeros(len(traj))
    for j in range(n):
        for k in range(j + 1, n):
            d = traj.phase_diff(j, k)
            out = np.maximum(out, 2 * np.sin(d / 2) ** 2)
    return out


@dataclass(frozen=True)
class SyncDiagnostic:
    series: np.ndarray
    rate: float
    window: tuple
    shortened: bool


def sync_diagnostic(traj: Trajectory, floor: float = 1e-28, window_frac=(0.2, 0.6)) -> SyncDiagnostic:
    """max_jk (1 - cos Phi_jk) over time and its exponential rate on the mid-window."""
    if np.any(np.asarray(traj.params.omega) != 0):
        raise ContractError("requires identical zero frequencies")
    if sector_functional(traj.state(0)) is None:
        raise ContractError("initial data are not strictly sectorial")
    from .integrator import fit_decay_rate

    s = _series_1mcos(traj)
    t = traj.times
    t_end = t[-1]
    lo, hi = window_frac[0] * t_end, window_frac[1] * t_end
    shortened = False
    below = np.flatnonzero((s <= floor) & (t >= lo))
    if below.size:
        cut = t[below[0]]
        if cut < hi:
            hi, shortened = cut, True
    m = (t >= lo) & (t < hi) & (s > floor)
    if m.sum() < 2:
        # series already at the floor: fit from the start instead
        m = (t < hi) & (s > floor)
        shortened = True
    if m.sum() < 2:
        return SyncDiagnostic(s, -math.inf, (lo, hi), True)
    return SyncDiagnostic(s, fit_decay_rate(s[m], t[m]), (float(t[m][0]), float(t[m][-1])), shortened)


def ratio_bounds_check(traj: Trajectory) -> tuple:
    """Smallest and largest amplitude ratio seen anywhere along the trajectory."""
    mag = np.abs(traj.u)
    zero = np.flatnonzero(np.any(mag == 0, axis=1))
    if zero.size:
        raise DomainError(f"amplitude ratio undefined at t={traj.times[zero[0]]:.6g}")
    lo = float(np.min(mag.min(axis=1) / mag.max(axis=1)))
    return lo, 1.0 / lo


def fixed_point_report(alphas, kappa: float) -> dict:
    """JSON-ready summary: verdict, equilibrium, residual and stability."""
    v = ad_conditions(alphas, kappa)
    fp = None if v.ad_stable else active_fixed_point(alphas, kappa)
    return {
        "alphas": [float(a) for a in alphas],
        "kappa": float(kappa),
        "verdict": {
            "cond_sum_neg": v.cond_sum_neg,
            "cond_kappa_dominates": v.cond_kappa_dominates,
            "cond_weighted_neg": v.cond_weighted_neg,
            "ad_stable": v.ad_stable,
            "weighted_sum": v.weighted_sum,
        },
        "r_inf": [0.0] * len(alphas) if fp is None else list(fp.r_inf),
        "residual": 0.0 if fp is None else fp.residual_norm,
        "stable": True if fp is None else fp.stable,
    }
