"""Adaptive Dormand-Prince 5(4) integration and regime detection.

The integrator works on a batch of independent systems at once; each batch
member keeps its own step size, acceptance test and sample clock, so a batch
of one is an ordinary adaptive solve.  States are integrated in Cartesian
form.  When every amplitude of a member drops below ``2**-10`` its state is
multiplied by the power of two that brings the largest modulus back into
[0.5, 1) (exact in binary), the log-scale absorbs the factor and the cubic
term is rescaled to compensate.  The dynamics are unchanged, but the error
tolerances act on the mantissa, so phases and amplitude ratios keep full
relative accuracy through amplitude death.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .model import (
    ContractError,
    DomainError,
    EnsembleState,
    OscillatorParams,
    Trajectory,
    vector_field,
    wrap_phase,
)

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

# mantissas whose largest modulus falls below this are renormalised by an exact
# power of two, so the tolerances stay relative while amplitudes die out
_RESCALE_BELOW = 2.0 ** -10
_LN2 = math.log(2.0)


class IntegrationError(RuntimeError):
    """Step size underflow; ``partial`` holds the samples produced so far."""

    def __init__(self, message: str, partial: Optional[Trajectory] = None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class IntegrateOptions:
    t_end: float = 200.0
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf
    sample_dt: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.t_end > 0:
            raise ContractError("t_end must be positive")
        for name in ("rtol", "atol"):
            v = getattr(self, name)
            if not 0 < v <= 1e-2:
                raise ContractError(f"{name} must lie in (0, 1e-2]")
        if not self.sample_dt > 0 or not self.max_step > 0:
            raise ContractError("sample_dt and max_step must be positive")


class Amplitude(str, Enum):
    ACTIVE = "Active"
    AMPLITUDE_DEATH = "AmplitudeDeath"
    UNDETERMINED = "Undetermined"


class Phase(str, Enum):
    PHASE_LOCKED = "PhaseLocked"
    INCOHERENT = "Incoherent"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class RegimeLabel:
    amplitude: Amplitude
    phase: Phase
    leader_driven: bool = False
    boundary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "amplitude", Amplitude(self.amplitude))
        object.__setattr__(self, "phase", Phase(self.phase))
        if self.leader_driven and not (
            self.amplitude is Amplitude.ACTIVE and self.phase is Phase.PHASE_LOCKED
        ):
            raise ContractError("leader-driven label requires Active + PhaseLocked")

    @property
    def key(self) -> tuple:
        return (self.amplitude.value, self.phase.value)

    def __str__(self):
        s = f"{self.amplitude.value}+{self.phase.value}"
        if self.leader_driven:
            s += " (leader-driven)"
        return s


# ---------------------------------------------------------------- batch core


@dataclass
class _BatchResult:
    times: list
    u: list
    log_scale: list
    phase: list
    failed: np.ndarray
    messages: list
    final_t: np.ndarray
    final_u: np.ndarray
    final_log: np.ndarray
    final_phase: np.ndarray


def _sample_grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    k = max(1, int(math.ceil((t_end - t0) / dt - 1e-9)))
    return np.linspace(t0, t_end, k + 1)


def run_batch(
    alpha,
    omega,
    kappa,
    u0,
    opts: IntegrateOptions,
    t0: float = 0.0,
    log_scale0=None,
    phase0=None,
    record_from: Optional[float] = None,
    coarse_dt: Optional[float] = None,
) -> _BatchResult:
    """Integrate B independent systems from t0 to opts.t_end.

    Arrays ``alpha``, ``omega`` and ``u0`` have shape (B, N); ``kappa`` has
    shape (B,).  Samples at or after ``record_from`` are kept at
    ``opts.sample_dt``; earlier samples are kept only on a ``coarse_dt`` grid
    (or all of them when ``record_from`` is None).
    """
    alpha = np.asarray(alpha, float)
    omega = np.asarray(omega, float)
    kappa = np.asarray(kappa, float).reshape(-1, 1)
    u = np.array(u0, dtype=complex)
    B, N = u.shape
    if alpha.shape != (B, N) or omega.shape != (B, N) or kappa.shape[0] != B:
        raise ContractError("batch parameter shapes do not match the state")
    logs = np.zeros(B) if log_scale0 is None else np.array(log_scale0, float)
    phase = np.angle(u) if phase0 is None else np.array(phase0, float)

    grid = _sample_grid(t0, opts.t_end, opts.sample_dt)
    keep = np.ones(grid.size, bool)
    if record_from is not None:
        keep = grid >= record_from - 1e-12
        if coarse_dt is not None:
            stride = max(1, int(round(coarse_dt / opts.sample_dt)))
            keep |= (np.arange(grid.size) % stride) == 0
        keep[-1] = True
    slot = np.cumsum(keep) - 1
    S = int(keep.sum())

    rec_u = np.zeros((B, S, N), complex)
    rec_l = np.zeros((B, S))
    rec_p = np.zeros((B, S, N))
    rec_n = np.zeros(B, int)

    def _record(idx, k):
        m = keep[k]
        if not np.any(m):
            return
        i = idx[m]
        s = slot[k[m]]
        rec_u[i, s] = u[i]
        rec_l[i, s] = logs[i]
        rec_p[i, s] = phase[i]
        rec_n[i] = s + 1

    t = np.full(B, float(t0))
    k_next = np.ones(B, int)
    all_idx = np.arange(B)
    _record(all_idx, np.zeros(B, int))
    done = np.zeros(B, bool) if grid.size > 1 else np.ones(B, bool)
    failed = np.zeros(B, bool)
    messages = [""] * B
    h = np.full(B, min(1e-2, opts.sample_dt, opts.max_step))

    def f(idx, y):
        return vector_field(y, alpha[idx], omega[idx], kappa[idx], np.exp(2 * logs[idx])[:, None])

    fsal = f(all_idx, u)
    hmin_rel = 1e-14

    while True:
        idx = np.flatnonzero(~done & ~failed)
        if idx.size == 0:
            break
        y = u[idx]
        mags = np.max(np.abs(y), axis=1)
        small = (mags < _RESCALE_BELOW) & (mags > 0)
        if np.any(small):
            si = idx[small]
            ex = np.frexp(mags[small])[1]
            u[si] = np.ldexp(u[si].real, -ex[:, None]) + 1j * np.ldexp(u[si].imag, -ex[:, None])
            logs[si] += ex * _LN2
            fsal[si] = f(si, u[si])
            y = u[idx]
        target = grid[k_next[idx]]
        ti = t[idx]
        hi = np.minimum(h[idx], opts.max_step)
        gap = target - ti
        clipped = hi >= gap
        hs = np.where(clipped, gap, hi)[:, None]

        k = [fsal[idx]]
        for s in range(1, 7):
            acc = y.copy()
            for j, a in enumerate(_A[s]):
                if a != 0.0:
                    acc += hs * a * k[j]
            if s == 6:
                y_new = acc
            k.append(f(idx, acc))
        err = hs * sum(e * kk for e, kk in zip(_E, k) if e != 0.0)
        sc = opts.atol + opts.rtol * np.maximum(np.abs(y), np.abs(y_new))
        errn = np.sqrt(np.mean(np.abs(err / sc) ** 2, axis=1))
        finite = np.isfinite(errn) & np.all(np.isfinite(y_new), axis=1)
        errn = np.where(finite, errn, np.inf)
        ok = errn <= 1.0

        with np.errstate(divide="ignore"):
            fac = np.where(errn == 0, 5.0, 0.9 * errn ** -0.2)
        fac = np.clip(fac, 0.2, 5.0)
        fac = np.where(ok, fac, np.minimum(fac, 0.9))
        hs1 = hs[:, 0]
        h_new = hs1 * fac
        h_new = np.where(ok & clipped, np.maximum(h[idx], h_new), h_new)
        h[idx] = np.minimum(h_new, opts.max_step)

        if np.any(ok):
            ai = idx[ok]
            y_ok = y_new[ok]
            phase[ai] += wrap_phase(np.angle(y_ok) - np.angle(u[ai]))
            u[ai] = y_ok
            fsal[ai] = k[6][ok]
            hit = clipped[ok]
            t[ai] = np.where(hit, target[ok], ti[ok] + hs1[ok])
            hi_idx = ai[hit]
            if hi_idx.size:
                _record(hi_idx, k_next[hi_idx])
                k_next[hi_idx] += 1
                done[hi_idx] = k_next[hi_idx] >= grid.size

        bad = ~ok & (hs1 < hmin_rel * np.maximum(1.0, np.abs(ti)))
        if np.any(bad):
            for i in idx[bad]:
                failed[i] = True
                messages[i] = f"step size underflow at t={t[i]:.6g}"

    times, us, ls, ps = [], [], [], []
    gk = grid[keep]
    for i in range(B):
        n = rec_n[i]
        times.append(gk[:n].copy())
        us.append(rec_u[i, :n].copy())
        ls.append(rec_l[i, :n].copy())
        ps.append(rec_p[i, :n].copy())
    return _BatchResult(times, us, ls, ps, failed, messages, t.copy(), u.copy(), logs.copy(), phase.copy())


def _params_arrays(plist: Sequence[OscillatorParams]):
    n = plist[0].n
    if any(p.n != n for p in plist):
        raise ContractError("batch members must share the oscillator count")
    alpha = np.array([p.alpha for p in plist])
    omega = np.array([p.omega for p in plist])
    kappa = np.array([p.kappa for p in plist])
    return alpha, omega, kappa


def integrate_batch(
    plist: Sequence[OscillatorParams],
    z0s: Sequence[EnsembleState],
    opts: IntegrateOptions = IntegrateOptions(),
    record_from: Optional[float] = None,
    coarse_dt: Optional[float] = None,
) -> list:
    """Integrate several systems together; returns one Trajectory per member.

    Members that fail are returned with ``failed=True`` rather than raising.
    """
    alpha, omega, kappa = _params_arrays(plist)
    u0 = np.array([np.asarray(z.z) for z in z0s])
    if u0.shape != alpha.shape:
        raise ContractError("initial states do not match params")
    res = run_batch(alpha, omega, kappa, u0, opts, record_from=record_from, coarse_dt=coarse_dt)
    return [
        Trajectory(res.times[i], res.u[i], res.log_scale[i], res.phase[i], plist[i],
                   failed=bool(res.failed[i]), message=res.messages[i])
        for i in range(len(plist))
    ]


def integrate(params: OscillatorParams, z0: EnsembleState, opts: IntegrateOptions = IntegrateOptions()) -> Trajectory:
    """Adaptive solve sampled every ``opts.sample_dt``; raises IntegrationError on failure."""
    if z0.n != params.n:
        raise ContractError("initial state and params dimensions differ")
    traj = integrate_batch([params], [z0], opts)[0]
    if traj.failed:
        raise IntegrationError(traj.message, traj)
    return traj


# ---------------------------------------------------------------- initial data


def initial_state(params: OscillatorParams, policy: str, rng: np.random.Generator,
                  sector_width: float = 2 * np.pi / 3) -> EnsembleState:
    """Random initial data.

    Amplitudes are uniform in [0.2, 1.2] * max(sqrt(max alpha), 1).  Policies:
    ``manifold`` gives every oscillator the same amplitude (ratio 1) with
    random phases, ``sectorial`` draws phases in a randomly placed sector of
    the given width, ``annulus`` draws them on the full circle.
    """
    n = params.n
    scale = max(math.sqrt(max(max(params.alpha), 0.0)), 1.0)
    if policy == "manifold":
        r = np.full(n, rng.uniform(0.2, 1.2) * scale)
        phi = rng.uniform(-np.pi, np.pi, n)
    elif policy == "sectorial":
        r = rng.uniform(0.2, 1.2, n) * scale
        centre = rng.uniform(-np.pi, np.pi)
        phi = centre + rng.uniform(-sector_width / 2, sector_width / 2, n)
    elif policy == "annulus":
        r = rng.uniform(0.2, 1.2, n) * scale
        phi = rng.uniform(-np.pi, np.pi, n)
    else:
        raise ContractError(f"unknown initial-data policy {policy!r}")
    return EnsembleState.from_polar(r, phi)


# ---------------------------------------------------------------- detectors


def _require_tail(traj: Trajectory, hold: float):
    if traj.times[-1] - traj.times[0] < hold - 1e-9:
        raise ContractError("trajectory shorter than the hold window")


def detect_amplitude_death(traj: Trajectory, eps: float = 1e-6, hold: float = 20.0) -> bool:
    """True iff every amplitude stays below eps over the final hold window."""
    _require_tail(traj, hold)
    lr = traj.log_r[traj.tail(hold)]
    return bool(np.all(lr < math.log(eps)))


def _pairs(n):
    return [(j, k) for j in range(n) for k in range(j + 1, n)]


def detect_phase_lock(traj: Trajectory, tol: float = 1e-4, hold: float = 20.0) -> Optional[np.ndarray]:
    """Tail-averaged phase-difference matrix if every difference has settled, else None."""
    _require_tail(traj, hold)
    n = traj.params.n
    m = traj.tail(hold)
    if np.any(traj.u[m] == 0):
        return None
    out = np.zeros((n, n))
    for j, k in _pairs(n):
        d = traj.phase_diff(j, k)[m]
        c = d.mean()
        if np.max(np.abs(d - c)) >= tol:
            return None
        out[j, k] = wrap_phase(c)
        out[k, j] = wrap_phase(-c)
    return out


def winding(traj: Trajectory, window: Optional[float] = None) -> float:
    """Largest number of full turns any phase difference makes over the window."""
    if window is None:
        window = (traj.times[-1] - traj.times[0]) / 2
    m = traj.tail(window)
    n = traj.params.n
    if n < 2:
        return 0.0
    turns = [abs(traj.phase_diff(j, k)[m][-1] - traj.phase_diff(j, k)[m][0]) / (2 * np.pi) for j, k in _pairs(n)]
    return float(max(turns))


def detect_incoherence(traj: Trajectory, window: Optional[float] = None, turns: float = 2.0) -> bool:
    """True iff some phase difference winds at least ``turns`` times over the window (default: second half)."""
    return winding(traj, window) >= turns


def fit_decay_rate(series, times, window: Optional[tuple] = None) -> float:
    """Least-squares slope of log(series) against time."""
    y = np.asarray(series, float)
    t = np.asarray(times, float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        y, t = y[m], t[m]
    if y.size < 2:
        raise DomainError("need at least two samples in the window")
    if np.any(~(y > 0)):
        raise DomainError("series must be strictly positive over the window")
    slope = np.polyfit(t, np.log(y), 1)[0]
    return float(slope)


# ---------------------------------------------------------------- classification


@dataclass(frozen=True)
class DetectOptions:
    eps: float = 1e-6
    hold: float = 20.0
    lock_tol: float = 1e-4
    active_floor: float = 1e-5
    t_max: float = 1000.0


def label_trajectory(traj: Trajectory, det: DetectOptions = DetectOptions(), incoherence_window=None) -> RegimeLabel:
    if traj.failed:
        return RegimeLabel(Amplitude.UNDETERMINED, Phase.UNDETERMINED)
    if detect_amplitude_death(traj, det.eps, det.hold):
        amp = Amplitude.AMPLITUDE_DEATH
    elif np.min(traj.log_r[traj.tail(det.hold)]) > math.log(det.active_floor):
        amp = Amplitude.ACTIVE
    else:
        amp = Amplitude.UNDETERMINED
    if traj.params.n < 2 or detect_phase_lock(traj, det.lock_tol, det.hold) is not None:
        ph = Phase.PHASE_LOCKED
    elif detect_incoherence(traj, incoherence_window):
        ph = Phase.INCOHERENT
    else:
        ph = Phase.UNDETERMINED
    return RegimeLabel(amp, ph)


def classify_batch(
    plist: Sequence[OscillatorParams],
    policy: str = "annulus",
    opts: IntegrateOptions = IntegrateOptions(),
    det: DetectOptions = DetectOptions(),
    z0s: Optional[Sequence[EnsembleState]] = None,
) -> list:
    """Simulate every member and label it.

    Members whose amplitude or phase label is still undetermined at
    ``opts.t_end`` are continued, doubling the horizon, up to ``det.t_max``.
    The incoherence test uses the second half of the full horizon.
    """
    plist = list(plist)
    B = len(plist)
    if B == 0:
        return []
    if z0s is None:
        z0s = [initial_state(p, policy, np.random.default_rng([opts.seed, i])) for i, p in enumerate(plist)]
    alpha, omega, kappa = _params_arrays(plist)
    u = np.array([np.asarray(z.z) for z in z0s])
    logs = np.zeros(B)
    phase = np.angle(u)
    labels: list = [None] * B
    pending = np.arange(B)
    t0, t1 = 0.0, opts.t_end
    while pending.size:
        o = replace(opts, t_end=t1)
        res = run_batch(alpha[pending], omega[pending], kappa[pending], u[pending], o, t0=t0,
                        log_scale0=logs[pending], phase0=phase[pending],
                        record_from=t1 - det.hold, coarse_dt=1.0)
        still = []
        for j, i in enumerate(pending):
            traj = Trajectory(res.times[j], res.u[j], res.log_scale[j], res.phase[j], plist[i],
                              failed=bool(res.failed[j]), message=res.messages[j])
            lab = label_trajectory(traj, det, incoherence_window=t1 / 2)
            undetermined = lab.amplitude is Amplitude.UNDETERMINED or lab.phase is Phase.UNDETERMINED
            if undetermined and not traj.failed and t1 < det.t_max:
                still.append(j)
            else:
                labels[i] = lab
        if not still:
            break
        still = np.array(still)
        u[pending[still]] = res.final_u[still]
        logs[pending[still]] = res.final_log[still]
        phase[pending[still]] = res.final_phase[still]
        pending = pending[still]
        t0, t1 = t1, min(2 * t1, det.t_max)
    return labels


def classify_by_simulation(params: OscillatorParams, policy: str = "annulus",
                           opts: IntegrateOptions = IntegrateOptions(),
                           det: DetectOptions = DetectOptions(),
                           z0: Optional[EnsembleState] = None) -> RegimeLabel:
    """Simulate once and apply the amplitude-death, locking and incoherence detectors."""
    return classify_batch([params], policy, opts, det, None if z0 is None else [z0])[0]
