"""Parameter and state types, the vector field, and derived observables.

The system is

    dz_j/dt = (alpha_j + i omega_j - |z_j|^2) z_j + (kappa/N) sum_l (z_l - z_j)

on a complete graph.  Phases are wrapped to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class ContractError(ValueError):
    """Inputs violate a documented precondition."""


class DomainError(ValueError):
    """A quantity is requested outside the set where it is defined."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def wrap_phase(x):
    """Wrap angles to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return y if np.ndim(y) else float(y)


@dataclass(frozen=True)
class OscillatorParams:
    """Full parameter point: coupling and per-oscillator (alpha, omega)."""

    kappa: float
    alpha: tuple
    omega: tuple

    def __post_init__(self):
        alpha = tuple(float(v) for v in np.atleast_1d(self.alpha))
        omega = tuple(float(v) for v in np.atleast_1d(self.omega))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "kappa", float(self.kappa))
        if len(alpha) < 1:
            raise ContractError("need at least one oscillator")
        if len(alpha) != len(omega):
            raise ContractError(f"alpha has {len(alpha)} entries but omega has {len(omega)}")
        if not all(math.isfinite(v) for v in alpha + omega + (self.kappa,)):
            raise ContractError("parameters must be finite")
        if self.kappa < 0:
            raise ContractError("kappa must be non-negative")

    @property
    def n(self) -> int:
        return len(self.alpha)

    @property
    def alpha_arr(self) -> np.ndarray:
        return np.asarray(self.alpha)

    @property
    def omega_arr(self) -> np.ndarray:
        return np.asarray(self.omega)

    @classmethod
    def pair(cls, alpha1: float, alpha2: float, kappa: float, gamma: float) -> "OscillatorParams":
        """Two oscillators with frequency gap gamma split symmetrically about zero."""
        return cls(kappa, (alpha1, alpha2), (gamma / 2.0, -gamma / 2.0))


@dataclass(frozen=True)
class EnsembleState:
    """Complex positions of the oscillators."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z)
        if z.ndim == 2 and z.shape[1] == 2 and not np.iscomplexobj(z):
            z = z[:, 0] + 1j * z[:, 1]
        z = np.atleast_1d(z).astype(complex)
        if z.ndim != 1:
            raise ContractError("state must be a flat list of complex values")
        if not np.all(np.isfinite(z)):
            raise ContractError("state must be finite")
        object.__setattr__(self, "z", _frozen(z))

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def r(self) -> np.ndarray:
        return np.abs(self.z)

    @property
    def phi(self) -> np.ndarray:
        return wrap_phase(np.angle(self.z))

    @property
    def re_im(self) -> np.ndarray:
        return np.column_stack([self.z.real, self.z.imag])

    @classmethod
    def from_polar(cls, r: Sequence[float], phi: Sequence[float]) -> "EnsembleState":
        return cls(np.asarray(r, float) * np.exp(1j * np.asarray(phi, float)))


@dataclass(frozen=True)
class Observables:
    """Pairwise phase differences, amplitude ratios and heterogeneity measures.

    ``ratios[j, k]`` is NaN where ``r_k == 0``; ``ratio_defined`` flags the
    valid entries.  ``amp_gap`` is only set for two oscillators.
    """

    phase_diffs: np.ndarray
    ratios: np.ndarray
    ratio_defined: np.ndarray
    mean_phase: float
    amp_gap: Optional[float]
    a_het: float
    g_het: float


def observables(state: EnsembleState, params: OscillatorParams) -> Observables:
    if state.n != params.n:
        raise ContractError("state and params dimensions differ")
    r, phi = state.r, state.phi
    diffs = wrap_phase(phi[:, None] - phi[None, :])
    defined = np.broadcast_to(r[None, :] > 0, (r.size, r.size)).copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(defined, r[:, None] / np.where(r > 0, r, 1.0)[None, :], np.nan)
    al, om = params.alpha_arr, params.omega_arr
    return Observables(
        phase_diffs=_frozen(diffs),
        ratios=_frozen(ratios),
        ratio_defined=_frozen(defined),
        mean_phase=float(np.mean(phi)),
        amp_gap=float(r[0] ** 2 - r[1] ** 2) if state.n == 2 else None,
        a_het=float(al.max() - al.min()),
        g_het=float(om.max() - om.min()),
    )


def vector_field(z, alpha, omega, kappa, amp_scale2=1.0):
    """Batched right-hand side on arrays whose last axis indexes oscillators.

    ``amp_scale2`` multiplies the cubic term.  Integrating ``u`` with
    ``amp_scale2 = s**2`` is the same as integrating ``z = s*u``, which lets
    the integrator carry vanishing amplitudes as a mantissa and a log-scale.
    """
    mean = np.mean(z, axis=-1, keepdims=True)
    ab2 = z.real * z.real + z.imag * z.imag
    return (alpha + 1j * omega - amp_scale2 * ab2) * z + kappa * (mean - z)


def rhs_cartesian(state: EnsembleState, params: OscillatorParams) -> np.ndarray:
    """Time derivative of every z_j."""
    if state.n != params.n:
        raise ContractError("state and params dimensions differ")
    return vector_field(state.z, params.alpha_arr, params.omega_arr, params.kappa)


def rhs_polar(r, phi, params: OscillatorParams):
    """Amplitude and phase derivatives from the polar split of the field."""
    r = np.asarray(r, float)
    phi = np.asarray(phi, float)
    if r.shape != (params.n,) or phi.shape != (params.n,):
        raise ContractError("amplitudes/phases do not match params")
    if np.any(r <= 0):
        raise DomainError("polar form requires every amplitude to be positive")
    k_n = params.kappa / params.n
    d = phi[None, :] - phi[:, None]  # phi_l - phi_j on row j
    dr = (params.alpha_arr - r**2) * r + k_n * np.sum(r[None, :] * np.cos(d) - r[:, None], axis=1)
    dphi = params.omega_arr + k_n * np.sum((r[None, :] / r[:, None]) * np.sin(d), axis=1)
    return dr, dphi


def corotating_frequency(params: OscillatorParams, r) -> float:
    r2 = np.asarray(r, float) ** 2
    tot = r2.sum()
    if not tot > 0:
        raise DomainError("co-rotating frame undefined when every amplitude is zero")
    return float(np.dot(params.omega_arr, r2) / tot)


def corotating_shift(params: OscillatorParams, r) -> OscillatorParams:
    """Move to the frame rotating at the amplitude-weighted mean frequency."""
    w = corotating_frequency(params, r)
    return OscillatorParams(params.kappa, params.alpha, tuple(params.omega_arr - w))


def sector_functional(state: EnsembleState) -> Optional[np.ndarray]:
    """Unit vector l with <l, z_j> > 0 for every j, or None if no open half-plane holds them all.

    The angles are sorted and the largest circular gap is found.  If it
    exceeds pi the occupied arc is shorter than pi and its midpoint works.
    """
    z = state.z
    if z.size == 0 or np.any(z == 0):
        return None
    ang = np.sort(np.mod(np.angle(z), 2 * np.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    i = int(np.argmax(gaps))
    if gaps[i] <= np.pi:
        return None
    # occupied arc runs from ang[i+1] counter-clockwise to ang[i]
    start = ang[(i + 1) % ang.size]
    width = 2 * np.pi - gaps[i]
    mid = start + width / 2
    return np.array([math.cos(mid), math.sin(mid)])


def sector_margin(z, direction) -> np.ndarray:
    """<l, z_j> for each oscillator."""
    z = np.asarray(z)
    return z.real * direction[0] + z.imag * direction[1]


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution.

    States are stored as a mantissa ``u`` and a per-sample natural-log scale so
    that ``z = u * exp(log_scale)``; this keeps phases and amplitude ratios
    observable long after the true amplitudes underflow.  ``phase`` holds the
    unwrapped phase of every oscillator, tracked at every accepted step.
    """

    times: np.ndarray
    u: np.ndarray
    log_scale: np.ndarray
    phase: np.ndarray
    params: OscillatorParams
    failed: bool = False
    message: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or not (len(t) == len(self.u) == len(self.log_scale) == len(self.phase)):
            raise ContractError("trajectory fields must have equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ContractError("sample times must be strictly increasing")
        for name in ("times", "u", "log_scale", "phase"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __len__(self):
        return self.times.size

    @property
    def z(self) -> np.ndarray:
        return self.u * np.exp(self.log_scale)[:, None]

    @property
    def log_r(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.u)) + self.log_scale[:, None]

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    def phase_diff(self, j: int = 0, k: int = 1) -> np.ndarray:
        """Unwrapped phi_j - phi_k."""
        return self.phase[:, j] - self.phase[:, k]

    def ratio(self, j: int = 0, k: int = 1) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.u[:, j]) / np.abs(self.u[:, k])

    def amp_gap(self) -> np.ndarray:
        r = self.r
        return r[:, 0] ** 2 - r[:, 1] ** 2

    def mean_phase(self) -> np.ndarray:
        return np.mean(wrap_phase(self.phase), axis=1)

    def state(self, i: int) -> EnsembleState:
        return EnsembleState(self.z[i])

    def observables_at(self, i: int) -> Observables:
        return observables(self.state(i), self.params)

    def tail(self, duration: float) -> np.ndarray:
        """Boolean mask of samples in the final ``duration`` time units."""
        return self.times >= self.times[-1] - duration - 1e-12
