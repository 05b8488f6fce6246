"""Phase diagrams of two coupled oscillators over a parameter plane."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytic2 import Params2, classify_het
from .integrator import (
    Amplitude,
    DetectOptions,
    IntegrateOptions,
    Phase,
    RegimeLabel,
    classify_batch,
    initial_state,
)
from .model import ContractError

AXIS_NAMES = ("kappa", "gamma", "alpha1", "alpha2")


@dataclass(frozen=True)
class AxisSpec:
    name: str
    min: float
    max: float
    resolution: int
    include_min: bool = True

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ContractError(f"axis must be one of {AXIS_NAMES}")
        if self.resolution < 1 or not self.max >= self.min:
            raise ContractError("bad axis range")

    @property
    def values(self) -> np.ndarray:
        if self.include_min:
            return np.linspace(self.min, self.max, self.resolution)
        return np.linspace(self.min, self.max, self.resolution + 1)[1:]


@dataclass
class PhaseDiagram:
    axes: tuple
    cells: list
    provenance: str
    params_base: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = int(np.prod([a.resolution for a in self.axes]))
        if len(self.cells) != n:
            raise ContractError("cell count must equal the product of the resolutions")

    @property
    def shape(self) -> tuple:
        return tuple(a.resolution for a in self.axes)

    def points(self) -> np.ndarray:
        v1, v2 = self.axes[0].values, self.axes[1].values
        return np.array([(x, y) for x in v1 for y in v2])

    def label_grid(self) -> np.ndarray:
        return np.array([f"{c.amplitude.value}+{c.phase.value}" for c in self.cells]).reshape(self.shape)


def _cell_params(base: dict, axes, point) -> Params2:
    d = dict(base)
    for ax, v in zip(axes, point):
        d[ax.name] = float(v)
    return Params2(d["alpha1"], d["alpha2"], d["kappa"], d.get("gamma", 0.0))


def _normalise_base(base) -> dict:
    if isinstance(base, Params2):
        return {"alpha1": base.alpha1, "alpha2": base.alpha2, "kappa": base.kappa, "gamma": base.gamma}
    d = {"kappa": 1.0, "gamma": 0.0}
    d.update({k: float(v) for k, v in dict(base).items()})
    return d


def _simulate_chunk(args):
    plist, z0s, opts, det = args
    return classify_batch(plist, opts=opts, det=det, z0s=z0s)


def grid_sweep(base, axes: Sequence[AxisSpec], mode: str = "analytic",
               opts: IntegrateOptions = IntegrateOptions(), det: DetectOptions = DetectOptions(),
               policy: Optional[str] = None, jobs: int = 1, chunk: int = 400):
    """Classify every cell of a two-axis grid.

    ``mode`` is ``analytic``, ``simulate`` or ``both``; ``both`` returns
    (analytic, simulated, agreement).  Initial data for cell i come from a
    generator seeded with (seed, i), so results do not depend on how cells
    are split across workers.
    """
    base = _normalise_base(base)
    axes = tuple(axes)
    if len(axes) != 2 or axes[0].name == axes[1].name:
        raise ContractError("need two distinct axes")
    pts = [(x, y) for x in axes[0].values for y in axes[1].values]
    p2s = [_cell_params(base, axes, p) for p in pts]
    if mode == "both":
        a = grid_sweep(base, axes, "analytic", opts, det, policy, jobs, chunk)
        s = grid_sweep(base, axes, "simulate", opts, det, policy, jobs, chunk)
        return a, s, compare(a, s)
    meta = {"version": __version__, "mode": mode}
    if mode == "analytic":
        cells = [classify_het(p) for p in p2s]
        return PhaseDiagram(axes, cells, "analytic", base, meta)
    if mode != "simulate":
        raise ContractError(f"unknown mode {mode!r}")
    plist = [p.to_params() for p in p2s]
    pol = [policy or ("manifold" if p.a == 0 else "annulus") for p in p2s]
    z0s = [initial_state(pp, pol[i], np.random.default_rng([opts.seed, i])) for i, pp in enumerate(plist)]
    tasks = [(plist[i:i + chunk], z0s[i:i + chunk], opts, det) for i in range(0, len(plist), chunk)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_simulate_chunk, tasks))
    else:
        parts = [_simulate_chunk(t) for t in tasks]
    cells = [lab for part in parts for lab in part]
    meta.update({"seed": opts.seed, "rtol": opts.rtol, "atol": opts.atol, "t_end": opts.t_end,
                 "sample_dt": opts.sample_dt, "policy": policy or "auto", "detect": asdict(det)})
    return PhaseDiagram(axes, cells, "simulated", base, meta)


# ---------------------------------------------------------------- comparison


def transition_points(base: dict, axes, band: float, refine: int = 8) -> np.ndarray:
    """Points on the analytic transition curves inside (and a band around) the plotted window.

    The analytic classifier is evaluated on a fine grid; midpoints between
    neighbouring fine cells with different (amplitude, phase) labels are
    returned.  Spacing is at most band/4.
    """
    grids = []
    for ax in axes:
        lo, hi = ax.min - band, ax.max + band
        if ax.name == "kappa":
            lo = max(lo, 1e-6)
        if ax.name == "gamma":
            lo = max(lo, 0.0)
        step = min((ax.max - ax.min) / max(ax.resolution, 1) / refine, band / 4) or band / 4
        grids.append(np.arange(lo, hi + step / 2, step))
    g1, g2 = grids
    keys = np.empty((g1.size, g2.size), dtype=object)
    for i, x in enumerate(g1):
        for j, y in enumerate(g2):
            keys[i, j] = classify_het(_cell_params(base, axes, (x, y))).key
    out = []
    diff1 = keys[1:, :] != keys[:-1, :]
    for i, j in zip(*np.nonzero(diff1)):
        out.append(((g1[i] + g1[i + 1]) / 2, g2[j]))
    diff2 = keys[:, 1:] != keys[:, :-1]
    for i, j in zip(*np.nonzero(diff2)):
        out.append((g1[i], (g2[j] + g2[j + 1]) / 2))
    return np.array(out).reshape(-1, 2)


@dataclass(frozen=True)
class Agreement:
    fraction: float
    counted: int
    total: int
    confusion: dict

    def as_dict(self):
        return {"fraction": self.fraction, "counted": self.counted, "total": self.total, "confusion": self.confusion}


def compare(a: PhaseDiagram, b: PhaseDiagram, exclusion_band: float = 0.1) -> Agreement:
    """Fraction of matching (amplitude, phase) labels away from the transition curves."""
    if tuple(a.axes) != tuple(b.axes):
        raise ContractError("diagrams have different axes")
    pts = a.points()
    mask = np.ones(len(pts), bool)
    if exclusion_band > 0:
        from scipy.spatial import cKDTree

        tp = transition_points(a.params_base, a.axes, exclusion_band)
        if len(tp):
            dist, _ = cKDTree(tp).query(pts)
            mask = dist > exclusion_band
    conf: dict = {}
    hits = 0
    for ca, cb, m in zip(a.cells, b.cells, mask):
        if not m:
            continue
        k = f"{ca.amplitude.value}+{ca.phase.value}|{cb.amplitude.value}+{cb.phase.value}"
        conf[k] = conf.get(k, 0) + 1
        hits += ca.key == cb.key
    n = int(mask.sum())
    return Agreement(hits / n if n else 1.0, n, len(pts), conf)


def region_counts(d: PhaseDiagram) -> dict:
    """Number of 8-connected regions per label (thin diagonal strips count once)."""
    from scipy import ndimage

    grid = d.label_grid()
    eight = np.ones((3, 3), int)
    return {str(lab): int(ndimage.label(grid == lab, structure=eight)[1]) for lab in np.unique(grid)}


# ---------------------------------------------------------------- export


def write_csv(d: PhaseDiagram, path: str):
    n1, n2 = d.axes[0].name, d.axes[1].name
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([n1, n2, "amplitude_label", "phase_label", "leader_flag", "boundary_flag"])
        for (x, y), c in zip(d.points(), d.cells):
            w.writerow([repr(float(x)), repr(float(y)), c.amplitude.value, c.phase.value,
                        int(c.leader_driven), int(c.boundary)])


def to_json_dict(d: PhaseDiagram) -> dict:
    return {
        "axes": [asdict(a) for a in d.axes],
        "provenance": d.provenance,
        "params_base": d.params_base,
        "meta": d.meta,
        "cells": [[c.amplitude.value, c.phase.value, c.leader_driven, c.boundary] for c in d.cells],
    }


def write_json(d: PhaseDiagram, path: str):
    with open(path, "w") as fh:
        json.dump(to_json_dict(d), fh, indent=1)


def read_json(path: str) -> PhaseDiagram:
    with open(path) as fh:
        raw = json.load(fh)
    axes = tuple(AxisSpec(**a) for a in raw["axes"])
    cells = [RegimeLabel(Amplitude(c[0]), Phase(c[1]), bool(c[2]), bool(c[3])) for c in raw["cells"]]
    return PhaseDiagram(axes, cells, raw["provenance"], raw["params_base"], raw.get("meta", {}))


def read_csv(path: str, like: PhaseDiagram) -> PhaseDiagram:
    """Cells from a CSV export, reusing axes and base parameters from ``like``."""
    cells = []
    with open(path) as fh:
        for row in csv.DictReader(fh):
            cells.append(RegimeLabel(Amplitude(row["amplitude_label"]), Phase(row["phase_label"]),
                                     row["leader_flag"] == "1", row["boundary_flag"] == "1"))
    return PhaseDiagram(like.axes, cells, like.provenance, like.params_base, like.meta)
