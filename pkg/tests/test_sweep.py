from dataclasses import replace

import numpy as np
import pytest

from slsync.integrator import Amplitude, IntegrateOptions, Phase, RegimeLabel
from slsync.model import ContractError
from slsync.sweep import (
    AxisSpec,
    PhaseDiagram,
    compare,
    grid_sweep,
    read_csv,
    read_json,
    region_counts,
    transition_points,
    write_csv,
    write_json,
)


def _origin_decays(a1, a2, kappa, gamma):
    """Linear stability of z = 0 from a direct eigensolve of the 2x2 complex linearisation."""
    m = np.array([[a1 - kappa / 2 + 0.5j * gamma, kappa / 2], [kappa / 2, a2 - kappa / 2 - 0.5j * gamma]])
    return np.max(np.linalg.eigvals(m).real) < 0


HOMOG_AXES = (AxisSpec("gamma", 0, 4, 40, include_min=False), AxisSpec("kappa", 0, 4, 40, include_min=False))


@pytest.fixture(scope="module")
def homog():
    return grid_sweep({"alpha1": 1.0, "alpha2": 1.0}, HOMOG_AXES)


def test_homogeneous_layout_has_four_connected_regions(homog):
    counts = region_counts(homog)
    assert counts == {
        "Active+PhaseLocked": 1,
        "Active+Incoherent": 1,
        "AmplitudeDeath+PhaseLocked": 1,
        "AmplitudeDeath+Incoherent": 1,
    }


def test_homogeneous_labels_against_linearisation(homog):
    checked = 0
    for (g, k), c in zip(homog.points(), homog.cells):
        # keep clear of kappa = gamma and of the amplitude boundary
        if abs(k - g) < 0.05 or abs(k - 2) < 0.05:
            continue
        dead = _origin_decays(1, 1, k, g)
        if dead != _origin_decays(1, 1, k + 0.05, g) or dead != _origin_decays(1, 1, k - 0.05, g):
            continue
        assert (c.amplitude is Amplitude.AMPLITUDE_DEATH) == dead
        assert (c.phase is Phase.PHASE_LOCKED) == (k > g)
        checked += 1
    assert checked > 1300


def test_antisymmetric_pair_ad_region_bounded_by_asymptotes():
    axes = (AxisSpec("gamma", 0, 10, 50, include_min=False), AxisSpec("kappa", 0, 10, 50, include_min=False))
    d = grid_sweep({"alpha1": 1.0, "alpha2": -1.0}, axes)
    dead = np.array([c.amplitude is Amplitude.AMPLITUDE_DEATH for c in d.cells])
    pts = d.points()
    assert dead.any()
    assert np.all(pts[dead, 0] > 2) and np.all(pts[dead, 1] > 2)
    # well inside the quadrant everything dies
    far = (pts[:, 0] > 4) & (pts[:, 1] > 4)
    assert np.all(dead[far])
    for (g, k), flag in zip(pts, dead):
        if min(abs(g - 2), abs(k - 2)) > 0.3 and _origin_decays(1, -1, k, g) == _origin_decays(1, -1, k * 1.05, g * 1.05):
            assert flag == _origin_decays(1, -1, k, g)


def test_compare_identical_and_band(homog):
    full = compare(homog, homog, exclusion_band=0.0)
    assert full.fraction == 1.0 and full.counted == full.total == 1600
    banded = compare(homog, homog, exclusion_band=0.1)
    assert banded.fraction == 1.0 and banded.counted < full.counted


def test_compare_counts_disagreement(homog):
    flipped = [RegimeLabel(Amplitude.UNDETERMINED, Phase.UNDETERMINED) if i % 2 else c for i, c in enumerate(homog.cells)]
    other = replace(homog, cells=flipped)
    ag = compare(homog, other, exclusion_band=0.0)
    assert ag.fraction == pytest.approx(0.5)
    assert sum(ag.confusion.values()) == ag.counted


def test_compare_rejects_axis_mismatch(homog):
    axes = (AxisSpec("gamma", 0, 4, 40, include_min=False), AxisSpec("kappa", 0, 5, 40, include_min=False))
    other = grid_sweep({"alpha1": 1.0, "alpha2": 1.0}, axes)
    with pytest.raises(ContractError):
        compare(homog, other)


def test_transition_points_lie_on_boundaries():
    tp = transition_points({"alpha1": 1.0, "alpha2": 1.0, "kappa": 1.0, "gamma": 0.0}, HOMOG_AXES, 0.1)
    assert len(tp) > 50
    on_diag = np.abs(tp[:, 1] - tp[:, 0]) < 0.05
    on_amp = np.array([_origin_decays(1, 1, k - 0.05, g) != _origin_decays(1, 1, k + 0.05, g) for g, k in tp])
    assert np.all(on_diag | on_amp)


def test_axis_and_diagram_contracts():
    with pytest.raises(ContractError):
        AxisSpec("omega", 0, 1, 3)
    with pytest.raises(ContractError):
        AxisSpec("kappa", 1, 0, 3)
    with pytest.raises(ContractError):
        grid_sweep({"alpha1": 1, "alpha2": 1}, (AxisSpec("kappa", 0.1, 1, 2), AxisSpec("kappa", 0.1, 1, 2)))
    with pytest.raises(ContractError):
        PhaseDiagram(HOMOG_AXES, [], "analytic", {})
    with pytest.raises(ContractError):
        grid_sweep({"alpha1": 1, "alpha2": 1}, HOMOG_AXES, mode="guess")


SMALL = (AxisSpec("kappa", 0.5, 3.5, 4), AxisSpec("gamma", 0.5, 3.5, 3))


def test_simulated_sweep_is_deterministic_and_jobs_independent():
    base = {"alpha1": 1.0, "alpha2": 0.5}
    opts = IntegrateOptions(seed=3)
    a = grid_sweep(base, SMALL, "simulate", opts=opts, jobs=1, chunk=5)
    b = grid_sweep(base, SMALL, "simulate", opts=opts, jobs=2, chunk=5)
    c = grid_sweep(base, SMALL, "simulate", opts=opts, jobs=1, chunk=100)
    assert a.cells == b.cells == c.cells
    assert a.meta["seed"] == 3


def test_mode_both_returns_agreement():
    an, sim, ag = grid_sweep({"alpha1": 1.0, "alpha2": 0.5}, SMALL, "both")
    assert an.provenance == "analytic" and sim.provenance == "simulated"
    assert ag.total == 12 and 0 <= ag.fraction <= 1


def test_csv_and_json_round_trip(tmp_path, homog):
    write_json(homog, tmp_path / "d.json")
    back = read_json(tmp_path / "d.json")
    assert back.cells == homog.cells and back.axes == homog.axes and back.params_base == homog.params_base
    write_csv(homog, tmp_path / "d.csv")
    assert read_csv(tmp_path / "d.csv", homog).cells == homog.cells
    first = (tmp_path / "d.csv").read_text().splitlines()[:2]
    assert first[0] == "gamma,kappa,amplitude_label,phase_label,leader_flag,boundary_flag"
    assert first[1].startswith("0.1,0.1,")
