import cmath
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from slsync.analytic2 import (
    LockedState2,
    Params2,
    _g,
    _h,
    ad_jacobian,
    ad_stability,
    char_poly3,
    classify_het,
    classify_homog,
    f_curve,
    f_value,
    f_zero_gamma,
    f_zero_kappa,
    gamma_prime,
    gamma_sq_on_f_curve,
    gamma_star,
    jacobian3,
    jacobian3_stability,
    kappa_star_homog,
    locked_brackets,
    locked_state_het,
    reduced_field,
    riccati_fixed_points,
    riccati_rhs,
    riccati_solution_homog,
    routh_hurwitz3,
)
from slsync.integrator import (
    IntegrateOptions,
    classify_by_simulation,
    initial_state,
    integrate,
)
from slsync.model import ContractError, DomainError, EnsembleState, OscillatorParams

# ---------------------------------------------------------------- identical amplitudes


def test_kappa_star_values():
    assert kappa_star_homog(1, 2) == pytest.approx(2)
    assert kappa_star_homog(1, 4) == pytest.approx(5)
    assert kappa_star_homog(0.5, 3) == pytest.approx(5)
    with pytest.raises(DomainError):
        kappa_star_homog(1, 1)
    with pytest.raises(DomainError):
        kappa_star_homog(-1, 3)


def test_classify_homog_examples():
    assert classify_homog(-1, 2, 1).key == ("AmplitudeDeath", "PhaseLocked")
    assert classify_homog(1, 3, 4).key == ("AmplitudeDeath", "Incoherent")
    # kappa*(4.5) = (4 + 20.25)/4 = 6.0625, so kappa = 6 is still inside amplitude death
    assert kappa_star_homog(1, 4.5) == pytest.approx(6.0625)
    assert classify_homog(1, 6, 4.5).key == ("AmplitudeDeath", "PhaseLocked")
    assert classify_homog(1, 6.5, 4.5).key == ("Active", "PhaseLocked")
    assert classify_homog(1, 1, 1).boundary


@pytest.mark.parametrize("kappa,expected", [(6.0, ("AmplitudeDeath", "PhaseLocked")), (6.5, ("Active", "PhaseLocked"))])
def test_classify_homog_confirmed_by_simulation(kappa, expected):
    # kappa = 6 sits just below kappa* = 6.0625, where the decay rate is only about 0.016
    lab = classify_by_simulation(OscillatorParams.pair(1, 1, kappa, 4.5), "manifold",
                                 opts=IntegrateOptions(t_end=1500.0))
    assert lab.key == expected == classify_homog(1, kappa, 4.5).key


def test_f_reduces_to_kappa_star_for_identical_amplitudes():
    for g in (2.5, 3.0, 7.0):
        assert f_value(1.0, 1.0, kappa_star_homog(1.0, g), g) == pytest.approx(0, abs=1e-12)


# ---------------------------------------------------------------- curves


def test_f_zero_at_gamma_zero():
    assert f_value(1, -2, 4, 0) == pytest.approx(0, abs=1e-12)
    # 2 a1 a2 / (a1 + a2) is the gamma = 0 crossing for other mixed pairs too
    for a1, a2 in [(1, -3), (0.5, -2), (2, -2.5)]:
        assert f_value(a1, a2, 2 * a1 * a2 / (a1 + a2), 0) == pytest.approx(0, abs=1e-12)


def test_horizontal_asymptote():
    vals = [abs(f_value(1, -2, 2, g)) for g in (1e3, 1e6)]
    assert vals[1] < vals[0] < 1e-2
    assert vals[1] < 1e-5
    roots = f_zero_kappa(1, -2, 1e4, kappa_max=10)
    assert roots and abs(roots[-1] - 2) < 1e-3


def test_antisymmetric_pair_asymptotes():
    assert abs(f_value(1, -1, 2, 1e8)) < 1e-6
    assert abs(f_value(1, -1, 1e8, 2)) < 1e-6


def test_gamma_star_values():
    p = lambda k: Params2(1, 0.5, k, 0)  # noqa: E731
    assert gamma_star(p(1e-9)) == pytest.approx(0, abs=1e-8)
    assert gamma_star(p(0.5)) == pytest.approx(0.5 / math.sqrt(0.75), rel=1e-12)
    assert gamma_star(p(0.5)) == pytest.approx(0.57735, abs=1e-5)
    assert gamma_star(p(1 - 1e-9)) > 1e3
    with pytest.raises(DomainError):
        gamma_star(p(1.0))
    with pytest.raises(DomainError):
        gamma_star(Params2(1, -0.5, 0.5, 0))


def test_gamma_prime_against_grid_minimum():
    kmin, gmin = gamma_prime(1, 0.5)
    grid = np.arange(2.0 + 1e-5, 22.0, 1e-5)
    g2 = np.array([gamma_sq_on_f_curve(1, 0.5, k) for k in grid[::100]])
    coarse = grid[::100][np.argmin(g2)]
    fine = np.arange(coarse - 2e-3, coarse + 2e-3, 1e-5)
    fine_vals = np.array([gamma_sq_on_f_curve(1, 0.5, k) for k in fine])
    k_grid = fine[np.argmin(fine_vals)]
    assert kmin == pytest.approx(2.5678, abs=1e-4)
    assert abs(kmin - k_grid) <= 2e-5
    assert gmin == pytest.approx(math.sqrt(fine_vals.min()), rel=1e-8)


@pytest.mark.parametrize("a1,a2", [(1, 0.5), (2, 1), (1, -0.5), (3, 0.1)])
def test_gamma_prime_on_curve_and_stationary(a1, a2):
    k, g = gamma_prime(a1, a2)
    assert abs(f_value(a1, a2, k, g)) < 1e-8
    h = 1e-5
    d = (gamma_sq_on_f_curve(a1, a2, k + h) - gamma_sq_on_f_curve(a1, a2, k - h)) / (2 * h)
    assert abs(d) < 1e-6


def test_gamma_prime_domain():
    with pytest.raises(DomainError):
        gamma_prime(1, -2)
    with pytest.raises(DomainError):
        gamma_prime(1, 1)


def test_curve_tabulations_lie_on_f_zero():
    for g in (0.5, 3.0):
        for k in f_zero_kappa(1, 0.5, g, 20):
            assert abs(f_value(1, 0.5, k, g)) < 1e-10
    for k in (2.5, 4.0):
        for g in f_zero_gamma(1, 0.5, k, 20):
            assert abs(f_value(1, 0.5, k, g)) < 1e-10
            assert g * g == pytest.approx(gamma_sq_on_f_curve(1, 0.5, k), rel=1e-7)


# ---------------------------------------------------------------- Riccati


def test_riccati_fixed_points_examples():
    plus, minus = riccati_fixed_points(Params2(1, 1, 1, 0))
    assert plus.y == pytest.approx(1) and minus.y == pytest.approx(-1)
    assert plus.stable and not minus.stable
    k, g = 2.0, 1.2
    plus, _ = riccati_fixed_points(Params2(1, 1, k, g))
    assert plus.y == pytest.approx(complex(math.sqrt(1 - g * g / k / k), g / k))
    for pt in riccati_fixed_points(Params2(4, 1, 4, 1)):
        assert abs(riccati_rhs(pt.y, 3, 4, 1)) < 1e-12


def test_riccati_stability_matches_linearisation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = Params2(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 4), rng.uniform(0, 4))
        for pt in riccati_fixed_points(p):
            deriv = complex(p.a, p.gamma) - p.kappa * pt.y
            assert (deriv.real < 0) == pt.stable


def test_riccati_solution_examples():
    y_inf = complex(math.sqrt(1 - 0.25), 0.5)
    assert riccati_solution_homog(y_inf, 7.0, 2.0, 1.0) == pytest.approx(y_inf, abs=1e-14)
    assert riccati_solution_homog(1 + 1j, 10.0, 1.0, 1.0) == pytest.approx(1 / 6 + 1j, abs=1e-14)


def _riccati_oracle(y0, t, kappa, gamma):
    def rhs(_, v):
        y = complex(v[0], v[1])
        d = 0.5 * kappa * (1 + 2j * gamma * y / kappa - y * y)
        return [d.real, d.imag]

    s = solve_ivp(rhs, (0, t), [y0.real, y0.imag], method="Radau", rtol=1e-12, atol=1e-14)
    return complex(s.y[0, -1], s.y[1, -1])


@pytest.mark.parametrize("y0,t,kappa,gamma", [(0.3 - 0.2j, 5.0, 2.0, 1.0), (0.3 - 0.2j, 0.0, 2.0, 1.0),
                                              (-0.5 + 2j, 1.3, 3.0, 0.5), (0.2 + 0.1j, 4.0, 1.0, 1.0)])
def test_riccati_closed_form_against_integration(y0, t, kappa, gamma):
    got = riccati_solution_homog(y0, t, kappa, gamma)
    assert abs(got - _riccati_oracle(y0, t, kappa, gamma)) < 1e-8
    assert riccati_solution_homog(y0, 0.0, kappa, gamma) == pytest.approx(y0, abs=1e-14)


def test_riccati_periodic_branch_matches_twin_simulation():
    # on the invariant manifold z1/z2 obeys the same equation, so the full model is an oracle
    kappa, gamma = 0.5, 1.0
    p = OscillatorParams.pair(1.0, 1.0, kappa, gamma)
    z0 = EnsembleState(np.array([np.exp(0.4j), 1.0]))
    tr = integrate(p, z0, IntegrateOptions(t_end=6.0, sample_dt=0.5))
    y0 = z0.z[0] / z0.z[1]
    for t, z in zip(tr.times, tr.z):
        assert abs(riccati_solution_homog(y0, t, kappa, gamma) - z[0] / z[1]) < 1e-7


# ---------------------------------------------------------------- locked state


def test_leader_zone_state():
    p = Params2(1, 0.5, 1.2, 10)
    ls = locked_state_het(p)
    assert ls is not None
    assert max(ls.residuals) < 1e-10
    assert ls.r2_inf < 0.1
    # the leader settles near alpha1 - kappa/2 = 0.4 once the follower is quenched
    assert ls.r1_inf ** 2 == pytest.approx(0.4, abs=0.02)
    assert classify_het(p).leader_driven


def test_locked_state_on_incoherence_boundary():
    p0 = Params2(1, 0.5, 0.5, 0)
    p = Params2(1, 0.5, 0.5, gamma_star(p0))
    ls = locked_state_het(p)
    assert ls.R_inf == pytest.approx(math.sqrt(3), abs=1e-9)
    assert ls.l_inf == pytest.approx(0.5, abs=1e-9)
    assert ls.Phi_inf == pytest.approx(math.pi / 2, abs=1e-6)
    assert max(ls.residuals) < 1e-10
    assert jacobian3_stability(ls, p)[0]


def test_no_locked_state_under_amplitude_death():
    assert f_curve(Params2(1, -2, 5, 1)) < 0
    assert locked_state_het(Params2(1, -2, 5, 1)) is None


def test_no_locked_state_when_incoherent():
    assert locked_state_het(Params2(1, 0.5, 0.3, 3)) is None


def _random_locked(rng, n):
    out = []
    while len(out) < n:
        a2 = rng.uniform(-2, 1.5)
        p = Params2(a2 + rng.uniform(0.05, 2), a2, rng.uniform(0.05, 6), rng.uniform(0, 6))
        ls = locked_state_het(p)
        if ls is not None:
            out.append((p, ls))
    return out


def test_jacobian_against_finite_differences():
    rng = np.random.default_rng(11)
    for p, ls in _random_locked(rng, 40):
        x = np.array([ls.l_inf, ls.R_inf, ls.Phi_inf])
        fd = np.zeros((3, 3))
        for j in range(3):
            h = 1e-6 * max(1.0, abs(x[j]))
            e = np.zeros(3)
            e[j] = h
            fd[:, j] = (reduced_field(*(x + e), p) - reduced_field(*(x - e), p)) / (2 * h)
        assert np.allclose(jacobian3(ls, p), fd, rtol=1e-5, atol=1e-6)


def test_char_poly_against_numpy():
    rng = np.random.default_rng(12)
    for _ in range(30):
        m = rng.normal(size=(3, 3))
        c = np.array(char_poly3(m))
        # det(M - lambda I) = -lambda^3 + ... ; numpy.poly gives det(lambda I - M)
        assert np.allclose(c, -np.poly(m), atol=1e-12)


def test_routh_hurwitz_agrees_with_eigenvalues():
    rng = np.random.default_rng(13)
    for p, ls in _random_locked(rng, 200):
        stable, coeffs, eig = jacobian3_stability(ls, p)
        assert stable == bool(np.max(eig.real) < 0)
    for _ in range(300):
        m = rng.normal(size=(3, 3))
        assert routh_hurwitz3(char_poly3(m)) == bool(np.max(np.linalg.eigvals(m).real) < 0)


def test_mixed_regime_coefficients_negative():
    rng = np.random.default_rng(14)
    n = 0
    while n < 50:
        p = Params2(rng.uniform(0.1, 2), rng.uniform(-2, 0), rng.uniform(0.05, 6), rng.uniform(0, 6))
        ls = locked_state_het(p)
        if ls is None:
            continue
        n += 1
        assert ls.stable
        assert all(c < 0 for c in ls.char_coeffs)


def test_locked_states_in_valid_range():
    rng = np.random.default_rng(15)
    for p, ls in _random_locked(rng, 100):
        assert 0 < ls.l_inf <= p.a * (1 + 1e-12)
        assert ls.R_inf > 1
        lo, hi = locked_brackets(p)
        assert lo * (1 - 1e-9) <= ls.R_inf <= hi * (1 + 1e-9)
        assert ls.r1_inf ** 2 - ls.r2_inf ** 2 == pytest.approx(ls.l_inf, rel=1e-9)


def test_g_increasing_and_single_crossing():
    rng = np.random.default_rng(16)
    for p, _ in _random_locked(rng, 60):
        lo, hi = locked_brackets(p)
        hi = min(hi, lo + 50)
        # the crossing can sit very close to lo, so sample geometrically towards it
        xs = np.unique(np.concatenate([lo + (hi - lo) * np.geomspace(1e-14, 1, 2000)[:-1],
                                       np.linspace(lo, hi, 2002)[1:-1]]))
        g = np.array([_g(x, p.kappa, p.gamma) for x in xs])
        d = g - np.array([_h(x, p) for x in xs])
        assert np.all(np.diff(g) >= -1e-12)
        assert np.count_nonzero(np.diff(np.sign(d[d != 0]))) <= 1


def test_locked_state_matches_simulation():
    p = Params2(1, 0.25, 1, 1)
    ls = locked_state_het(p)
    params = p.to_params()
    tr = integrate(params, initial_state(params, "annulus", np.random.default_rng(2)), IntegrateOptions(t_end=200.0))
    assert tr.r[-1] == pytest.approx([ls.r1_inf, ls.r2_inf], abs=1e-7)
    assert cmath.phase(tr.z[-1, 0] / tr.z[-1, 1]) == pytest.approx(ls.Phi_inf, abs=1e-7)


# ---------------------------------------------------------------- amplitude death


def test_ad_stability_examples():
    assert ad_stability(Params2(1, -2, 5, 1))
    assert not ad_stability(Params2(1, -2, 1, 1))
    with pytest.raises(ContractError):
        ad_stability(Params2(1, 1, 1, 1))


def test_ad_stability_confirmed_by_simulation():
    p = Params2(2, 1, 10, 8)
    lab = classify_by_simulation(p.to_params())
    assert (lab.amplitude.value == "AmplitudeDeath") == ad_stability(p)


def test_ad_jacobian_amplitude_eigenvalues_are_half_f():
    rng = np.random.default_rng(17)
    for _ in range(100):
        a2 = rng.uniform(-2, 2)
        p = Params2(a2 + rng.uniform(0.01, 2), a2, rng.uniform(0.05, 6), rng.uniform(0, 6))
        j = ad_jacobian(p)
        assert j[0, 0] == pytest.approx(f_curve(p) / 2, abs=1e-10)
        assert j[1, 1] == pytest.approx(f_curve(p) / 2, abs=1e-10)


# ---------------------------------------------------------------- classification


def test_classify_het_examples():
    lab = classify_het(Params2(1, 0.5, 1.2, 50))
    assert lab.key == ("Active", "PhaseLocked") and lab.leader_driven
    assert gamma_star(Params2(1, 0.5, 0.3, 0)) < 3
    assert classify_het(Params2(1, 0.5, 0.3, 3)).key == ("Active", "Incoherent")
    rng = np.random.default_rng(18)
    for _ in range(50):
        p = Params2(-0.5, -1, rng.uniform(0.01, 10), rng.uniform(0, 10))
        assert classify_het(p).key == ("AmplitudeDeath", "PhaseLocked")


def test_params2_normalises():
    p = Params2(-1, 2, 1, -3)
    assert (p.alpha1, p.alpha2, p.gamma) == (2, -1, 3)
    with pytest.raises(ContractError):
        Params2(1, 0, 0, 1)


def test_locked_state2_is_plain_record():
    ls = LockedState2(0.1, 2.0, 0.3, 1.0, 0.5, (), False)
    assert ls.residuals == ()
