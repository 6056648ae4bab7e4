import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signflow.climate import (
    BudykoParams,
    SellersParams,
    budyko_emission,
    insolation_profile,
    make_ebm_nonlinearity,
    sellers_coalbedo,
    sellers_emission,
)
from signflow.errors import DomainFault
from signflow.grid import BoundaryKind, StateProfile, natural_boundary
from signflow.solver import ControlSchedule, evolve
from signflow.spectral import eigenpairs

SELLERS = SellersParams(Q=340.0, a_i=0.38, a_f=0.7, eta_smooth=5.0)
BUDYKO = BudykoParams(A=202.0, B=1.9, Q=340.0, a_i=0.38, a_f=0.7)


def test_coalbedo_ramp_points():
    u_s, eta = SELLERS.u_s, SELLERS.eta_smooth
    assert sellers_coalbedo(u_s - 2 * eta, SELLERS) == pytest.approx(SELLERS.a_i)
    assert sellers_coalbedo(u_s, SELLERS) == pytest.approx((SELLERS.a_i + SELLERS.a_f) / 2)
    assert sellers_coalbedo(u_s + eta, SELLERS) == pytest.approx(SELLERS.a_f)


@settings(max_examples=50, deadline=None)
@given(st.floats(200, 320), st.floats(0, 20))
def test_coalbedo_nondecreasing(u, du):
    assert sellers_coalbedo(u + du, SELLERS) >= sellers_coalbedo(u, SELLERS)


def test_budyko_emission_examples():
    assert budyko_emission(0.0, BUDYKO) == BUDYKO.A
    unit = BudykoParams(A=0.0, B=1.0, Q=0.0, a_i=0.3, a_f=0.6)
    assert budyko_emission(288.15, unit) == pytest.approx(288.15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-300, 300), st.floats(-300, 300))
def test_budyko_emission_is_affine(u1, u2):
    diff = budyko_emission(u1 + u2, BUDYKO) - budyko_emission(u2, BUDYKO)
    assert diff == pytest.approx(BUDYKO.B * u1, rel=1e-9, abs=1e-9)


def test_sellers_emission_examples():
    grey = SellersParams(Q=0.0, a_i=0.3, a_f=0.6, m_opacity=0.0)
    assert sellers_emission(288.0, grey) == pytest.approx(5.67e-8 * 288.0 ** 4)
    assert sellers_emission(0.0, SELLERS) == 0.0
    with pytest.raises(DomainFault):
        sellers_emission(-1.0, SELLERS)


def test_sellers_emission_monotone_for_small_opacity():
    p = SellersParams(Q=0.0, a_i=0.3, a_f=0.6, m_opacity=0.05)
    u = np.linspace(0.0, 350.0, 2001)
    assert np.all(np.diff(sellers_emission(u, p)) >= 0)


def test_linear_case_gives_nu_equal_b():
    p = BudykoParams(A=5.0, B=2.0, Q=0.0, a_i=0.3, a_f=0.6)
    f = make_ebm_nonlinearity(p)
    u = np.linspace(-50, 50, 11)
    np.testing.assert_allclose(f(np.zeros_like(u), 0.0, u), -2.0 * u)
    assert f.nu == pytest.approx(2.0) and f.theta == 1.0


@pytest.mark.parametrize("params", [SELLERS, BUDYKO])
def test_recentred_reaction_vanishes_at_zero(params):
    f = make_ebm_nonlinearity(params)
    x = np.linspace(-1, 1, 17)
    assert np.all(f(x, 0.0, np.zeros_like(x)) == 0.0)
    assert f.gamma_star <= f.nu


def test_tabulated_insolation():
    S = insolation_profile({"x": [-1, 0, 1], "values": [0.5, 1.5, 0.5]})
    np.testing.assert_allclose(S(np.array([-1.0, -0.5, 0.0])), [0.5, 1.0, 1.5])
    with pytest.raises(ValueError):
        insolation_profile({"x": [0, -1], "values": [1, 2]})


def test_emission_law_must_match_params():
    with pytest.raises(ValueError):
        make_ebm_nonlinearity(SELLERS, emission_choice="budyko")


def test_ebm_run_on_legendre_operator(legendre_512):
    grid, a, op = legendre_512
    assert natural_boundary(a).kind is BoundaryKind.WEIGHTED_NEUMANN
    es = eigenpairs(a, natural_boundary(a), 6)
    np.testing.assert_allclose(es.lambdas, [0, 2, 6, 12, 20, 30], rtol=1e-2, atol=1e-2)
    f = make_ebm_nonlinearity(BUDYKO)
    u0 = StateProfile(grid, 5.0 * (1 - grid.centers ** 2))
    traj = evolve(u0, ControlSchedule.constant(grid, 0.0, 0.05), f, op, 1e-4, 100)
    assert np.all(np.isfinite(traj.final.values))
    assert np.min(traj.values()) >= -1e-10
