import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from colloidfield import (
    INWARD,
    OUTWARD,
    CertificateError,
    DomainError,
    ExteriorPoissonSolver,
    PoissonMode,
    closed_form_amplitude,
    decay_exponents,
    homogeneous_share,
    log_grid,
    mode_classification,
    radial_operator,
    real_sph_harm,
    sh_index,
    solve_exterior_poisson,
    solve_mode,
    verify_decay,
)


def _mode(l, gamma, f=None, inner=None, R=100.0, n=2001):
    r = log_grid(R, n)
    f = r ** (-gamma - 2) if f is None else f(r)
    return PoissonMode(decay_exponents(l, 3), gamma, r, f, gamma + 2, inner), r


def test_integer_gamma_rejected():
    with pytest.raises(DomainError):
        mode_classification(3.0)
    with pytest.raises(DomainError):
        mode_classification(0.9)


def test_classification_table():
    tab = mode_classification(2.5, 3, l_max=4)
    assert tab == {0: OUTWARD, 1: OUTWARD, 2: INWARD, 3: INWARD, 4: INWARD}
    assert mode_classification(1.5, 3, 2) == {0: OUTWARD, 1: INWARD, 2: INWARD}


def test_monopole_closed_form():
    mode, r = _mode(0, 2.5)
    u = solve_mode(mode)
    assert np.isclose(closed_form_amplitude(0, 2.5), 0.2666666666666667)
    assert np.max(np.abs(u / (0.2666666666666667 * r**-2.5) - 1)) <= 1e-8


def test_dipole_closed_form():
    mode, r = _mode(1, 2.5)
    u = solve_mode(mode)
    assert np.isclose(closed_form_amplitude(1, 2.5), 1 / 1.75)
    assert np.max(np.abs(u / (r**-2.5 / 1.75) - 1)) <= 1e-8


@pytest.mark.parametrize("l,gamma", [(2, 2.7), (3, 4.5)])
def test_higher_degree_closed_forms(l, gamma):
    mode, r = _mode(l, gamma, inner=gamma + 2)
    assert mode.branch == mode_classification(gamma, 3, l)[l]
    u = solve_mode(mode)
    exact = closed_form_amplitude(l, gamma) * r**-gamma
    assert np.max(np.abs(u / exact - 1)) <= 1e-8


def test_inward_from_unit_radius_differs_by_homogeneous_decay():
    mode, r = _mode(2, 2.7)
    u = solve_mode(mode)
    exact = closed_form_amplitude(2, 2.7) * r**-2.7
    diff = u - exact
    # difference is a multiple of the decaying homogeneous solution r^-3
    k = diff / r**-3.0
    assert np.max(np.abs(k - k[0])) <= 1e-8 * abs(k[0])
    assert homogeneous_share(r, u, 2.7, 3.0) > 0


def test_zero_source():
    mode, r = _mode(1, 2.5, f=np.zeros_like)
    assert np.all(solve_mode(mode) == 0.0)


def test_tail_certificate_enforced():
    r = log_grid(50.0, 101)
    with pytest.raises(CertificateError):
        PoissonMode(decay_exponents(0), 2.5, r, r**-4.5, 4.0)


@settings(max_examples=20, deadline=None)
@given(gamma=st.floats(1.05, 5.9).filter(lambda g: abs(g - round(g)) > 0.05), l=st.integers(0, 4))
def test_residual_small_for_power_sources(gamma, l):
    mode, r = _mode(l, gamma, inner=gamma + 2, n=4001)
    u = solve_mode(mode)
    lu = radial_operator(u, r, l)
    f = r[1:-1] ** (-gamma - 2)
    assert np.sqrt(np.sum((lu - f) ** 2) / np.sum(f**2)) <= 1e-3


def test_vector_source_single_mode():
    sol = solve_exterior_poisson(
        lambda x: (np.linalg.norm(x, axis=1) ** -4.5)[:, None] * np.array([1.0, 0.0, 0.0]),
        2.5, l_max=2,
    )
    y00 = 1 / np.sqrt(4 * np.pi)
    exact = closed_form_amplitude(0, 2.5) * sol.r**-2.5 / y00
    assert np.max(np.abs(sol.u_modes[:, 0, 0] / exact - 1)) <= 1e-8
    assert np.max(np.abs(sol.u_modes[:, :, 1:])) == 0.0
    assert np.max(np.abs(sol.u_modes[:, 1:, 0])) <= 1e-10 * np.max(np.abs(exact))


def test_zero_vector_source():
    sol = solve_exterior_poisson(lambda x: np.zeros_like(x), 2.5, l_max=2, n_r=201)
    assert np.all(sol.u == 0.0)


def test_manufactured_quadrupole():
    gamma = 2.7
    lam = decay_exponents(2).lambda_
    amp = gamma**2 - gamma - lam

    def f(x):
        r = np.linalg.norm(x, axis=1)
        y = real_sph_harm(2, np.arccos(x[:, 2] / r), np.arctan2(x[:, 1], x[:, 0]))[:, sh_index(2, 0)]
        return (amp * r ** (-gamma - 2) * y)[:, None] * np.array([0.0, 1.0, 0.0])

    sol = solve_exterior_poisson(f, gamma, l_max=4, inner_exponent=gamma + 2)
    u = sol.u_modes[:, sh_index(2, 0), 1]
    assert np.max(np.abs(u / sol.r**-gamma - 1)) <= 1e-7


def test_decay_reports():
    r = log_grid(100.0, 401)
    rep = verify_decay(closed_form_amplitude(0, 2.5) * r**-2.5, r, 2.5)
    assert abs(rep.slope + 2.5) <= 0.05 and rep.passed
    tail = verify_decay(r**-2.0, r, 2.5)
    assert abs(tail.slope + 2.0) <= 0.05 and not tail.passed
    zero = verify_decay(np.zeros_like(r), r, 2.5)
    assert not zero.applicable


def test_estimator_predicts_closed_form():
    est = ExteriorPoissonSolver(gamma=2.5, l_max=2, R_max=50.0, n_r=1001)
    est.fit(lambda x: (np.linalg.norm(x, axis=1) ** -4.5)[:, None] * np.array([0.0, 0.0, 1.0]))
    x = np.array([[2.0, 0.0, 0.0], [0.0, 3.0, 4.0], [10.0, 10.0, 1.0]])
    exact = closed_form_amplitude(0, 2.5) * np.linalg.norm(x, axis=1) ** -2.5
    assert np.allclose(est.predict(x)[:, 2], exact, rtol=1e-7)
    assert est.decay_report().passed
    with pytest.raises(DomainError):
        est.predict(np.array([[0.5, 0.0, 0.0]]))
