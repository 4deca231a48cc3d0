import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import quad_vec

from modalrm.constants import J2_EARTH, MU_EARTH, R_EARTH
from modalrm.errors import ValidationError
from modalrm.vop import (
    KEPLERIAN,
    PerturbationModel,
    delta_plant,
    first_order_solution,
    j2_model,
    omega_matrix,
    propagate_constants_full,
    propagate_constants_linear,
)

K = 1.5 * MU_EARTH * J2_EARTH * R_EARTH**2


def _j2_only(r):
    a, _, _ = j2_model(r, np.zeros(3))
    rn = np.linalg.norm(r)
    return a + MU_EARTH / rn**3 * np.asarray(r)


def test_j2_equatorial_is_radial():
    r = 8000.0
    np.testing.assert_allclose(_j2_only([r, 0, 0]), [-K / r**4, 0, 0], rtol=1e-13)


def test_j2_polar_substitution():
    r = 8000.0
    # rhat = K: (1 - 5) rhat + 2 K = -2 K
    np.testing.assert_allclose(_j2_only([0, 0, r]), [0, 0, 2 * K / r**4], rtol=1e-13, atol=1e-20)


def test_j2_gradient_and_jerk(rng):
    for _ in range(20):
        r = rng.standard_normal(3)
        r *= rng.uniform(7000.0, 20000.0) / np.linalg.norm(r)
        v = rng.standard_normal(3)
        a, G, j = j2_model(r, v)
        h = 1e-3
        fd = np.column_stack([(j2_model(r + h * e, v)[0] - j2_model(r - h * e, v)[0]) / (2 * h) for e in np.eye(3)])
        assert np.abs(G - fd).max() / np.abs(G).max() < 1e-6
        assert np.abs(G - G.T).max() <= 1e-14 * np.abs(G).max()
        np.testing.assert_allclose(j, G @ v, rtol=1e-14)


def test_j2_zero_position_rejected():
    with pytest.raises(ValidationError):
        j2_model(np.zeros(3), np.zeros(3))


def test_full_propagation_unperturbed_constant(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    tr = propagate_constants_full(b, c0, (0.0, 3 * b.period), model=KEPLERIAN, n_out=61)
    assert np.abs(tr.c - c0).max() / np.linalg.norm(c0) < 1e-9


def test_full_propagation_j2_opposing_c5_c6(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    tr = propagate_constants_full(b, c0, (0.0, 3 * b.period), model=PerturbationModel(), n_out=301)
    d5 = tr.c[:, 4] - c0[4]
    d6 = tr.c[:, 5] - c0[5]
    assert np.abs(d5).max() > 1e-3 and np.abs(d6).max() > 1e-3
    # opposing behaviour: the variations are anticorrelated
    assert np.corrcoef(d5, d6)[0, 1] < -0.5


def test_impulse_jump(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    tb = 0.37 * b.period
    dv = np.array([1e-5, -2e-5, 5e-6])
    tr = propagate_constants_full(b, c0, (0.0, b.period), model=KEPLERIAN, impulses=[(tb, dv)], t_eval=[0.0, tb - 1.0, 0.9 * b.period])
    np.testing.assert_allclose(tr.c[1], c0, rtol=1e-9)
    np.testing.assert_allclose(tr.c[2], c0 + b.control_influence(tb) @ dv, rtol=1e-8, atol=1e-9 * np.linalg.norm(c0))


def test_linear_null_dynamics_exact(table1_basis):
    c0 = np.array([1.0, -2.0, 0.5, 0.3, 4.0, -0.1])
    tr = propagate_constants_linear(table1_basis, c0, (0.0, 2 * table1_basis.period), n_out=11)
    np.testing.assert_array_equal(tr.c, np.tile(c0, (11, 1)))


def test_linear_constant_control_quadrature(table1_basis):
    b = table1_basis
    u = np.array([1e-7, -3e-7, 2e-7])
    c0 = np.zeros(6)
    t1 = 0.6 * b.period
    tr = propagate_constants_linear(b, c0, (0.0, t1), control=lambda t: u, t_eval=[0.0, t1], tol=1e-12)
    integral, _ = quad_vec(lambda t: b.control_influence(t), 0.0, t1, epsrel=1e-12, epsabs=0.0)
    expected = integral @ u
    assert np.linalg.norm(tr.c[-1] - expected) < 1e-9 * np.linalg.norm(expected)


def test_linear_and_full_share_the_equation(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    span = (0.0, b.period)
    model = PerturbationModel()
    full = propagate_constants_full(b, c0, span, model=model, n_out=21, tol=1e-12)
    lin = propagate_constants_linear(b, c0, span, delta_A=delta_plant(b, model, span), n_out=21, tol=1e-12)
    assert np.abs(full.c - lin.c).max() < 1e-7 * np.linalg.norm(c0)


def test_reconstruction_tracks_nonlinear_truth(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    tr = propagate_constants_full(b, c0, (0.0, b.period), model=PerturbationModel(), dynamics="nonlinear", n_out=41)
    assert all("nonlinear" not in f for f in tr.flags)
    assert np.isfinite(tr.x).all()


def test_linear_regime_flag(table1_basis):
    b = table1_basis
    c0 = b.constants_from_state(np.array([0.0, 30.0, 0.0, 0.0, 0.0, 0.0]))
    with pytest.warns(RuntimeWarning, match="linear regime"):
        tr = propagate_constants_full(b, c0, (0.0, 100.0), model=KEPLERIAN, n_out=3)
    assert all("nonlinear" in f for f in tr.flags)


def test_first_order_zero_omega(table1_basis):
    c0 = np.arange(1.0, 7.0)
    t = 0.4 * table1_basis.period
    np.testing.assert_allclose(first_order_solution(table1_basis, c0, None, t), table1_basis.psi(t) @ c0)


def test_first_order_constant_omega(cw, rng):
    Om = rng.standard_normal((6, 6))
    eps, t = 1e-4, 500.0
    c0 = rng.standard_normal(6)
    x1 = first_order_solution(cw, c0, lambda s: Om, t, epsilon=eps)
    exact = cw.psi(t) @ sla.expm(eps * Om * t) @ c0
    bound = (eps * np.linalg.norm(Om, 2) * t) ** 2 / 2 * np.linalg.norm(c0) * np.linalg.norm(cw.psi(t), 2) * 1.5
    assert np.linalg.norm(x1 - exact) < bound


def test_first_order_error_scaling(table1_basis, table1_x0):
    b = table1_basis
    c0 = b.constants_from_state(table1_x0)
    span = (0.0, b.period)
    ts = np.linspace(*span, 9)[1:]
    errs = []
    for f in (1.0, 0.5):
        model = PerturbationModel().scaled(f)
        Om = omega_matrix(b, delta_plant(b, model, span))
        full = propagate_constants_full(b, c0, span, model=model, t_eval=ts, tol=1e-12)
        approx = np.array([first_order_solution(b, c0, Om, t) for t in ts])
        errs.append(np.abs(approx - full.x).max())
    assert errs[0] / errs[1] >= 3.5


def test_csv_header(table1_basis):
    tr = propagate_constants_linear(table1_basis, np.ones(6), (0.0, 10.0), n_out=3)
    head = tr.to_csv().splitlines()[0].split(",")
    assert head == ["t", "c1", "c2", "c3", "c4", "c5", "c6", "x", "y", "z", "xd", "yd", "zd", "flags"]
