import math

import numpy as np
import pytest

from modalrm.constants import MU_EARTH
from modalrm.errors import SingularityError
from modalrm.integrate import integrate
from modalrm.keplerian import (
    CWBasis,
    EccentricBasis,
    cartesian_to_spherical_matrix,
    cw_constants,
    cw_constants_raw,
    cw_plant,
    cw_psi,
    eccentric_constants,
    keplerian_plant,
    plant_matrix_lvlh,
    spherical_to_cartesian_matrix,
)
from modalrm.orbits import OrbitElements, elements_to_state, lvlh_frame, two_body_gradient
from modalrm.vop import PerturbationModel
from oracles import hcw

N = 1.1e-3


def _linear_stm(plant, t0, t1):
    def rhs(t, y):
        return (plant(t) @ y.reshape(6, 6)).ravel()

    return integrate(rhs, np.eye(6).ravel(), t0, t1, 1e-12)


# -- CW ----------------------------------------------------------------------


def test_cw_first_column():
    np.testing.assert_array_equal(cw_psi(N, 0.0)[:, 0], [0, 1, 0, 0, 0, 0])


def test_cw_basis_matches_closed_form(cw, rng):
    for _ in range(100):
        x0 = rng.standard_normal(6) * np.array([1, 1, 1, 1e-3, 1e-3, 1e-3])
        t = rng.uniform(0.0, 2 * math.pi / N)
        c = cw_constants(x0, N, cw)
        truth = hcw(x0, N, t)
        assert np.linalg.norm(cw.state_from_constants(c, t) - truth) < 1e-10 * max(1.0, np.linalg.norm(truth))


def test_cw_constants_closed_form():
    x0 = np.array([0.3, -1.2, 0.5, 2e-4, -3e-4, 1e-4])
    x, y, z, xd, yd, zd = x0
    expected = [y - 2 / N * xd, -6 * N * x - 3 * yd, 3 * N * x + 2 * yd, xd, zd / 2, N / 2 * z]
    np.testing.assert_allclose(cw_constants_raw(x0, N), expected, rtol=1e-15)


def test_cw_constants_examples(cw, rng):
    np.testing.assert_array_equal(cw_constants(np.zeros(6), N), np.zeros(6))
    c = cw_constants_raw([0, 2.5, 0, 0, 0, 0], N)
    np.testing.assert_allclose(c, [2.5, 0, 0, 0, 0, 0])
    # drift-free initial condition
    x = 0.7
    assert cw_constants_raw([x, 0, 0, 0, -2 * N * x, 0], N)[1] == pytest.approx(0.0, abs=1e-18)
    for _ in range(20):
        x0 = rng.standard_normal(6)
        np.testing.assert_allclose(cw_constants(x0, N, cw), cw.constants_from_state(x0, 0.0), rtol=1e-12, atol=1e-12)


def test_cw_plant_limit():
    oe = OrbitElements(7000.0, 0.0, 0.3, 0.0, 0.0, 0.0)
    n = oe.n(MU_EARTH)
    A = keplerian_plant(oe)(123.0)
    assert A[3, 0] == pytest.approx(3 * n**2, rel=1e-10)
    assert A[3, 4] == pytest.approx(2 * n, rel=1e-12)
    assert A[4, 3] == pytest.approx(-2 * n, rel=1e-12)
    assert A[5, 2] == pytest.approx(-(n**2), rel=1e-10)
    np.testing.assert_allclose(A, cw_plant(n), atol=1e-15)


# -- eccentric -----------------------------------------------------------------


def test_table1_constants(table1_basis, table1_x0, table1_chief):
    c = eccentric_constants(table1_x0, table1_chief, basis=table1_basis)
    np.testing.assert_allclose(c, [4.3, 0.0, 7.07, 3.60, 3.61, -0.014], rtol=0.05, atol=1e-3)


def test_eccentric_reconstruction(table1_basis):
    b = table1_basis
    sol = _linear_stm(b.plant, 0.0, b.period)
    for t in np.linspace(0.0, b.period, 40):
        err = np.abs(b.stm(t) - sol(t).reshape(6, 6)).max() / np.abs(sol(t)).max()
        assert err < 1e-5


def test_plane_decoupling(table1_basis):
    for t in np.linspace(0.0, table1_basis.period, 30):
        P = table1_basis.psi(t)
        np.testing.assert_allclose(P[[0, 1, 3, 4]][:, [1, 3]], 0.0, atol=1e-14)
        np.testing.assert_allclose(P[[2, 5]][:, [0, 2, 4, 5]], 0.0, atol=1e-14)


def test_offset_circle_mode(table1_basis):
    b = table1_basis
    thetas = b.ctx.theta0 + np.linspace(0.0, 2 * np.pi, 400)
    xy = np.array([b.raw_psi_theta(th)[:2, 4] for th in thetas])
    # algebraic circle fit: x^2 + y^2 + D x + E y + F = 0
    M = np.column_stack([xy, np.ones(len(xy))])
    rhs = -(xy**2).sum(axis=1)
    D, E, F = np.linalg.lstsq(M, rhs, rcond=None)[0]
    center = -0.5 * np.array([D, E])
    radius = math.sqrt(center @ center - F)
    resid = np.abs(np.linalg.norm(xy - center, axis=1) - radius)
    assert resid.max() < 1e-6 * radius
    # the chief eccentricity sets the radius-to-offset ratio
    assert np.linalg.norm(center) > 0.0


def test_eccentric_constants_match_inverse_basis(table1_basis, table1_chief, rng):
    for _ in range(100):
        x0 = rng.standard_normal(6) * np.array([1, 1, 1, 1e-3, 1e-3, 1e-3])
        a = eccentric_constants(x0, table1_chief, basis=table1_basis)
        b = table1_basis.constants_from_state(x0)
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)
    np.testing.assert_array_equal(eccentric_constants(np.zeros(6), table1_chief, basis=table1_basis), 0.0)


def test_spherical_map(table1_chief):
    r, rd = 8256.0, 1.3
    F = cartesian_to_spherical_matrix(r, rd)
    np.testing.assert_allclose(F @ spherical_to_cartesian_matrix(r, rd), np.eye(6), atol=1e-13)
    Fc = cartesian_to_spherical_matrix(7000.0, 0.0)
    assert Fc[4, 1] == 0.0 and Fc[5, 2] == 0.0
    s = elements_to_state(table1_chief)
    rdot = s.r @ s.v / np.linalg.norm(s.r)
    assert cartesian_to_spherical_matrix(np.linalg.norm(s.r), rdot)[1, 1] == pytest.approx(1 / 8256.0, rel=1e-12)


def test_monodromy_double_unity(table1_chief):
    T = table1_chief.period(MU_EARTH)
    M = _linear_stm(keplerian_plant(table1_chief), 0.0, T).y_final.reshape(6, 6)
    w = np.linalg.eigvals(M)
    assert np.sum(np.abs(w - 1.0) < 1e-4) >= 2
    assert np.linalg.det(M) == pytest.approx(1.0, abs=1e-6)


def test_j2_plant_difference_size(table1_chief):
    s = elements_to_state(table1_chief)
    model = PerturbationModel()
    acc, grad, jerk = model.evaluate(s.r, s.v)
    A_pm = plant_matrix_lvlh(lvlh_frame(s), two_body_gradient(s.r))
    A_j2 = plant_matrix_lvlh(lvlh_frame(s, accel=acc, jerk=jerk), grad)
    # compare the gravity-gradient blocks; kinematic and Coriolis terms barely change
    ratio = np.linalg.norm((A_j2 - A_pm)[3:, :3]) / np.linalg.norm(A_pm[3:, :3])
    expected = 1.082626e-3 * (6378.137 / 8256.0) ** 2
    assert 0.1 * expected < ratio < 10 * expected


def test_near_circular_matches_cw():
    oe = OrbitElements.from_degrees(7000.0, 1e-4, 30.0, 10.0, 20.0, 40.0)
    ecc = EccentricBasis(oe)
    cwb = CWBasis(oe.n(MU_EARTH))
    for t in np.linspace(0.0, ecc.period, 20):
        a, b = ecc.stm(t), cwb.stm(t)
        assert np.abs(a - b).max() / np.abs(b).max() < 1e-2
    # both first modes are the pure along-track offset
    np.testing.assert_allclose(ecc.mode(1, 0.0), cwb.mode(1, 0.0), atol=1e-2)


def test_singularity_guard_applied():
    oe = OrbitElements.from_degrees(8600.0, 0.2, 25.0, 0.0, 270.0, 90.0)
    b = EccentricBasis(oe)
    assert "q1" in b.guard
    assert np.all(np.isfinite(b.psi(100.0)))
    apsis = OrbitElements(8600.0, 0.2, 0.4, 0.0, 0.0, 0.0)
    assert "e_sin_f0" in EccentricBasis(apsis).guard
    with pytest.raises(SingularityError):
        EccentricBasis(apsis, eps=0.0)
