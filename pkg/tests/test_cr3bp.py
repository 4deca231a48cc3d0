import numpy as np
import pytest

from modalrm.cr3bp import (
    Cr3bpState,
    cr3bp_jacobian,
    cr3bp_rhs,
    find_periodic_orbit,
    jacobi_constant,
    libration_point,
    propagate,
)
from modalrm.errors import ValidationError
from modalrm.periodic import PeriodicOrbit


def test_l2_is_equilibrium():
    y = np.concatenate([libration_point("L2"), np.zeros(3)])
    np.testing.assert_allclose(cr3bp_rhs(y), 0.0, atol=1e-13)


def test_jacobian_against_central_differences(rng):
    for _ in range(20):
        y = np.concatenate([rng.uniform([0.8, -0.2, -0.2], [1.2, 0.2, 0.2]), rng.uniform(-0.3, 0.3, 3)])
        J = cr3bp_jacobian(y)
        h = 1e-6
        fd = np.column_stack([(cr3bp_rhs(y + h * e) - cr3bp_rhs(y - h * e)) / (2 * h) for e in np.eye(6)])
        assert np.abs(J - fd).max() < 1e-6


def test_rhs_with_stm_returns_variational_rate():
    y = np.array([1.1, 0.0, 0.05, 0.0, 0.2, 0.0])
    dy, dphi = cr3bp_rhs(Cr3bpState(y[:3], y[3:]), stm=np.eye(6))
    np.testing.assert_allclose(dy, cr3bp_rhs(y))
    np.testing.assert_allclose(dphi, cr3bp_jacobian(y))


def test_singularity_rejected():
    from modalrm.constants import MU_EARTH_MOON

    y = np.array([1.0 - MU_EARTH_MOON, 0.0, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        cr3bp_rhs(y)


def test_stable_halo_closure_and_jacobi(stable_halo):
    assert stable_halo.closure_error() < 1e-10
    sol = propagate(stable_halo.initial_state, stable_halo.period, stable_halo.mu)
    c0 = jacobi_constant(stable_halo.initial_state, stable_halo.mu)
    cs = [jacobi_constant(sol(t), stable_halo.mu) for t in np.linspace(0, stable_halo.period, 50)]
    assert np.max(np.abs(np.array(cs) - c0)) < 1e-9


def test_stable_halo_multipliers_on_unit_circle(stable_halo):
    w = np.linalg.eigvals(stable_halo.monodromy)
    unity = np.abs(w - 1.0) < 1e-4
    assert unity.sum() == 2
    # a defective double root moves by sqrt(perturbation): judge the pair by its product
    assert abs(np.prod(w[unity]) - 1.0) < 1e-9
    assert np.max(np.abs(np.abs(w[~unity]) - 1.0)) < 1e-6
    assert np.linalg.det(stable_halo.monodromy) == pytest.approx(1.0, abs=1e-6)


def test_unstable_halo_has_real_pair(unstable_halo):
    w = np.linalg.eigvals(unstable_halo.monodromy)
    real = w[np.abs(w.imag) < 1e-9].real
    lam = real.max()
    assert lam > 1.0
    assert np.min(np.abs(real * lam - 1.0)) < 1e-6
    assert np.linalg.det(unstable_halo.monodromy) == pytest.approx(1.0, abs=1e-6)


def test_halo_period_and_branch(stable_halo):
    from modalrm.constants import days_to_tu

    assert stable_halo.period == pytest.approx(days_to_tu(9.504), abs=1e-6)
    assert stable_halo.initial_state[2] > 0.0
    assert stable_halo.metadata["family"] == "L2"


def test_southern_branch_mirrors_northern(stable_halo):
    south = find_periodic_orbit("L2", "southern", 9.504)
    mirror = stable_halo.initial_state * np.array([1, 1, -1, 1, 1, -1])
    np.testing.assert_allclose(south.initial_state, mirror, atol=1e-9)


def test_stm_against_finite_differences(stable_halo):
    x0 = stable_halo.initial_state
    T = stable_halo.period
    M = stable_halo.monodromy
    h = 1e-7
    cols = []
    for e in np.eye(6):
        p = propagate(x0 + h * e, T).y_final
        m = propagate(x0 - h * e, T).y_final
        cols.append((p - m) / (2 * h))
    assert np.abs(np.column_stack(cols) - M).max() < 1e-5


def test_orbit_json_round_trip(stable_halo):
    back = PeriodicOrbit.from_json(stable_halo.to_json())
    np.testing.assert_array_equal(back.initial_state, stable_halo.initial_state)
    assert back.period == stable_halo.period
    assert back.metadata == stable_halo.metadata


@pytest.mark.parametrize("kw", [dict(branch="eastern", target_period_days=9.5), dict(target_period_days=None)])
def test_find_periodic_orbit_validation(kw):
    with pytest.raises(ValidationError):
        find_periodic_orbit("L2", **kw)
