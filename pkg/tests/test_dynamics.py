import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from extdicke.dynamics import (
    EmptyShellError,
    PoleProximityError,
    eom_rhs,
    integrate,
    poincare_section,
    sample_energy_shell,
)
from extdicke.model import ClassicalState, ModelParams, classical_energy, critical_energies, energy_gradient

REGION_III = ModelParams(gamma=0.6, eta=2.1, j=10)


@settings(max_examples=50, deadline=None)
@given(
    q=st.floats(-3, 3), p=st.floats(-3, 3), z=st.floats(-0.95, 0.95), phi=st.floats(0, 6.28),
    w0=st.floats(0.5, 2.0), g=st.floats(0.0, 1.0), eta=st.floats(0.0, 2.5),
)
def test_rhs_is_hamiltonian_flow(q, p, z, phi, w0, g, eta):
    par = ModelParams(omega=1.3, omega0=w0, gamma=g, eta=eta, j=4)
    s = ClassicalState(q, p, z, phi)
    dh = energy_gradient(s, par)  # d h / d(Q, P, phi, z)
    rj = math.sqrt(par.j)
    expected = [w0 * rj * dh[1], -w0 * rj * dh[0], w0 * dh[3], -w0 * dh[2]]
    np.testing.assert_allclose(eom_rhs(s, par), expected, rtol=1e-12, atol=1e-12)


def test_rhs_pole_guard():
    with pytest.raises(PoleProximityError):
        eom_rhs(ClassicalState(0.1, 0.0, 1.0, 0.0), REGION_III)


def test_matches_scipy_reference():
    w, w0, g, eta = 1.0, 1.0, 0.6, 2.1
    rj = math.sqrt(REGION_III.j)

    def f(t, y):
        # independent transcription of the scaled equations of motion
        Q, P, ph, z = y
        s = math.sqrt(1 - z * z)
        return [w * P, -w * Q - 2 * g * s * math.cos(ph), w0 + z * (eta - 2 * g * Q * math.cos(ph) / s), 2 * g * Q * s * math.sin(ph)]

    s0 = sample_energy_shell(-0.3, REGION_III, 1, seed=2)[0]
    traj = integrate(s0, REGION_III, 5.0, tol=1e-12)
    ref = solve_ivp(f, (0, 5.0), [s0.q / rj, s0.p / rj, s0.phi, s0.z], method="DOP853", rtol=1e-13, atol=1e-13)
    end = traj.final_state
    assert traj.t[-1] == 5.0
    np.testing.assert_allclose([end.q / rj, end.p / rj, end.z], ref.y[[0, 1, 3], -1], atol=1e-9)
    dphi = (end.phi - ref.y[2, -1] + math.pi) % (2 * math.pi) - math.pi
    assert abs(dphi) < 1e-9


def test_energy_conservation_and_status():
    s0 = sample_energy_shell(-0.15, REGION_III, 1, seed=4)[0]
    traj = integrate(s0, REGION_III, 300.0, tol=1e-10)
    assert traj.status == "ok" and not traj.truncated
    assert traj.energy_drift < 1e-9
    assert np.all((traj.phi >= 0) & (traj.phi < 2 * math.pi))
    assert np.all(np.diff(traj.t) > 0)


def test_backward_integration_returns():
    s0 = sample_energy_shell(0.15, REGION_III, 1, seed=1)[0]
    fwd = integrate(s0, REGION_III, 10.0, tol=1e-12)
    back = integrate(fwd.final_state, REGION_III, 0.0, t0=10.0, tol=1e-12)
    end = back.final_state
    assert abs(end.q - s0.q) < 1e-8 and abs(end.z - s0.z) < 1e-8


def test_tolerance_range_enforced():
    s0 = ClassicalState(0.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        integrate(s0, REGION_III, 1.0, tol=1e-3)


def test_pole_truncation_is_flagged():
    # 1 - z^2 starts inside the guard band around the north pole
    s0 = ClassicalState(0.0, 0.0, 1.0 - 2e-11, 0.0)
    traj = integrate(s0, REGION_III, 1.0)
    assert traj.status == "pole" and traj.truncated


@pytest.mark.parametrize("eps", [-0.3, 0.0, 2.1])
def test_shell_samples_on_shell(eps):
    ics = sample_energy_shell(eps, REGION_III, 12, seed=0)
    assert len(ics) == 12
    for s in ics:
        assert s.p == 0.0
        assert classical_energy(s, REGION_III) == pytest.approx(eps, abs=1e-10)
    again = sample_energy_shell(eps, REGION_III, 12, seed=0)
    assert [s.q for s in again] == [s.q for s in ics]


def test_shell_edge_cases():
    with pytest.raises(EmptyShellError):
        sample_energy_shell(-1.5, REGION_III, 3)
    at_min = sample_energy_shell(critical_energies(REGION_III).eps_min, REGION_III, 3)
    assert all(s.z == pytest.approx(-1 / 3.54) for s in at_min)


def test_section_points_lie_on_plane_and_shell():
    ics = sample_energy_shell(-0.3, REGION_III, 3, seed=7)
    secs = poincare_section(ics, REGION_III, t_end=200.0)
    for sec in secs:
        assert sec.status == "ok" and len(sec.points) > 10
        for pt in sec.points:
            assert abs(pt.p) < 1e-9
            s = ClassicalState(pt.q, pt.p, pt.z, pt.phi)
            assert classical_energy(s, REGION_III) == pytest.approx(-0.3, abs=1e-8)
        t = [pt.t_cross for pt in sec.points]
        assert t[0] == 0.0 and np.all(np.diff(t) > 0)
        dirs = [pt.direction for pt in sec.points[1:]]
        # crossings alternate in sign along a trajectory
        assert all(a == -b for a, b in zip(dirs, dirs[1:]))


def test_section_direction_filter_and_workers():
    ics = sample_energy_shell(0.0, REGION_III, 4, seed=3)
    both = poincare_section(ics, REGION_III, t_end=100.0)
    up = poincare_section(ics, REGION_III, t_end=100.0, direction="up", workers=2)
    for b, u in zip(both, up):
        assert [p for p in b.points if p.direction == 1] == u.points
    with pytest.raises(ValueError):
        poincare_section(ics, REGION_III, direction="sideways")
    mixed = ics[:1] + sample_energy_shell(0.5, REGION_III, 1)
    with pytest.raises(ValueError):
        poincare_section(mixed, REGION_III)
