import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize, root

from extdicke.model import (
    ClassicalState,
    ModelParams,
    auxiliary_f,
    classical_energy,
    classify_region,
    critical_energies,
    effective_energy_surface,
    energy_gradient,
    fixed_points,
    stability_of,
    to_raw_energy,
    to_scaled_energy,
)

REGION_I = ModelParams(gamma=0.3, eta=0.2, j=20)
REGION_II = ModelParams(gamma=0.8, eta=0.2, j=20)
REGION_III = ModelParams(gamma=0.6, eta=2.1, j=20)

couplings = st.floats(0.0, 2.0, allow_nan=False)
freqs = st.floats(0.2, 3.0, allow_nan=False)


def params_strategy():
    return st.builds(ModelParams, omega=freqs, omega0=freqs, gamma=couplings, eta=st.floats(0.0, 4.0), j=st.just(10.0))


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(omega=0.0)
    with pytest.raises(ValueError):
        ModelParams(omega0=-1.0)
    with pytest.raises(ValueError):
        ModelParams(gamma=float("nan"))
    with pytest.raises(ValueError):
        ModelParams(j=1.3).require_quantum()
    assert ModelParams(j=2.5).require_quantum() == 5


def test_state_normalizes_phi_and_rejects_bad_z():
    s = ClassicalState(0.0, 0.0, 0.5, -0.5)
    assert 0.0 <= s.phi < 2 * math.pi
    assert s.phi == pytest.approx(2 * math.pi - 0.5)
    with pytest.raises(ValueError):
        ClassicalState(0.0, 0.0, 1.01, 0.0)


def test_figure_regions():
    assert classify_region(REGION_I).tag == "I"
    assert classify_region(REGION_II).tag == "II"
    assert classify_region(REGION_III).tag == "III"
    assert auxiliary_f(REGION_I) == pytest.approx(0.56)
    assert auxiliary_f(REGION_III) == pytest.approx(3.54)


def test_region_boundaries():
    # f = 1 exactly belongs to II; eta = omega0 belongs to III
    assert classify_region(ModelParams(gamma=0.5, eta=0.0)).tag == "II"
    assert classify_region(ModelParams(gamma=0.0, eta=1.0)).tag == "III"
    assert classify_region(ModelParams(gamma=0.0, eta=0.99)).tag == "I"


@given(params_strategy())
def test_region_rule(p):
    f = (4 * p.gamma**2 + p.eta * p.omega) / (p.omega * p.omega0)
    tag = classify_region(p).tag
    if f < 1:
        assert tag == "I"
    else:
        assert tag == ("II" if p.eta < p.omega0 else "III")


def test_critical_energies_region_iii():
    c = critical_energies(REGION_III)
    assert c.eps_min == pytest.approx(-0.8612429378531, abs=1e-12)
    assert c.eps_s == pytest.approx(-0.2380952380952, abs=1e-12)
    assert c.eps_minus == pytest.approx(0.05)
    assert c.eps_plus == pytest.approx(2.05)
    assert critical_energies(REGION_I).eps_min == pytest.approx(-0.9)
    assert critical_energies(REGION_I).eps_s is None


@settings(max_examples=1000, deadline=None)
@given(params_strategy())
def test_critical_energy_ordering(p):
    c = critical_energies(p)
    assert c.eps_min <= c.eps_minus < c.eps_plus
    if c.eps_s is not None:
        # at gamma = 0 the saddles and minima coincide
        assert c.eps_min - 1e-12 <= c.eps_s <= c.eps_minus + 1e-12


@settings(max_examples=200, deadline=None)
@given(params_strategy())
def test_effective_surface_bounded_by_ground_energy(p):
    z, phi = np.meshgrid(np.linspace(-1, 1, 81), np.linspace(0, 2 * np.pi, 73))
    v = effective_energy_surface(z, phi, p)
    c = critical_energies(p)
    assert v.min() >= c.eps_min - 1e-12
    assert v.min() <= c.eps_min + 0.05


def _minimize_energy(p):
    """Global minimum of the scaled energy by multistart BFGS in (Q, P, phi, z=tanh)."""
    def h(x):
        Q, P, phi, u = x
        z = math.tanh(u)
        return classical_energy(ClassicalState(Q * math.sqrt(p.j), P * math.sqrt(p.j), z, phi), p)

    best = math.inf
    for Q0 in (-1.0, 0.0, 1.0):
        for phi0 in (0.0, 1.6, 3.1):
            r = minimize(h, [Q0, 0.0, phi0, -0.5], method="BFGS", options={"gtol": 1e-10})
            best = min(best, r.fun)
    return best


@pytest.mark.parametrize("p", [REGION_I, REGION_II, REGION_III], ids=["I", "II", "III"])
def test_ground_energy_matches_minimization(p):
    assert _minimize_energy(p) == pytest.approx(critical_energies(p).eps_min, abs=1e-7)


def test_saddle_matches_root_search():
    p = REGION_III
    rj = math.sqrt(p.j)

    def grad(x):
        return energy_gradient(ClassicalState(x[0] * rj, x[1] * rj, x[3], x[2]), p)

    sol = root(grad, [0.1, 0.0, 1.5, -0.4], tol=1e-14)
    assert sol.success
    st_ = ClassicalState(sol.x[0] * rj, sol.x[1] * rj, sol.x[3], sol.x[2])
    assert classical_energy(st_, p) == pytest.approx(critical_energies(p).eps_s, abs=1e-10)
    assert stability_of(st_, p)[0] == "saddle"


@pytest.mark.parametrize("p", [REGION_I, REGION_II, REGION_III, ModelParams(gamma=0.5), ModelParams(eta=1.0, gamma=0.2)])
def test_fixed_points_are_stationary(p):
    c = critical_energies(p)
    known = {c.eps_min, c.eps_minus, c.eps_plus, c.eps_s}
    for fp in fixed_points(p):
        assert np.max(np.abs(energy_gradient(fp.state, p))) < 1e-12
        e = classical_energy(fp.state, p)
        assert min(abs(e - k) for k in known if k is not None) < 1e-12


def test_fixed_point_kinds():
    kinds = lambda p: sorted(fp.kind for fp in fixed_points(p))
    assert kinds(REGION_I) == ["global-minimum", "local-maximum"]
    assert kinds(REGION_II) == ["degenerate-minimum", "degenerate-minimum", "local-maximum", "saddle"]
    assert kinds(REGION_III) == ["degenerate-minimum"] * 2 + ["local-maximum"] * 2 + ["saddle"] * 2
    for fp in fixed_points(REGION_II):
        assert fp.stable == (fp.kind == "degenerate-minimum")
        if fp.kind == "degenerate-minimum":
            assert fp.state.z == pytest.approx(-1 / auxiliary_f(REGION_II))


def test_merged_point_at_f_equal_one():
    p = ModelParams(gamma=0.5)
    south = [fp for fp in fixed_points(p) if fp.state.z == -1.0][0]
    assert south.kind == "global-minimum" and south.stable
    assert south.curvature == "marginal"


def test_energy_scaling_roundtrip():
    p = ModelParams(omega0=2.0, j=5)
    assert to_scaled_energy(to_raw_energy(0.37, p), p) == pytest.approx(0.37)
    np.testing.assert_allclose(to_raw_energy(np.array([1.0, -1.0]), p), [10.0, -10.0])
