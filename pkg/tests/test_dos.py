import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from extdicke.dos import (
    BelowGroundError,
    NoRealRootsError,
    default_eps_grid,
    detect_discontinuities,
    dos,
    dos_branch,
    dos_curve,
    dos_point,
    dos_values,
    inner_roots,
    mc_dos_oracle,
    phi0,
    shell_roots,
)
from extdicke.model import ModelParams, critical_energies, effective_energy_surface

REGION_I = ModelParams(gamma=0.3, eta=0.2)
REGION_II = ModelParams(gamma=0.8, eta=0.2)
REGION_III = ModelParams(gamma=0.6, eta=2.1)
FIGURE_SETS = [REGION_I, REGION_II, REGION_III]


def _grid_fraction(eps, p, n=2001):
    """Area fraction of {V_eff <= eps} on a midpoint grid."""
    z = -1 + (np.arange(n) + 0.5) * 2 / n
    phi = (np.arange(n) + 0.5) * 2 * np.pi / n
    v = effective_energy_surface(z[:, None], phi[None, :], p)
    return np.mean(v <= eps)


def test_shell_roots_match_bisection():
    p = REGION_III
    for eps in (-0.5, 0.0, 1.0):
        zm, zp = shell_roots(eps, p)
        # V_eff at phi = 0 has its minimum at z = -1/f = -1/3.54
        fun = lambda z: effective_energy_surface(z, 0.0, p) - eps  # noqa: E731
        a = brentq(fun, -1.0, -1 / 3.54) if fun(-1.0) > 0 else None
        b = brentq(fun, -1 / 3.54, 1.0) if fun(1.0) > 0 else None
        if a is not None:
            assert zm == pytest.approx(a, abs=1e-12)
        if b is not None:
            assert zp == pytest.approx(b, abs=1e-12)


def test_inner_roots_and_degenerate_cases():
    z1, z2 = inner_roots(0.5, REGION_III)
    for z in (z1, z2):
        assert 1.05 * z * z + z - 0.5 == pytest.approx(0.0, abs=1e-14)
    z1, z2 = inner_roots(0.3, ModelParams(gamma=0.5))
    assert z1 == -math.inf and z2 == pytest.approx(0.3)
    with pytest.raises(NoRealRootsError):
        inner_roots(-5.0, REGION_III)
    with pytest.raises(NoRealRootsError):
        shell_roots(0.0, ModelParams())


def test_phi0_range_and_poles():
    z = np.linspace(-0.99, 0.99, 101)
    v = phi0(z, 0.2, REGION_II)
    assert np.all((v >= 0) & (v <= math.pi / 2))
    with pytest.raises(ValueError):
        phi0(1.0, 0.0, REGION_II)


def test_below_ground_raises():
    with pytest.raises(BelowGroundError):
        dos(-2.0, REGION_I)
    assert dos(critical_energies(REGION_III).eps_min, REGION_III) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("p", FIGURE_SETS, ids=["I", "II", "III"])
def test_saturation_above_eps_plus(p):
    c = critical_energies(p)
    for eps in (c.eps_plus + 1e-9, c.eps_plus + 0.3, 10.0):
        assert dos(eps, p) == 1.0


@pytest.mark.parametrize("p", FIGURE_SETS, ids=["I", "II", "III"])
def test_matches_grid_area_fraction(p):
    c = critical_energies(p)
    for eps in np.linspace(c.eps_min + 0.05, c.eps_plus - 0.05, 7):
        assert dos(eps, p) == pytest.approx(_grid_fraction(eps, p), abs=3e-3)


def test_uncoupled_closed_form():
    p = ModelParams(eta=0.4)
    for eps in (-0.7, 0.0, 0.9):
        z = (-1 + math.sqrt(1 + 4 * 0.2 * eps)) / (2 * 0.2)
        assert dos(eps, p) == pytest.approx((z + 1) / 2, abs=1e-14)


def test_branches_agree_at_continuous_boundaries():
    # log singularities in II/III are continuous in value
    c = critical_energies(REGION_II)
    assert dos_branch(c.eps_minus, REGION_II, 0) == pytest.approx(dos_branch(c.eps_minus, REGION_II, 1), abs=1e-9)
    c = critical_energies(REGION_III)
    assert dos_branch(c.eps_s, REGION_III, 0) == pytest.approx(dos_branch(c.eps_s, REGION_III, 1), abs=1e-9)
    with pytest.raises(ValueError):
        dos_branch(0.0, REGION_I, 2)


def test_subregion_numbering():
    c = critical_energies(REGION_III)
    assert [dos_point(e, REGION_III).subregion for e in (-0.5, -0.1, 1.0, 3.0)] == [0, 1, 2, 3]
    assert dos_point(c.eps_minus + 0.5, REGION_II).subregion == 1


@settings(max_examples=60, deadline=None)
@given(
    gamma=st.floats(0.05, 1.2),
    eta=st.floats(0.0, 3.0),
    u=st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6),
)
def test_dos_monotone_and_bounded(gamma, eta, u):
    p = ModelParams(gamma=gamma, eta=eta)
    c = critical_energies(p)
    eps = np.sort(c.eps_min + np.asarray(u) * (c.eps_plus + 0.5 - c.eps_min))
    v = dos_values(eps, p)
    assert np.all((v >= 0) & (v <= 1))
    assert np.all(np.diff(v) >= -1e-9)


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(0.05, 1.2), eta=st.floats(0.0, 3.0), u=st.floats(0.02, 0.98))
def test_dos_continuous_away_from_jumps(gamma, eta, u):
    p = ModelParams(gamma=gamma, eta=eta)
    c = critical_energies(p)
    eps = c.eps_min + u * (c.eps_plus - c.eps_min)
    jumps = [c.eps_plus] + ([c.eps_minus] if c.eps_s is not None else [])
    if min(abs(eps - j) for j in jumps) < 1e-5:
        return
    assert abs(dos(eps + 1e-9, p) - dos(eps, p)) < 1e-5


def test_default_grid_is_sorted_and_bracketed():
    g = default_eps_grid(REGION_III)
    c = critical_energies(REGION_III)
    assert np.all(np.diff(g) > 0)
    assert g[0] == c.eps_min and g[-1] == pytest.approx(c.eps_plus + 0.5)
    assert np.min(np.abs(g - c.eps_s)) < 1e-6


@pytest.mark.parametrize(
    "p, expected",
    [
        (REGION_I, [("jump", "eps_plus")]),
        (REGION_II, [("logarithmic", "eps_minus"), ("jump", "eps_plus")]),
        (REGION_III, [("logarithmic", "eps_s"), ("jump", "eps_minus"), ("jump", "eps_plus")]),
    ],
    ids=["I", "II", "III"],
)
def test_discontinuity_census(p, expected):
    found = detect_discontinuities(p)
    assert [(d.kind, d.label) for d in found] == expected
    c = critical_energies(p)
    for d in found:
        assert d.eps == pytest.approx(getattr(c, d.label), abs=1e-6)


def test_curve_derivative_and_fields():
    curve = dos_curve(np.linspace(-0.8, 1.5, 60), REGION_II, detect=False)
    assert len(curve.points) == 60 and curve.discontinuities == []
    assert np.all(curve.derivative[curve.eps > 1.1 + 0.05] == 0.0)
    with pytest.raises(ValueError):
        dos_curve([0.0, 0.1], REGION_II)


def test_mc_oracle_small_run():
    eps = np.array([-0.5, 0.0, 0.5, 2.5])
    est, err = mc_dos_oracle(eps, REGION_III, n_samples=200_000, seed=5)
    z = (est - dos_values(eps, REGION_III)) / np.where(err > 0, err, 1.0)
    assert np.all(np.abs(z) < 4.5)
    assert est[-1] == 1.0 and err[-1] == 0.0


def test_mc_oracle_worker_independent():
    a = mc_dos_oracle([0.1, 0.4], REGION_II, n_samples=3 * 2**20 + 17, seed=9, workers=1)
    b = mc_dos_oracle([0.1, 0.4], REGION_II, n_samples=3 * 2**20 + 17, seed=9, workers=3)
    np.testing.assert_array_equal(a[0], b[0])
    with pytest.raises(ValueError):
        mc_dos_oracle(0.0, REGION_II, n_samples=100)


def test_mc_error_shrinks_with_samples():
    _, e_small = mc_dos_oracle(0.0, REGION_II, n_samples=10**4, seed=1)
    _, e_big = mc_dos_oracle(0.0, REGION_II, n_samples=10**6, seed=1)
    assert e_big < e_small / 5
