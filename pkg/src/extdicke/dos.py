"""Semi-classical (Weyl-law) density of states.

After integrating out the field the scaled density ``omega nu / (2 j)`` is
the fraction of the (z, phi) rectangle ``[-1, 1] x [0, 2 pi)`` whose relaxed
energy lies below ``eps``.  The piecewise closed forms below reduce that
area to one-dimensional integrals of ``phi0`` between the real roots of two
quadratics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import cfunc, types
from scipy import LowLevelCallable
from scipy.integrate import quad

from .model import CriticalEnergies, ModelParams, classify_region, critical_energies

QUAD_EPSABS = 1e-11
QUAD_EPSREL = 1e-10
_DISC_SLACK = 1e-13


class NoRealRootsError(ValueError):
    pass


class BelowGroundError(ValueError):
    pass


@dataclass(frozen=True)
class DosPoint:
    eps: float
    nu_scaled: float
    subregion: int


@dataclass(frozen=True)
class Discontinuity:
    eps: float
    kind: str  # "jump" | "logarithmic"
    label: str = ""  # name of the nearest critical energy, if any


@dataclass
class DosCurve:
    points: list[DosPoint]
    derivative: np.ndarray
    discontinuities: list[Discontinuity] = field(default_factory=list)

    @property
    def eps(self) -> np.ndarray:
        return np.array([pt.eps for pt in self.points])

    @property
    def nu(self) -> np.ndarray:
        return np.array([pt.nu_scaled for pt in self.points])


# -- roots -------------------------------------------------------------------


def _stable_quadratic(a: float, b: float, c: float) -> tuple[float, float]:
    """Sorted real roots of a z^2 + b z + c, avoiding cancellation."""
    if a == 0.0:
        if b == 0.0:
            raise NoRealRootsError("degenerate quadratic")
        r = -c / b
        return (-math.inf, r) if b * a >= 0 else (r, math.inf)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        if disc > -_DISC_SLACK * max(b * b, abs(4.0 * a * c)):
            disc = 0.0
        else:
            raise NoRealRootsError(f"discriminant {disc:.3e} < 0")
    qq = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if qq == 0.0:
        return (0.0, 0.0)
    r1, r2 = qq / a, c / qq
    return (r1, r2) if r1 <= r2 else (r2, r1)


def _shell_coefficient(params: ModelParams) -> float:
    """omega omega0 / (2 gamma^2), the prefactor of the shell constraint."""
    if params.gamma == 0.0:
        return math.inf
    return params.omega * params.omega0 / (2.0 * params.gamma**2)


def shell_roots(eps: float, params: ModelParams) -> tuple[float, float]:
    """Real roots z_- <= z_+ of (1 - z^2) = A ((eta/2w0) z^2 + z - eps).

    Rearranged, this is (f/2) z^2 + z - (eps + 1/A) = 0.
    """
    if params.gamma == 0.0:
        raise NoRealRootsError("shell quadratic is degenerate for gamma = 0")
    f = classify_region(params).f
    inv_a = 2.0 * params.gamma**2 / (params.omega * params.omega0)
    return _stable_quadratic(0.5 * f, 1.0, -(eps + inv_a))


def inner_roots(eps: float, params: ModelParams) -> tuple[float, float]:
    """Real roots z1 <= z2 of (eta/2w0) z^2 + z - eps = 0.

    For eta = 0 the quadratic is linear and z1 = -inf.
    """
    return _stable_quadratic(0.5 * params.eta / params.omega0, 1.0, -eps)


# -- integrand ---------------------------------------------------------------


def phi0(z, eps: float, params: ModelParams):
    """Half-width of the allowed azimuth window around phi = 0 (and pi)."""
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) >= 1.0):
        raise ValueError("phi0 is undefined at |z| = 1")
    g = 0.5 * params.eta / params.omega0 * z * z + z - eps
    if params.gamma == 0.0:
        X = np.where(g <= 0.0, 0.0, 1.0)
    else:
        X = _shell_coefficient(params) * g / (1.0 - z * z)
    out = np.arccos(np.sqrt(np.clip(X, 0.0, 1.0)))
    return float(out) if out.ndim == 0 else out


@cfunc(types.double(types.intc, types.CPointer(types.double)), cache=True)
def _phi0_integrand(n, xx):
    # xx = [theta, a, b, A, c2, eps]; z = a + (b - a)(1 - cos theta)/2
    theta, a, b, A, c2, eps = xx[0], xx[1], xx[2], xx[3], xx[4], xx[5]
    half = 0.5 * (b - a)
    z = a + half * (1.0 - math.cos(theta))
    one_m_z2 = 1.0 - z * z
    if one_m_z2 <= 0.0:
        return 0.0
    X = A * (c2 * z * z + z - eps) / one_m_z2
    if X <= 0.0:
        val = 0.5 * math.pi
    elif X >= 1.0:
        val = 0.0
    else:
        val = math.acos(math.sqrt(X))
    return val * half * math.sin(theta) / math.pi


_INTEGRAND = LowLevelCallable(_phi0_integrand.ctypes)


def _phi0_integral(a: float, b: float, eps: float, params: ModelParams) -> float:
    """(1/pi) * integral of phi0 over [a, b].

    The cosine substitution removes the square-root behaviour that phi0 has
    at both shell roots and inner roots.
    """
    a, b = max(a, -1.0), min(b, 1.0)
    if b <= a:
        return 0.0
    val, _ = quad(
        _INTEGRAND,
        0.0,
        math.pi,
        args=(a, b, _shell_coefficient(params), 0.5 * params.eta / params.omega0, eps),
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_EPSREL,
        limit=400,
    )
    return val


# -- piecewise density ---------------------------------------------------------


def _subregion(eps: float, region: str, crit: CriticalEnergies) -> int:
    if eps > crit.eps_plus:
        return {"I": 1, "II": 2, "III": 3}[region]
    if region == "I":
        return 0
    if region == "II":
        return 0 if eps <= crit.eps_minus else 1
    if eps <= crit.eps_s:
        return 0
    return 1 if eps <= crit.eps_minus else 2


def dos_branch(eps: float, params: ModelParams, branch: int) -> float:
    """Evaluate one branch of the piecewise density, regardless of eps.

    Branches are numbered from the lowest energy window upward, as in
    :attr:`DosPoint.subregion`.  Used to check that neighbouring branches
    agree at the critical energy they share.
    """
    region = classify_region(params).tag
    n_branches = {"I": 2, "II": 3, "III": 4}[region]
    if not 0 <= branch < n_branches:
        raise ValueError(f"region {region} has branches 0..{n_branches - 1}")
    if branch == n_branches - 1:
        return 1.0

    if params.gamma == 0.0:
        # no coupling: the allowed set is the z-interval where the inner quadratic is <= 0
        try:
            z1, z2 = inner_roots(eps, params)
        except NoRealRootsError:
            return 0.0
        return 0.5 * (min(z2, 1.0) - max(z1, -1.0)) if z2 > -1.0 and z1 < 1.0 else 0.0

    zm, zp = shell_roots(eps, params)
    zp = min(zp, 1.0)
    # lowest window: the shell is a single band [z_-, z_+]
    if (region, branch) in (("II", 0), ("III", 0)):
        return _phi0_integral(zm, zp, eps, params)
    z1, z2 = inner_roots(eps, params)
    if region == "III" and branch == 1:
        return (
            _phi0_integral(zm, z1, eps, params)
            + _phi0_integral(z2, zp, eps, params)
            + 0.5 * (z2 - z1)
        )
    return _phi0_integral(z2, zp, eps, params) + 0.5 * (z2 + 1.0)


def dos_point(eps: float, params: ModelParams) -> DosPoint:
    crit = critical_energies(params)
    if eps < crit.eps_min - 1e-12:
        raise BelowGroundError(f"eps={eps} lies below the ground energy {crit.eps_min}")
    eps = max(eps, crit.eps_min)
    region = classify_region(params).tag
    sub = _subregion(eps, region, crit)
    value = dos_branch(eps, params, sub)
    return DosPoint(float(eps), float(min(1.0, max(0.0, value))), sub)


def dos(eps: float, params: ModelParams) -> float:
    """Scaled density omega nu(eps) / (2 j) at scaled energy eps."""
    return dos_point(eps, params).nu_scaled


def dos_values(eps_grid, params: ModelParams) -> np.ndarray:
    return np.array([dos(float(e), params) for e in np.asarray(eps_grid, dtype=float)])


# -- curves and discontinuities --------------------------------------------------


def default_eps_grid(params: ModelParams, n_uniform: int = 400, n_cluster: int = 40) -> np.ndarray:
    """Uniform grid on [eps_min, eps_+ + 0.5] refined geometrically at critical energies."""
    crit = critical_energies(params)
    lo, hi = crit.eps_min, crit.eps_plus + 0.5
    grid = [np.linspace(lo, hi, n_uniform)]
    spacing = (hi - lo) / (n_uniform - 1)
    offsets = np.geomspace(1e-6 * spacing, 0.5 * spacing, n_cluster // 2)
    for ec in (crit.eps_s, crit.eps_minus, crit.eps_plus):
        if ec is None or not lo < ec < hi:
            continue
        grid.append(ec - offsets)
        grid.append(ec + offsets)
    g = np.unique(np.concatenate(grid))
    return g[(g >= lo) & (g <= hi)]


def dos_curve(eps_grid, params: ModelParams, detect: bool = True, scan_points: int = 1601) -> DosCurve:
    """Sample the density on a grid, differentiate, and locate kinks.

    The derivative is the second-order centred difference on the supplied
    (possibly non-uniform) grid.  Discontinuity detection re-samples the
    density on its own uniform scan over the grid's range; see
    :func:`detect_discontinuities`.
    """
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.ndim != 1 or eps_grid.size < 3:
        raise ValueError("need at least three grid points")
    if np.any(np.diff(eps_grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    points = [dos_point(float(e), params) for e in eps_grid]
    nu = np.array([p.nu_scaled for p in points])
    deriv = np.gradient(nu, eps_grid)
    marks = []
    if detect:
        marks = detect_discontinuities(params, eps_grid[0], eps_grid[-1], scan_points=scan_points)
    return DosCurve(points, deriv, marks)


def _locate_kink(fun, a: float, b: float, levels: int = 7, n: int = 41) -> float:
    """Zoom onto the point of largest curvature inside [a, b]."""
    for _ in range(levels):
        x = np.linspace(a, b, n)
        y = np.array([fun(v) for v in x])
        s = np.abs(y[2:] - 2.0 * y[1:-1] + y[:-2])
        k = int(np.argmax(s)) + 1
        a, b = x[k - 1], x[k + 1]
    return 0.5 * (a + b)


def _classify_kink(fun, c: float, lo: float, hi: float, h0: float):
    """Return 'logarithmic', 'jump' or None for a located kink at c.

    One-sided difference quotients are taken at three step sizes a decade
    apart.  A logarithmic singularity keeps growing by a roughly constant
    amount per decade on both sides; a jump converges to distinct left and
    right limits.
    """
    h0 = min(h0, 0.45 * (c - lo), 0.45 * (hi - c))
    if h0 <= 0:
        return None
    hs = h0 * np.array([1.0, 0.1, 0.01])
    left = np.array([(fun(c - h) - fun(c - 2 * h)) / h for h in hs])
    right = np.array([(fun(c + 2 * h) - fun(c + h)) / h for h in hs])
    inc_l, inc_r = np.diff(left), np.diff(right)
    quad_noise = 4.0 * QUAD_EPSABS / hs[-1]
    diverging = (
        abs(inc_l[1]) > 0.5 * abs(inc_l[0])
        and abs(inc_r[1]) > 0.5 * abs(inc_r[0])
        and np.sign(inc_l[1]) == np.sign(inc_r[1])
        and min(abs(inc_l[1]), abs(inc_r[1])) > 10.0 * quad_noise
    )
    if diverging:
        return "logarithmic"
    noise = max(abs(inc_l[1]), abs(inc_r[1]), quad_noise)
    if abs(right[-1] - left[-1]) > 10.0 * noise:
        return "jump"
    return None


def detect_discontinuities(
    params: ModelParams,
    lo: float | None = None,
    hi: float | None = None,
    scan_points: int = 1601,
    threshold: float = 20.0,
) -> list[Discontinuity]:
    """Find and classify kinks of the density on [lo, hi].

    A uniform scan flags nodes whose second difference stands out from the
    median by ``threshold``; each candidate is then localised by repeated
    zooming and classified by :func:`_classify_kink`.
    """
    crit = critical_energies(params)
    lo = crit.eps_min if lo is None else max(lo, crit.eps_min)
    hi = crit.eps_plus + 0.5 if hi is None else hi
    x = np.linspace(lo, hi, scan_points)
    h = x[1] - x[0]
    fun = lambda e: dos(e, params)  # noqa: E731
    y = np.array([fun(v) for v in x])
    s = np.abs(y[2:] - 2.0 * y[1:-1] + y[:-2])
    floor = max(np.median(s), 1e-14)
    cands = []
    for k in range(2, len(s) - 2):
        if s[k] >= threshold * floor and s[k] >= s[k - 1] and s[k] >= s[k + 1]:
            cands.append(k + 1)  # index into x
    # merge neighbours
    merged: list[int] = []
    for i in cands:
        if merged and i - merged[-1] <= 3:
            if s[i - 1] > s[merged[-1] - 1]:
                merged[-1] = i
            continue
        merged.append(i)

    out = []
    for i in merged:
        a, b = x[max(i - 2, 0)], x[min(i + 2, len(x) - 1)]
        c = _locate_kink(fun, a, b)
        kind = _classify_kink(fun, c, lo, hi, h0=0.5 * h)
        if kind is None:
            continue
        out.append(Discontinuity(float(c), kind, _nearest_label(c, crit, 2 * h)))
    return out


def _nearest_label(c: float, crit: CriticalEnergies, tol: float) -> str:
    best, label = tol, ""
    for name in ("eps_min", "eps_s", "eps_minus", "eps_plus"):
        v = getattr(crit, name)
        if v is not None and abs(v - c) <= best:
            best, label = abs(v - c), name
    return label


# -- Monte-Carlo oracle ------------------------------------------------------------

MC_CHUNK = 1 << 20


def _mc_chunk_counts(child: np.random.SeedSequence, n: int, thresholds: np.ndarray, params: ModelParams) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(child))
    z = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    c2 = 0.5 * params.eta / params.omega0
    if params.gamma == 0.0:
        # constraint degenerates to a sign test on the inner quadratic
        lhs = -(c2 * z * z + z)
    else:
        A = _shell_coefficient(params)
        lhs = (1.0 - z * z) * np.cos(phi) ** 2 - A * (c2 * z * z + z)
    lhs.sort()
    return n - np.searchsorted(lhs, thresholds, side="left")


def mc_dos_oracle(eps, params: ModelParams, n_samples: int = 10**7, seed: int = 0, workers: int = 1):
    """Monte-Carlo estimate of the scaled density and its standard error.

    Uniform (z, phi) samples are tested against the allowed-region
    inequality (1 - z^2) cos^2 phi >= A ((eta/2w0) z^2 + z - eps).  ``eps``
    may be an array; every energy is evaluated on the same samples.  Chunks
    draw from independent Philox streams spawned from ``seed``, so the
    result does not depend on ``workers``.
    """
    if n_samples < 10**4:
        raise ValueError("n_samples must be at least 1e4")
    eps_arr = np.atleast_1d(np.asarray(eps, dtype=float))
    if params.gamma == 0.0:
        thresholds = -eps_arr
    else:
        thresholds = -_shell_coefficient(params) * eps_arr
    n_chunks = -(-n_samples // MC_CHUNK)
    sizes = [MC_CHUNK] * (n_chunks - 1) + [n_samples - MC_CHUNK * (n_chunks - 1)]
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    jobs = list(zip(children, sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda cs: _mc_chunk_counts(cs[0], cs[1], thresholds, params), jobs))
    else:
        parts = [_mc_chunk_counts(c, n, thresholds, params) for c, n in jobs]
    hits = np.sum(parts, axis=0)
    p = hits / n_samples
    err = np.sqrt(p * (1.0 - p) / n_samples)
    if np.ndim(eps) == 0:
        return float(p[0]), float(err[0])
    return p, err
