"""Semi-classical backbone of the extended Dicke model.

Everything here works with the scaled energy ``eps = E / (omega0 * j)`` and
with field quadratures ``q, p`` in their natural (unscaled) units, so that
``q ~ sqrt(j)`` on the energy shells of interest.  Internally most formulas
use ``Q = q / sqrt(j)`` which makes the classical problem independent of j.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# eigenvalues of the scaled Hessian below this (relative) size count as zero
MARGINAL_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one model instance.

    ``j`` is the pseudospin length N_q / 2.  Quantum routines additionally
    require ``2 j`` to be an integer; see :meth:`require_quantum`.
    """

    omega: float = 1.0
    omega0: float = 1.0
    gamma: float = 0.0
    eta: float = 0.0
    j: float = 1.0

    def __post_init__(self):
        for name in ("omega", "omega0", "gamma", "eta", "j"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.j <= 0:
            raise ValueError("j must be positive")

    @property
    def n_qubits(self) -> float:
        return 2.0 * self.j

    def require_quantum(self) -> int:
        """Return N_q = 2j as an int, raising if j is not a half-integer."""
        two_j = 2.0 * self.j
        if abs(two_j - round(two_j)) > 1e-12:
            raise ValueError(f"quantum operations need 2j integral, got j={self.j}")
        return int(round(two_j))

    def replace(self, **changes) -> "ModelParams":
        return ModelParams(**{**asdict(self), **changes})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassicalState:
    """Point of the classical phase space; ``z = j_z / j`` and ``phi`` the azimuth."""

    q: float
    p: float
    z: float
    phi: float

    def __post_init__(self):
        if abs(self.z) > 1.0 + 1e-12:
            raise ValueError(f"|z| must not exceed 1, got z={self.z}")
        object.__setattr__(self, "z", float(min(1.0, max(-1.0, self.z))))
        object.__setattr__(self, "q", float(self.q))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "phi", float(self.phi) % TWO_PI)

    def as_array(self) -> np.ndarray:
        return np.array([self.q, self.p, self.phi, self.z])


@dataclass(frozen=True)
class Region:
    tag: str
    f: float


@dataclass(frozen=True)
class FixedPoint:
    state: ClassicalState
    kind: str  # global-minimum | degenerate-minimum | local-maximum | saddle
    stable: bool
    curvature: str = field(default="", compare=False)  # minimum | maximum | saddle | marginal


@dataclass(frozen=True)
class CriticalEnergies:
    eps_min: float
    eps_minus: float
    eps_plus: float
    eps_s: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def auxiliary_f(params: ModelParams) -> float:
    """f = (4 gamma^2 + eta omega) / (omega omega0)."""
    return (4.0 * params.gamma**2 + params.eta * params.omega) / (params.omega * params.omega0)


def classify_region(params: ModelParams) -> Region:
    f = auxiliary_f(params)
    if f < 1.0:
        tag = "I"
    elif params.eta < params.omega0:
        tag = "II"
    else:
        tag = "III"
    return Region(tag, f)


def to_raw_energy(eps, params: ModelParams):
    return np.asarray(eps) * params.omega0 * params.j if np.ndim(eps) else eps * params.omega0 * params.j


def to_scaled_energy(energy, params: ModelParams):
    return np.asarray(energy) / (params.omega0 * params.j) if np.ndim(energy) else energy / (params.omega0 * params.j)


def _scaled_energy(Q, P, z, phi, params: ModelParams):
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    w = params.omega / params.omega0
    return (
        0.5 * w * (Q * Q + P * P)
        + z
        + 2.0 * params.gamma / params.omega0 * Q * s * np.cos(phi)
        + 0.5 * params.eta / params.omega0 * z * z
    )


def classical_energy(state: ClassicalState, params: ModelParams) -> float:
    """Scaled classical energy H_cl / (omega0 j)."""
    rj = math.sqrt(params.j)
    return float(_scaled_energy(state.q / rj, state.p / rj, state.z, state.phi, params))


def effective_energy_surface(z, phi, params: ModelParams):
    """Energy surface with the field relaxed to its minimum at fixed (z, phi).

    Vectorised over ``z`` and ``phi`` (numpy broadcasting).
    """
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1.0 + 1e-12):
        raise ValueError("|z| must not exceed 1")
    coupling = 2.0 * params.gamma**2 / (params.omega * params.omega0)
    out = z + 0.5 * params.eta / params.omega0 * z * z - coupling * (1.0 - z * z) * np.cos(phi) ** 2
    return float(out) if out.ndim == 0 else out


def critical_energies(params: ModelParams) -> CriticalEnergies:
    region = classify_region(params)
    shift = 0.5 * params.eta / params.omega0
    f = region.f
    if region.tag == "I":
        eps_min = -1.0 + shift
    else:
        eps_min = -0.5 * (f + 1.0 / f) + shift
    eps_s = -params.omega0 / (2.0 * params.eta) if region.tag == "III" else None
    return CriticalEnergies(eps_min, -1.0 + shift, 1.0 + shift, eps_s)


# -- derivatives of the scaled energy ----------------------------------------
#
# Canonical chart (Q, P, phi, z).  At the poles the chart is singular and
# we switch to X = sqrt(2u) cos(phi), Y = sqrt(2u) sin(phi) with u = 1 -+ z,
# which is canonical and smooth there.


def energy_gradient(state: ClassicalState, params: ModelParams) -> np.ndarray:
    """Gradient of the scaled energy in (Q, P, phi, z); poles use (Q, P, X, Y)."""
    rj = math.sqrt(params.j)
    Q, P, z, phi = state.q / rj, state.p / rj, state.z, state.phi
    g = params.gamma / params.omega0
    w = params.omega / params.omega0
    if _at_pole(z):
        # pole sits at X = Y = 0; coupling term is 2 g Q X sqrt(1 - u/2)
        return np.array([w * Q, w * P, 2.0 * g * Q, 0.0])
    s = math.sqrt(1.0 - z * z)
    return np.array(
        [
            w * Q + 2.0 * g * s * math.cos(phi),
            w * P,
            -2.0 * g * Q * s * math.sin(phi),
            1.0 + params.eta / params.omega0 * z - 2.0 * g * Q * math.cos(phi) * z / s,
        ]
    )


def energy_hessian(state: ClassicalState, params: ModelParams) -> np.ndarray:
    """Hessian of the scaled energy, same charts as :func:`energy_gradient`."""
    rj = math.sqrt(params.j)
    Q, z, phi = state.q / rj, state.z, state.phi
    g = params.gamma / params.omega0
    w = params.omega / params.omega0
    e = params.eta / params.omega0
    H = np.zeros((4, 4))
    H[0, 0] = H[1, 1] = w
    if _at_pole(z):
        dh_du = 1.0 - e if z < 0 else -(1.0 + e)
        H[2, 2] = H[3, 3] = dh_du
        H[0, 2] = H[2, 0] = 2.0 * g
        return H
    s = math.sqrt(1.0 - z * z)
    c, sn = math.cos(phi), math.sin(phi)
    H[0, 2] = H[2, 0] = -2.0 * g * s * sn
    H[0, 3] = H[3, 0] = -2.0 * g * z / s * c
    H[2, 2] = -2.0 * g * Q * s * c
    H[2, 3] = H[3, 2] = 2.0 * g * Q * z / s * sn
    H[3, 3] = e - 2.0 * g * Q * c / s**3
    return H


def _at_pole(z: float) -> bool:
    return abs(abs(z) - 1.0) < 1e-14


def stability_of(point: FixedPoint | ClassicalState, params: ModelParams) -> tuple[str, bool]:
    """Classify a fixed point by the inertia of the energy Hessian.

    The field block of the Hessian is positive definite, so the number of
    negative eigenvalues counts the descending directions of the spin part:
    0 -> minimum, 1 -> saddle, 2 -> maximum.  A (near) zero eigenvalue
    returns ``"marginal"``.  Only minima are flagged stable.
    """
    state = point.state if isinstance(point, FixedPoint) else point
    H = energy_hessian(state, params)
    lam = np.linalg.eigvalsh(H)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if np.any(np.abs(lam) <= MARGINAL_TOL * scale):
        return "marginal", False
    n_neg = int(np.sum(lam < 0))
    kind = {0: "minimum", 1: "saddle", 2: "maximum"}.get(n_neg, "saddle")
    return kind, kind == "minimum"


def fixed_points(params: ModelParams) -> list[FixedPoint]:
    """All stationary points of the classical energy for these parameters."""
    region = classify_region(params)
    f = region.f
    rj = math.sqrt(params.j)
    points = []

    north = ClassicalState(0.0, 0.0, 1.0, 0.0)
    curv, _ = stability_of(north, params)
    points.append(FixedPoint(north, "local-maximum", False, curv))

    south = ClassicalState(0.0, 0.0, -1.0, 0.0)
    curv, stable = stability_of(south, params)
    if region.tag == "I":
        kind = "global-minimum"
    elif f == 1.0:
        # the degenerate minima merge into the pole
        kind, stable = "global-minimum", True
    elif region.tag == "II":
        kind = "saddle"
    elif params.eta == params.omega0:
        # the region-III saddles merge into the pole
        kind = "saddle"
    else:
        kind = "local-maximum"
    points.append(FixedPoint(south, kind, stable, curv))

    if f > 1.0:
        z_min = -1.0 / f
        q_s = 2.0 * params.gamma * math.sqrt(1.0 - 1.0 / f**2) / params.omega * rj
        for q, phi in ((-q_s, 0.0), (q_s, math.pi)):
            st = ClassicalState(q, 0.0, z_min, phi)
            curv, stable = stability_of(st, params)
            points.append(FixedPoint(st, "degenerate-minimum", stable, curv))

    if region.tag == "III" and params.eta > params.omega0:
        z_s = -params.omega0 / params.eta
        for phi in (0.5 * math.pi, 1.5 * math.pi):
            st = ClassicalState(0.0, 0.0, z_s, phi)
            curv, stable = stability_of(st, params)
            points.append(FixedPoint(st, "saddle", stable, curv))
    return points
