"""Classical trajectories and Poincare sections at p = 0."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _dop853 as _k
from .model import (
    ClassicalState,
    ModelParams,
    classical_energy,
    critical_energies,
    effective_energy_surface,
    fixed_points,
)

# the step controller runs this many decades below the caller's tol
TOL_MARGIN = 1e-2
MAX_SHELL_DRAWS = 10**6

_STATUS = {
    _k.OK: "ok",
    _k.POLE: "pole",
    _k.UNDERFLOW: "underflow",
    _k.MAX_STEPS: "max-steps",
}


class PoleProximityError(ValueError):
    pass


class EmptyShellError(RuntimeError):
    pass


@dataclass
class Trajectory:
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    z: np.ndarray
    phi: np.ndarray
    energy_drift: float
    status: str = "ok"

    @property
    def samples(self) -> list[tuple[float, ClassicalState]]:
        return [
            (float(t), ClassicalState(q, p, z, ph))
            for t, q, p, z, ph in zip(self.t, self.q, self.p, self.z, self.phi)
        ]

    @property
    def final_state(self) -> ClassicalState:
        return ClassicalState(self.q[-1], self.p[-1], self.z[-1], self.phi[-1])

    @property
    def truncated(self) -> bool:
        return self.status != "ok"


@dataclass(frozen=True)
class SectionPoint:
    r: float
    phi: float
    t_cross: float
    direction: int  # +1 when p increases through zero
    q: float = 0.0
    p: float = 0.0

    @property
    def z(self) -> float:
        return self.r - 1.0


@dataclass
class Section:
    points: list[SectionPoint] = field(default_factory=list)
    status: str = "ok"
    energy_drift: float = 0.0

    @property
    def truncated(self) -> bool:
        return self.status != "ok"


def _pvec(params: ModelParams) -> np.ndarray:
    return np.array([params.omega, params.omega0, params.gamma, params.eta])


def _scaled_vector(state: ClassicalState, params: ModelParams) -> np.ndarray:
    rj = math.sqrt(params.j)
    return np.array([state.q / rj, state.p / rj, state.phi, state.z])


def eom_rhs(state: ClassicalState, params: ModelParams) -> np.ndarray:
    """Time derivatives (dq/dt, dp/dt, dphi/dt, dz/dt) of the classical flow."""
    y = _scaled_vector(state, params)
    out = np.empty(4)
    if not _k.rhs(y, _pvec(params), out):
        raise PoleProximityError(f"1 - z^2 < {_k.POLE_EPS:g} at z={state.z}")
    rj = math.sqrt(params.j)
    out[0] *= rj
    out[1] *= rj
    return out


def integrate(
    state0: ClassicalState,
    params: ModelParams,
    t_end: float,
    tol: float = 1e-10,
    t0: float = 0.0,
    max_steps: int = 50_000_000,
) -> Trajectory:
    """Integrate the equations of motion from ``t0`` to ``t_end`` (either direction).

    Every accepted DOP853 step is recorded.  A trajectory that runs into a
    pole (1 - z^2 < 1e-10) is truncated and flagged via ``status``.
    """
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    y0 = _scaled_vector(state0, params)
    if not math.isfinite(_k.energy(y0, _pvec(params))):
        raise ValueError("initial energy is not finite")
    rtol = atol = tol * TOL_MARGIN
    cap = 4096
    while True:
        t_rec = np.empty(cap)
        y_rec = np.empty((cap, 4))
        status, n_rec, _, _, _, drift = _k.integrate_kernel(
            y0, float(t0), float(t_end), _pvec(params), rtol, atol,
            True, t_rec, y_rec, False, np.empty((1, 6)), max_steps,
        )
        if status != _k.RECORD_FULL:
            break
        cap *= 4
    rj = math.sqrt(params.j)
    y = y_rec[:n_rec]
    return Trajectory(
        t=t_rec[:n_rec].copy(),
        q=y[:, 0] * rj,
        p=y[:, 1] * rj,
        z=y[:, 3].copy(),
        phi=y[:, 2].copy(),
        energy_drift=float(drift),
        status=_STATUS[status],
    )


def _shell_q(z, phi, eps, params: ModelParams, branch):
    """Solve the energy equation for Q at p = 0; ``branch`` selects the root."""
    w = params.omega / params.omega0
    g = params.gamma / params.omega0
    b = 2.0 * g * np.sqrt(np.clip(1.0 - z * z, 0.0, None)) * np.cos(phi)
    c = z + 0.5 * params.eta / params.omega0 * z * z - eps
    disc = np.sqrt(np.clip(b * b - 2.0 * w * c, 0.0, None))
    # roots of (w/2) Q^2 + b Q + c = 0 without cancellation
    qq = -(b + np.where(b >= 0, disc, -disc))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = qq / w
        r2 = np.where(qq != 0.0, 2.0 * c / qq, 0.0)
    lo, hi = np.minimum(r1, r2), np.maximum(r1, r2)
    return np.where(branch == 0, lo, hi)


def sample_energy_shell(eps: float, params: ModelParams, n: int, seed: int = 0) -> list[ClassicalState]:
    """Draw ``n`` initial conditions with p = 0 on the shell of scaled energy ``eps``.

    (z, phi) are uniform over the energetically allowed set, q alternates
    between the two roots of the energy equation.
    """
    crit = critical_energies(params)
    if eps < crit.eps_min - 1e-12:
        raise EmptyShellError(f"eps={eps} is below the ground energy {crit.eps_min}")
    rj = math.sqrt(params.j)
    if eps <= crit.eps_min + 1e-12:
        minima = [fp.state for fp in fixed_points(params) if fp.kind.endswith("minimum")]
        return [minima[i % len(minima)] for i in range(n)]

    rng = np.random.default_rng(seed)
    zs, phis = [], []
    drawn = 0
    batch = max(1024, 4 * n)
    while sum(len(a) for a in zs) < n:
        if drawn >= MAX_SHELL_DRAWS:
            raise EmptyShellError(f"rejection sampling found fewer than {n} points on eps={eps}")
        m = min(batch, MAX_SHELL_DRAWS - drawn)
        z = rng.uniform(-1.0, 1.0, m)
        phi = rng.uniform(0.0, 2.0 * math.pi, m)
        drawn += m
        ok = effective_energy_surface(z, phi, params) <= eps
        zs.append(z[ok])
        phis.append(phi[ok])
    z = np.concatenate(zs)[:n]
    phi = np.concatenate(phis)[:n]
    Q = _shell_q(z, phi, eps, params, np.arange(n) % 2)
    states = [ClassicalState(Qi * rj, 0.0, zi, ph) for Qi, zi, ph in zip(Q, z, phi)]
    for st in states:
        err = abs(classical_energy(st, params) - eps)
        if err > 1e-10:
            raise RuntimeError(f"shell sample off by {err:.2e}")
    return states


def _section_one(state: ClassicalState, params: ModelParams, t_end: float, tol: float, max_steps: int) -> Section:
    y0 = _scaled_vector(state, params)
    rtol = atol = tol * TOL_MARGIN
    cap = 1024
    while True:
        buf = np.empty((cap, 6))
        status, _, n_sec, _, _, drift = _k.integrate_kernel(
            y0, 0.0, float(t_end), _pvec(params), rtol, atol,
            False, np.empty(1), np.empty((1, 4)), True, buf, max_steps,
        )
        if status != _k.SECTION_FULL:
            break
        cap *= 4
    rj = math.sqrt(params.j)
    pts = [
        SectionPoint(
            r=1.0 + row[4],
            phi=row[3] % (2.0 * math.pi),
            t_cross=row[0],
            direction=int(row[5]),
            q=row[1] * rj,
            p=row[2] * rj,
        )
        for row in buf[:n_sec]
    ]
    return Section(pts, _STATUS[status], float(drift))


def poincare_section(
    ics: list[ClassicalState],
    params: ModelParams,
    t_end: float = 2000.0,
    tol: float = 1e-10,
    direction: str = "both",
    workers: int = 1,
    max_steps: int = 50_000_000,
) -> list[Section]:
    """Crossings of the plane p = 0 for each initial condition.

    ``direction`` is ``"both"``, ``"up"`` (p increasing) or ``"down"``.
    Each initial condition is integrated independently; output order
    follows ``ics`` regardless of ``workers``.
    """
    if not ics:
        return []
    if not 1e-12 <= tol <= 1e-6:
        raise ValueError("tol must lie in [1e-12, 1e-6]")
    energies = [classical_energy(s, params) for s in ics]
    if max(energies) - min(energies) > 1e-8:
        raise ValueError("initial conditions do not share an energy shell")
    if direction not in ("both", "up", "down"):
        raise ValueError("direction must be 'both', 'up' or 'down'")

    def run(st):
        return _section_one(st, params, t_end, tol, max_steps)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            sections = list(pool.map(run, ics))
    else:
        sections = [run(s) for s in ics]
    if direction != "both":
        keep = 1 if direction == "up" else -1
        for sec in sections:
            sec.points = [pt for pt in sec.points if pt.direction == keep]
    return sections
