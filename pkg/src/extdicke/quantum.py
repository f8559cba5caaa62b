"""Finite-size quantum spectrum of the extended Dicke Hamiltonian.

    H = w a^+a + w0 Jz + gamma/sqrt(N) (a + a^+)(J+ + J-) + eta/N Jz^2

Parity exp(i pi (a^+a + Jz + j)) is conserved, so every routine works on a
single parity block.  Two truncated bases are available: the bare Fock
basis |n> x |j, m> and a displaced ("coherent") basis in which each J_x
sector carries its own displaced oscillator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import eval_genlaguerre, gammaln

from .model import ModelParams

DEFAULT_MAX_DIM = 20_000
DENSE_LIMIT = 10_000
RESIDUAL_RTOL = 1e-10


class DimensionError(ValueError):
    pass


class EigenConvergenceError(RuntimeError):
    def __init__(self, index: int, residual: float):
        super().__init__(f"eigenpair {index} failed the residual check ({residual:.3e})")
        self.index = index
        self.residual = residual


@dataclass(frozen=True)
class BasisSpec:
    j: float
    n_max: int
    parity: int = 1
    kind: str = "bare-Fock"

    def __post_init__(self):
        if abs(2 * self.j - round(2 * self.j)) > 1e-12 or self.j <= 0:
            raise ValueError(f"j must be a positive half-integer, got {self.j}")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if self.parity not in (1, -1):
            raise ValueError("parity must be +1 or -1")
        if self.kind not in ("bare-Fock", "displaced-Fock"):
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(-self.j, self.j + 0.5, 1.0)

    def states(self) -> np.ndarray:
        """(n, m) pairs of the parity block, n outer and m inner, both ascending."""
        n = np.repeat(np.arange(self.n_max + 1), len(self.m_values))
        m = np.tile(self.m_values, self.n_max + 1)
        par = np.where((np.rint(n + m + self.j).astype(np.int64) % 2) == 0, 1, -1)
        keep = par == self.parity
        return np.column_stack([n[keep], m[keep]])

    @property
    def dimension(self) -> int:
        return len(self.states())


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    jz_expect: np.ndarray  # <J_z>, between -j and j
    parity: int
    converged: np.ndarray
    residuals: np.ndarray
    top_weight: np.ndarray = field(default=None, repr=False)
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    basis: BasisSpec | None = None

    @property
    def n_converged(self) -> int:
        return int(np.count_nonzero(self.converged))


@dataclass
class AveragedDos:
    eps_bar: np.ndarray
    nu_bar: np.ndarray
    window: int


@dataclass
class PeresLattice:
    eps: np.ndarray
    jz: np.ndarray  # <J_z> / j
    converged: np.ndarray


# -- bare Fock basis -------------------------------------------------------------


def _jpm(j: float, m: np.ndarray, sign: int) -> np.ndarray:
    """<m +- 1 | J_+- | m>."""
    return np.sqrt(np.clip(j * (j + 1.0) - m * (m + sign), 0.0, None))


def _check_dim(dim: int, max_dim: int, basis: BasisSpec):
    if dim > max_dim:
        raise DimensionError(
            f"parity block dimension {dim} exceeds the limit {max_dim}; "
            f"try n_max <= {max(1, int(basis.n_max * max_dim / dim))}"
        )


def build_hamiltonian(params: ModelParams, basis: BasisSpec, max_dim: int = DEFAULT_MAX_DIM) -> sp.csr_matrix:
    """Parity block of H in the bare basis |n> x |j, m>, as a CSR matrix."""
    if basis.kind != "bare-Fock":
        return displaced_basis_hamiltonian(params, basis, max_dim)
    N = params.require_quantum()
    if abs(basis.j - params.j) > 1e-12:
        raise ValueError("basis and params disagree on j")
    states = basis.states()
    dim = len(states)
    _check_dim(dim, max_dim, basis)
    n, m = states[:, 0], states[:, 1]
    index = {(int(a), float(b)): i for i, (a, b) in enumerate(states)}

    rows = [np.arange(dim)]
    cols = [np.arange(dim)]
    vals = [params.omega * n + params.omega0 * m + params.eta / N * m * m]
    g = params.gamma / math.sqrt(N)
    if g != 0.0:
        r, c, v = [], [], []
        for i, (ni, mi) in enumerate(states):
            for dm in (1, -1):
                mt = mi + dm
                key = (int(ni) + 1, float(mt))
                k = index.get(key)
                if k is None:
                    continue
                amp = g * math.sqrt(ni + 1.0) * _jpm(params.j, np.array(mi), dm)
                r += [i, k]
                c += [k, i]
                v += [float(amp), float(amp)]
        rows.append(np.array(r, dtype=np.int64))
        cols.append(np.array(c, dtype=np.int64))
        vals.append(np.array(v))
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    H.sort_indices()
    return H


def full_product_hamiltonian(params: ModelParams, n_max: int) -> tuple[sp.csr_matrix, np.ndarray]:
    """H on the unrestricted product basis (n outer, m inner) plus the (n, m) labels.

    Built from Kronecker products of single-mode operators; used as an
    independent check of the parity-block assembly.
    """
    N = params.require_quantum()
    j = params.j
    m = np.arange(-j, j + 0.5, 1.0)
    a = sp.diags(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    num = sp.diags(np.arange(n_max + 1, dtype=float))
    jz = sp.diags(m)
    jp = sp.diags(_jpm(j, m[:-1], 1), -1)  # column m -> row m+1
    jx2 = jp + jp.T
    eye_b = sp.identity(n_max + 1)
    eye_s = sp.identity(len(m))
    H = (
        params.omega * sp.kron(num, eye_s)
        + params.omega0 * sp.kron(eye_b, jz)
        + params.gamma / math.sqrt(N) * sp.kron(a + a.T, jx2)
        + params.eta / N * sp.kron(eye_b, jz @ jz)
    )
    labels = np.column_stack([np.repeat(np.arange(n_max + 1), len(m)), np.tile(m, n_max + 1)])
    return H.tocsr(), labels


# -- displaced basis -------------------------------------------------------------


def displacement_matrix(beta: float, K: int) -> np.ndarray:
    """<k'|D(beta)|k> for real beta and 0 <= k, k' <= K.

    Closed Laguerre form evaluated in log space; the transpose identity
    D(-beta) = D(beta)^T is imposed exactly.
    """
    if beta == 0.0:
        return np.eye(K + 1)
    if beta < 0.0:
        return displacement_matrix(-beta, K).T
    x = beta * beta
    kp, k = np.meshgrid(np.arange(K + 1), np.arange(K + 1), indexing="ij")
    lo, d = np.minimum(kp, k), np.abs(kp - k)
    lag = eval_genlaguerre(lo, d, x)
    with np.errstate(divide="ignore"):
        log_mag = 0.5 * (gammaln(lo + 1.0) - gammaln(lo + d + 1.0)) - 0.5 * x + d * math.log(beta) + np.log(np.abs(lag))
    # below the diagonal the power is beta^d, above it (-beta)^d
    sign = np.sign(lag) * np.where((k > kp) & (d % 2 == 1), -1.0, 1.0)
    return sign * np.exp(log_mag)


def _spin_x_frame(j: float):
    """J_x eigenbasis: returns (m_x, Jz in that frame, Jz^2 in that frame, spin parity in that frame)."""
    m = np.arange(-j, j + 0.5, 1.0)
    jp = np.diag(_jpm(j, m[:-1], 1), -1)
    # -i J_y = -(J+ - J-)/2 is real, so the rotation is real orthogonal
    R = sla.expm(-0.25 * math.pi * (jp - jp.T))
    jz = np.diag(m)
    sz = R.T @ jz @ R
    sz2 = R.T @ (jz @ jz) @ R
    par = R.T @ np.diag(np.where(np.rint(m + j).astype(int) % 2 == 0, 1.0, -1.0)) @ R
    for M in (sz, sz2, par):
        M[np.abs(M) < 1e-13] = 0.0
    return m, sz, sz2, par


def _displaced_parts(params: ModelParams, basis: BasisSpec):
    N = params.require_quantum()
    K = basis.n_max
    m, sz, sz2, par = _spin_x_frame(basis.j)
    alpha = -2.0 * params.gamma * m / (params.omega * math.sqrt(N))
    return N, K, m, sz, sz2, par, alpha


def _assemble_displaced(spin_op: np.ndarray, alpha: np.ndarray, K: int, diag_extra=None) -> sp.csr_matrix:
    ns = len(alpha)
    blocks = [[None] * ns for _ in range(ns)]
    cache: dict[float, np.ndarray] = {}
    for ip in range(ns):
        for i in range(ns):
            s = spin_op[ip, i]
            if s == 0.0:
                continue
            beta = float(alpha[i] - alpha[ip])
            if beta not in cache:
                cache[beta] = displacement_matrix(beta, K)
            blocks[ip][i] = sp.csr_matrix(s * cache[beta])
    for i in range(ns):
        if blocks[i][i] is None:
            blocks[i][i] = sp.csr_matrix((K + 1, K + 1))
        if diag_extra is not None:
            blocks[i][i] = blocks[i][i] + sp.diags(diag_extra[i])
    return sp.bmat(blocks, format="csr")


def _parity_projector(par: np.ndarray, K: int, parity: int):
    """Sparse isometry onto the parity block of the displaced basis.

    Full-space index is i * (K + 1) + k (spin sector outer).  Columns are
    ordered k outer, sector pair inner.  Also returns k for each column.
    """
    ns = par.shape[0]
    rows, cols, vals, ks = [], [], [], []
    col = 0
    for k in range(K + 1):
        sk = -1.0 if k % 2 else 1.0
        for i in range(ns):
            ip = ns - 1 - i  # partner sector with m -> -m
            c = float(np.rint(par[ip, i]))
            if ip < i:
                continue
            if ip == i:
                if c * sk == parity:
                    rows.append(i * (K + 1) + k)
                    cols.append(col)
                    vals.append(1.0)
                    ks.append(k)
                    col += 1
                continue
            rows += [i * (K + 1) + k, ip * (K + 1) + k]
            cols += [col, col]
            vals += [1.0 / math.sqrt(2.0), parity * c * sk / math.sqrt(2.0)]
            ks.append(k)
            col += 1
    U = sp.csr_matrix((vals, (rows, cols)), shape=(ns * (K + 1), col))
    return U, np.array(ks)


def displaced_basis_hamiltonian(params: ModelParams, basis: BasisSpec, max_dim: int = DEFAULT_MAX_DIM) -> sp.csr_matrix:
    """Parity block of H in the displaced basis |m_x> x D(alpha_m)|k>.

    alpha_m = -2 gamma m / (omega sqrt(N)) diagonalises the field part in
    every J_x sector; the spin terms w0 Jz + eta/N Jz^2 then couple
    neighbouring sectors through displaced-Fock overlaps.
    """
    N, K, m, sz, sz2, par, alpha = _displaced_parts(params, basis)
    _check_dim(basis.dimension, max_dim, basis)
    k = np.arange(K + 1, dtype=float)
    diag = [params.omega * k - 4.0 * params.gamma**2 * mi * mi / (params.omega * N) for mi in m]
    H = _assemble_displaced(params.omega0 * sz + params.eta / N * sz2, alpha, K, diag)
    U, _ = _parity_projector(par, K, basis.parity)
    Hb = (U.T @ H @ U).tocsr()
    Hb.sort_indices()
    return Hb


def jz_operator(params: ModelParams, basis: BasisSpec) -> sp.csr_matrix:
    if basis.kind == "bare-Fock":
        return sp.diags(basis.states()[:, 1]).tocsr()
    N, K, m, sz, sz2, par, alpha = _displaced_parts(params, basis)
    Jz = _assemble_displaced(sz, alpha, K)
    U, _ = _parity_projector(par, K, basis.parity)
    return (U.T @ Jz @ U).tocsr()


def boson_index(params: ModelParams, basis: BasisSpec) -> np.ndarray:
    """Oscillator quantum number (n or k) of every block basis vector."""
    if basis.kind == "bare-Fock":
        return basis.states()[:, 0].astype(int)
    _, K, _, _, _, par, _ = _displaced_parts(params, basis)
    return _parity_projector(par, K, basis.parity)[1]


# -- eigensolution -----------------------------------------------------------------


def diagonalize(matrix, k: int | None = None, check: bool = True):
    """Eigenpairs of a real symmetric matrix, eigenvalues ascending.

    Dense LAPACK path for the full spectrum; with ``k`` set and a large
    sparse matrix, an implicitly restarted Lanczos run returns the k lowest
    pairs.  Each pair is checked against ``||Hv - lv|| <= 1e-10 max|l|``.
    Returns ``(eigenvalues, eigenvectors, residuals)``.
    """
    dim = matrix.shape[0]
    if k is not None and k < dim - 1 and sp.issparse(matrix) and dim > 200:
        vals, vecs = spla.eigsh(matrix, k=k, which="SA", tol=1e-14)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        if dim > DENSE_LIMIT:
            raise DimensionError(f"dense path limited to dimension {DENSE_LIMIT}")
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        if not np.allclose(dense, dense.T, atol=1e-12):
            raise ValueError("matrix is not symmetric")
        vals, vecs = sla.eigh(dense, driver="evd", overwrite_a=sp.issparse(matrix))
        if k is not None:
            vals, vecs = vals[:k], vecs[:, :k]
    residuals = np.linalg.norm(matrix @ vecs - vecs * vals, axis=0)
    if check:
        bound = RESIDUAL_RTOL * max(1.0, float(np.max(np.abs(vals))))
        bad = np.flatnonzero(residuals > bound)
        if bad.size:
            raise EigenConvergenceError(int(bad[0]), float(residuals[bad[0]]))
    return vals, vecs, residuals


def top_layer_weight(eigvecs: np.ndarray, boson_n: np.ndarray, n_max: int) -> np.ndarray:
    return np.sum(eigvecs[boson_n == n_max] ** 2, axis=0)


def convergence_filter(eigvecs: np.ndarray, basis: BasisSpec, tol: float = 1e-12, boson_n=None) -> np.ndarray:
    """True where the weight in the outermost boson layer is below ``tol``."""
    if boson_n is None:
        if basis.kind != "bare-Fock":
            raise ValueError("pass boson_n for the displaced basis")
        boson_n = basis.states()[:, 0]
    return top_layer_weight(eigvecs, np.asarray(boson_n), basis.n_max) < tol


def solve_spectrum(
    params: ModelParams,
    basis: BasisSpec,
    conv_tol: float = 1e-12,
    k: int | None = None,
    keep_vectors: bool = False,
    max_dim: int = DEFAULT_MAX_DIM,
) -> SpectrumResult:
    """Build, diagonalise and post-process one parity block."""
    H = build_hamiltonian(params, basis, max_dim) if basis.kind == "bare-Fock" else displaced_basis_hamiltonian(params, basis, max_dim)
    vals, vecs, res = diagonalize(H, k=k)
    jz_op = jz_operator(params, basis)
    jz = np.einsum("ij,ij->j", vecs, jz_op @ vecs)
    bn = boson_index(params, basis)
    w = top_layer_weight(vecs, bn, basis.n_max)
    return SpectrumResult(
        eigenvalues=vals,
        jz_expect=jz,
        parity=basis.parity,
        converged=w < conv_tol,
        residuals=res,
        top_weight=w,
        eigenvectors=vecs if keep_vectors else None,
        basis=basis,
    )


def ground_state(params: ModelParams, n_max: int) -> tuple[float, float]:
    """Ground energy and <J_z> from the positive-parity block (Lanczos)."""
    basis = BasisSpec(params.j, n_max, 1)
    H = build_hamiltonian(params, basis)
    vals, vecs, _ = diagonalize(H, k=1)
    jz = float(np.sum(vecs[:, 0] ** 2 * basis.states()[:, 1]))
    return float(vals[0]), jz


# -- derived observables -------------------------------------------------------------


def averaged_dos(eigs, params: ModelParams, window: int = 20, n_sectors: int = 2) -> AveragedDos:
    """Level density from consecutive windows of ``window`` eigenvalues.

    For adjacent windows with mean energies E_k < E_{k+1} the density is
    window / (E_{k+1} - E_k), placed at the midpoint.  ``n_sectors``
    rescales a single symmetry block to the density of the full spectrum
    (2 for one parity block).  Output is scaled as omega nu / (2 j) versus
    E / (omega0 j).
    """
    eigs = np.sort(np.asarray(eigs, dtype=float))
    if window < 1:
        raise ValueError("window must be positive")
    n_win = len(eigs) // window
    if n_win < 2:
        raise ValueError(f"need at least {2 * window} eigenvalues, got {len(eigs)}")
    means = eigs[: n_win * window].reshape(n_win, window).mean(axis=1)
    dE = np.diff(means)
    nu = n_sectors * window / dE
    eps_bar = 0.5 * (means[1:] + means[:-1]) / (params.omega0 * params.j)
    return AveragedDos(eps_bar, nu * params.omega / (2.0 * params.j), window)


def peres_lattice(spectrum: SpectrumResult, params: ModelParams) -> PeresLattice:
    return PeresLattice(
        eps=spectrum.eigenvalues / (params.omega0 * params.j),
        jz=spectrum.jz_expect / params.j,
        converged=spectrum.converged.copy(),
    )


def peres_from_eigpairs(vals: np.ndarray, vecs: np.ndarray, basis: BasisSpec, params: ModelParams, tol: float = 1e-12) -> PeresLattice:
    jz = np.einsum("ij,ij->j", vecs, jz_operator(params, basis) @ vecs)
    conv = convergence_filter(vecs, basis, tol, boson_index(params, basis))
    return PeresLattice(vals / (params.omega0 * params.j), jz / params.j, conv)
