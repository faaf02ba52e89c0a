"""First-order symmetric systems  A U_t + B U_x + C U = F  on the periodic strip.

Positivity of Theta = C + C^T - A_t - B_x, boundary admissibility, tangential
norms and a least-squares collocation solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, SolveError, UnsupportedLevelError
from .grid import Grid, GridField, periodic_fd2_matrix, spectral_matrix

SYM_TOL = 1e-14


@dataclass
class SymmetricSystem:
    """Coefficient fields have shape (n, n, nx, nt); F has shape (n, nx, nt).

    ``boundary_rows`` lists the component indices set to zero on t = tmax.
    """

    grid: Grid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    boundary_rows: tuple = (1, 2)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.A.shape[0]
        for name in ("A", "B"):
            M = getattr(self, name)
            asym = float(np.max(np.abs(M - np.swapaxes(M, 0, 1)))) if M.size else 0.0
            scale = max(1.0, float(np.max(np.abs(M))))
            if asym > SYM_TOL * scale:
                raise AssemblyError(f"{name} is not symmetric (max asymmetry {asym:.3e})", asymmetry=asym)
        if self.F.shape != (n,) + self.grid.shape:
            raise AssemblyError(f"F has shape {self.F.shape}, expected {(n,) + self.grid.shape}")
        if not np.all(np.isfinite(self.F)):
            raise AssemblyError("F is not finite")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def with_rhs(self, F: np.ndarray) -> "SymmetricSystem":
        return SymmetricSystem(self.grid, self.A, self.B, self.C, np.asarray(F, dtype=float),
                               self.boundary_rows, dict(self.meta))

    def apply(self, U: np.ndarray, Ut: np.ndarray, Ux: np.ndarray) -> np.ndarray:
        """A U_t + B U_x + C U from given (e.g. exact) derivatives."""
        return (np.einsum("ijxt,jxt->ixt", self.A, Ut) + np.einsum("ijxt,jxt->ixt", self.B, Ux)
                + np.einsum("ijxt,jxt->ixt", self.C, U))


# ------------------------------------------------------------------ positivity

@dataclass
class PositivityReport:
    theta_min_eig: float
    theta_s_min_eig: dict
    noncharacteristic_margin: float
    argmin: tuple = ()

    def to_dict(self) -> dict:
        return {"theta_min_eig": self.theta_min_eig,
                "theta_s_min_eig": {str(k): v for k, v in self.theta_s_min_eig.items()},
                "noncharacteristic_margin": self.noncharacteristic_margin}


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, 0, 1))


def _nodewise(M: np.ndarray) -> np.ndarray:
    """(n, n, nx, nt) -> (nx, nt, n, n)."""
    return np.moveaxis(np.moveaxis(M, 0, -1), 0, -1)


def theta_field(sys: SymmetricSystem) -> tuple[np.ndarray, np.ndarray]:
    """Theta and A_t on the grid, both symmetrized, node-major shape (nx, nt, n, n)."""
    g = sys.grid
    n = sys.n
    At = np.empty_like(sys.A)
    Bx = np.empty_like(sys.B)
    for i in range(n):
        for j in range(n):
            At[i, j] = g.dt(sys.A[i, j])
            Bx[i, j] = g.dx(sys.B[i, j])
    Th = sys.C + np.swapaxes(sys.C, 0, 1) - At - Bx
    asym = float(np.max(np.abs(Th - np.swapaxes(Th, 0, 1))))
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(Th)))):
        raise AssemblyError(f"Theta asymmetric by {asym:.3e}; A or B derivatives inconsistent")
    return _nodewise(_sym(Th)), _nodewise(_sym(At))


def noncharacteristic_margin(sys: SymmetricSystem) -> float:
    return float(np.min(np.abs(np.linalg.det(_nodewise(sys.A)[:, -1]))))


def theta(sys: SymmetricSystem) -> PositivityReport:
    return enlarged_theta(sys, 0)


def enlarged_theta(sys: SymmetricSystem, s: int) -> PositivityReport:
    """Min eigenvalue of Theta + m A_t over nodes, for each m in 0..s."""
    if s < 0 or s > 4:
        raise ValueError("enlarged positivity is checked for 0 <= s <= 4")
    Th, At = theta_field(sys)
    mins = {}
    argmin = ()
    for mlev in range(s + 1):
        ev = np.linalg.eigvalsh(Th + mlev * At)[..., 0]
        mins[mlev] = float(np.min(ev))
        if mlev == 0:
            argmin = tuple(int(i) for i in np.unravel_index(np.argmin(ev), ev.shape))
    running = {}
    best = np.inf
    for mlev in range(s + 1):
        best = min(best, mins[mlev])
        running[mlev] = best
    return PositivityReport(mins[0], running, noncharacteristic_margin(sys), argmin)


# --------------------------------------------------------------- admissibility

@dataclass
class SegmentReport:
    name: str
    eigenvalues: list
    imposed_rows: tuple
    dim_N: int
    nonnegative_on_N: bool
    nonnegative_count: int

    @property
    def maximal(self) -> bool:
        return self.dim_N == self.nonnegative_count

    def to_dict(self) -> dict:
        return {"name": self.name, "eigenvalues": self.eigenvalues, "imposed_rows": list(self.imposed_rows),
                "dim_N": self.dim_N, "nonnegative_on_N": self.nonnegative_on_N,
                "nonnegative_count": self.nonnegative_count, "maximal": self.maximal}


@dataclass
class AdmissibilityReport:
    segments: list

    def segment(self, name: str) -> SegmentReport:
        return next(s for s in self.segments if s.name == name)

    def to_dict(self) -> dict:
        return {"segments": [s.to_dict() for s in self.segments]}


def admissibility(sys: SymmetricSystem, tol: float = 1e-12) -> AdmissibilityReport:
    """Sign structure of Upsilon = A n_t on the two t-boundaries (x is periodic)."""
    nodes = _nodewise(sys.A)
    out = []
    for name, j, sgn, rows in (("t=tmax", -1, 1.0, tuple(sys.boundary_rows)), ("t=tmin", 0, -1.0, ())):
        Y = sgn * nodes[:, j]
        ev = np.linalg.eigvalsh(_sym(np.moveaxis(Y, 0, -1)).transpose(2, 0, 1))
        free = [k for k in range(sys.n) if k not in rows]
        if free:
            sub = Y[:, free][:, :, free]
            nonneg = bool(np.all(np.linalg.eigvalsh(sub)[:, 0] >= -tol))
        else:
            nonneg = True
        counts = np.sum(ev >= -tol, axis=1)
        # the count must be the same at every x-node for a well-defined boundary condition
        count = int(np.min(counts))
        out.append(SegmentReport(name, [float(v) for v in ev[0]], rows, len(free), nonneg, count))
    return AdmissibilityReport(out)


# ------------------------------------------------------------ tangential norms

def smoothstep5(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


@dataclass
class TangentialOps:
    """Cutoffs xi2 (= 1 for t < 1/2) and xi3 (= 1 for t > 1) with xi2 + xi3 = 1."""

    grid: Grid
    lo: float = 0.5
    hi: float = 1.0

    @property
    def xi3(self) -> np.ndarray:
        return smoothstep5((self.grid.t - self.lo) / (self.hi - self.lo))

    @property
    def xi2(self) -> np.ndarray:
        return 1.0 - self.xi3

    def apply(self, k: int, f: np.ndarray) -> np.ndarray:
        """D_k f for D_0 = I, D_1 = d_x, D_2 = xi2 d_t, D_3 = xi3 (t - tmax) d_t."""
        g = self.grid
        if k == 0:
            return f
        if k == 1:
            return g.dx(f)
        if k == 2:
            return self.xi2[None, :] * g.dt(f)
        if k == 3:
            return (self.xi3 * (g.t - g.tmax))[None, :] * g.dt(f)
        raise IndexError(k)


def tangential_norm(fld: GridField | np.ndarray, ops: TangentialOps, s: int) -> float:
    """Sum of squared L2 norms of D_{k1}..D_{kl} V over l <= s (no repeated identity)."""
    if s not in (0, 1):
        raise UnsupportedLevelError(f"tangential norm implemented for s in {{0, 1}}, got {s}")
    v = fld.values if isinstance(fld, GridField) else np.asarray(fld, dtype=float)
    comps = v if v.ndim == 3 else v[None]
    g = ops.grid
    total = 0.0
    for c in comps:
        total += g.integrate(c**2)
        if s == 1:
            for k in (1, 2, 3):
                total += g.integrate(ops.apply(k, c) ** 2)
    return float(total)


# ------------------------------------------------------------ least squares

@dataclass
class BVPSolution:
    U: GridField
    iterations: int
    residual_history: list
    ls_residual: float
    method: str


def _x_operator(nx: int, scheme: str) -> sp.csr_matrix:
    if scheme == "fd2":
        return periodic_fd2_matrix(nx)
    if scheme == "spectral":
        return sp.csr_matrix(spectral_matrix(nx, 1))
    raise ValueError(f"unknown x scheme {scheme!r}")


def collocation_matrix(sys: SymmetricSystem, x_scheme: str = "fd2", boundary_weight: float = 1.0) -> sp.csr_matrix:
    """Rows: every equation at every node, then the boundary rows at t = tmax.

    t-derivatives are 3-point centered with one-sided closures; on t = 0 the
    equations whose A-row vanishes reduce to algebraic rows automatically.
    """
    g = sys.grid
    nx, nt = g.shape
    N = nx * nt
    Dt = sp.kron(sp.identity(nx), g.dt_matrix(1, accuracy=2), format="csr")
    Dx = sp.kron(_x_operator(nx, x_scheme), sp.identity(nt), format="csr")
    blocks = [[None] * sys.n for _ in range(sys.n)]
    for r in range(sys.n):
        for c in range(sys.n):
            a, b, cc = sys.A[r, c].ravel(), sys.B[r, c].ravel(), sys.C[r, c].ravel()
            blk = sp.diags(cc)
            if np.any(a):
                blk = blk + sp.diags(a) @ Dt
            if np.any(b):
                blk = blk + sp.diags(b) @ Dx
            blocks[r][c] = blk
    L = sp.bmat(blocks, format="csr")
    if sys.boundary_rows:
        idx = np.arange(nx) * nt + (nt - 1)
        rows = []
        for k in sys.boundary_rows:
            rows.append(sp.csr_matrix((np.full(nx, boundary_weight), (np.arange(nx), k * N + idx)),
                                      shape=(nx, sys.n * N)))
        L = sp.vstack([L] + rows, format="csr")
    return L


def solve_bvp(sys: SymmetricSystem, grid: Grid | None = None, *, method: str = "cg", x_scheme: str = "fd2",
              tol: float = 1e-10, maxiter: int = 50_000) -> BVPSolution:
    """Least-squares collocation solve of the boundary value problem.

    ``method`` is "cg" (Jacobi-preconditioned CG on the normal equations) or
    "direct" (sparse LU of the normal equations).
    """
    g = grid or sys.grid
    L = collocation_matrix(sys, x_scheme)
    rhs = np.concatenate([sys.F.ravel(), np.zeros(L.shape[0] - sys.F.size)])
    M = (L.T @ L).tocsr()
    b = L.T @ rhs
    history: list = []
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros(M.shape[0])
        its = 0
    elif method == "direct":
        x = spla.spsolve(M.tocsc(), b)
        its = 1
        history.append(float(np.linalg.norm(M @ x - b)) / bnorm)
    elif method == "cg":
        d = M.diagonal()
        P = sp.diags(1.0 / np.where(d > 0, d, 1.0))

        def cb(xk):
            history.append(float(np.linalg.norm(M @ xk - b)) / bnorm)

        x, info = spla.cg(M, b, x0=np.zeros_like(b), rtol=tol, atol=0.0, maxiter=maxiter, M=P, callback=cb)
        its = len(history)
        if info != 0:
            raise SolveError(f"CG on the normal equations did not converge in {maxiter} iterations",
                             residual_history=history)
    else:
        raise ValueError(f"unknown method {method!r}")
    U = x.reshape((sys.n,) + g.shape)
    res = float(np.linalg.norm(L @ x - rhs))
    return BVPSolution(GridField(g, U), its, history, res, method)


def dump_matrix(M: sp.spmatrix, path) -> None:
    """Coordinate text format: one 'row col value' line per stored entry."""
    C = sp.coo_matrix(M)
    order = np.lexsort((C.col, C.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i in order:
            fh.write(f"{C.row[i]} {C.col[i]} {C.data[i]:.17g}\n")
