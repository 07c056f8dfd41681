"""Small conic-programming front end over the Clarabel interior-point solver.

Variables are a flat real vector made of scalar variables and PSD blocks
(stored in ``svec`` layout).  Constraints are affine expressions
``A @ x + c`` required to be zero, non-negative, or PSD.
"""

from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from ._linalg import smat, svec, svec_len
from ._validation import min_eigenvalue

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
INACCURATE = "inaccurate"
FAILED = "failed"

_STATUS = {
    "Solved": OPTIMAL,
    "PrimalInfeasible": INFEASIBLE,
    "AlmostPrimalInfeasible": INFEASIBLE,
    "AlmostSolved": INACCURATE,
}


@dataclass(frozen=True)
class Block:
    """A PSD matrix variable occupying ``svec_len(n)`` entries from ``offset``."""

    offset: int
    n: int

    @property
    def size(self):
        return svec_len(self.n)

    @property
    def slice(self):
        return slice(self.offset, self.offset + self.size)

    def selector(self, nvar):
        """Sparse matrix extracting svec(X) from the full variable vector."""
        m = self.size
        return sp.csr_matrix(
            (np.ones(m), (np.arange(m), np.arange(self.offset, self.offset + m))),
            shape=(m, nvar),
        )


@dataclass
class _Constraint:
    kind: str  # "eq" | "nonneg" | "psd"
    A: sp.csr_matrix
    c: np.ndarray
    n: int = 0  # matrix order for psd constraints
    name: str = ""


@dataclass
class SdpSolution:
    status: str
    x: np.ndarray = field(repr=False)
    objective: float
    blocks: list = field(repr=False)
    duals: dict = field(repr=False)
    primal_residual: float
    gap: float
    iterations: int = 0

    @property
    def ok(self):
        return self.status == OPTIMAL


class SdpProblem:
    """Builder for ``min/max q @ x`` subject to affine cone constraints.

    >>> prob = SdpProblem()
    >>> X = prob.add_psd(2)
    >>> _ = prob.add_eq(prob.entry(X, 0, 0), [-1.0])
    >>> prob.set_objective(prob.trace_row(X))
    >>> round(prob.solve().objective, 6)
    1.0
    """

    def __init__(self):
        self.nvar = 0
        self.blocks = []
        self.constraints = []
        self.q = None
        self.sense = "min"

    # -- variables
    def add_psd(self, n):
        blk = Block(self.nvar, n)
        self.nvar += blk.size
        self.blocks.append(blk)
        return blk

    def add_scalar(self, count=1):
        start = self.nvar
        self.nvar += count
        return start if count == 1 else np.arange(start, start + count)

    # -- row helpers (all return 1 x nvar sparse rows)
    def _row(self, cols, vals):
        cols = np.atleast_1d(cols)
        return sp.csr_matrix((np.asarray(vals, dtype=float), (np.zeros(len(cols), dtype=int), cols)), shape=(1, self.nvar))

    def entry(self, blk, i, j):
        """Row giving X[i, j]."""
        if i > j:
            i, j = j, i
        k = blk.offset + j * (j + 1) // 2 + i
        return self._row([k], [1.0 if i == j else 1 / np.sqrt(2.0)])

    def scalar(self, idx):
        return self._row([idx], [1.0])

    def trace_row(self, blk):
        cols = [blk.offset + j * (j + 1) // 2 + j for j in range(blk.n)]
        return self._row(cols, np.ones(blk.n))

    def inner_row(self, blk, m):
        """Row giving <M, X> for a symmetric M."""
        v = svec(m)
        cols = np.arange(blk.offset, blk.offset + blk.size)
        return self._row(cols, v)

    def selector(self, blk):
        return blk.selector(self.nvar)

    # -- constraints
    def _add(self, kind, A, c, n=0, name=""):
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[1] < self.nvar:
            A = sp.hstack([A, sp.csr_matrix((A.shape[0], self.nvar - A.shape[1]))], format="csr")
        c = np.asarray(c, dtype=float).ravel()
        if c.size == 1 and A.shape[0] > 1:
            c = np.full(A.shape[0], c[0])
        if c.size != A.shape[0]:
            raise ValueError(f"constant has length {c.size}, expected {A.shape[0]}")
        self.constraints.append(_Constraint(kind, A, c, n, name))
        return len(self.constraints) - 1

    def add_eq(self, A, c=0.0, name=""):
        return self._add("eq", A, c, name=name)

    def add_nonneg(self, A, c=0.0, name=""):
        return self._add("nonneg", A, c, name=name)

    def add_psd_constraint(self, A, c, n, name=""):
        """Require smat(A @ x + c) to be PSD (rows in svec order)."""
        if sp.csr_matrix(A).shape[0] != svec_len(n):
            raise ValueError(f"psd constraint of order {n} needs {svec_len(n)} rows")
        return self._add("psd", A, c, n, name)

    def set_objective(self, row, sense="min"):
        if sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
        q = np.asarray(sp.csr_matrix(row).todense()).ravel() if sp.issparse(row) else np.asarray(row, float).ravel()
        self.q = q
        self.sense = sense

    # -- solve
    def _assemble(self):
        n = self.nvar
        rows, rhs, cones = [], [], []
        pad = lambda A: A if A.shape[1] == n else sp.hstack([A, sp.csr_matrix((A.shape[0], n - A.shape[1]))])
        order = {"eq": 0, "nonneg": 1, "psd": 2}
        groups = sorted(range(len(self.constraints)), key=lambda k: order[self.constraints[k].kind])
        # every PSD block is itself a cone constraint
        spans = {}
        pos = 0
        for k in groups:
            con = self.constraints[k]
            rows.append(-pad(con.A))
            rhs.append(con.c)
            m = con.A.shape[0]
            spans[k] = (pos, pos + m)
            pos += m
            if con.kind == "eq":
                cones.append(clarabel.ZeroConeT(m))
            elif con.kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(m))
            else:
                cones.append(clarabel.PSDTriangleConeT(con.n))
        for blk in self.blocks:
            rows.append(-blk.selector(n))
            rhs.append(np.zeros(blk.size))
            cones.append(clarabel.PSDTriangleConeT(blk.n))
        A = sp.vstack(rows, format="csc")
        b = np.concatenate(rhs)
        return A, b, cones, spans

    def solve(self, feas_tol=1e-8, gap_tol=1e-8, max_iter=200):
        if self.q is None:
            self.q = np.zeros(self.nvar)
        q = np.zeros(self.nvar)
        q[: self.q.size] = self.q
        sign = 1.0 if self.sense == "min" else -1.0
        A, b, cones, spans = self._assemble()
        P = sp.csc_matrix((self.nvar, self.nvar))
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = feas_tol
        settings.tol_gap_abs = gap_tol
        settings.tol_gap_rel = gap_tol
        settings.max_iter = max_iter
        settings.presolve_enable = False
        try:
            sol = clarabel.DefaultSolver(P, sign * q, A, b, cones, settings).solve()
        except BaseException as exc:  # the binding raises PanicException on breakdown
            if isinstance(exc, (KeyboardInterrupt, SystemExit)):
                raise
            return SdpSolution(FAILED, np.full(self.nvar, np.nan), np.nan, [], {}, np.inf, np.inf)
        status = _STATUS.get(str(sol.status).split(".")[-1], FAILED)
        x = np.asarray(sol.x)
        z = np.asarray(sol.z)
        duals = {k: z[a:e] for k, (a, e) in spans.items()}
        if status in (OPTIMAL, INACCURATE):
            obj = float(q @ x)
            gap = abs(sol.obj_val - sol.obj_val_dual)
            res = self.residual(x)
        else:
            obj, gap, res = np.nan, np.inf, np.inf
        blocks = [smat(x[blk.slice], blk.n) for blk in self.blocks]
        return SdpSolution(status, x, obj, blocks, duals, res, gap, int(sol.iterations))

    def residual(self, x):
        """Largest violation over all constraints and PSD blocks."""
        worst = 0.0
        for con in self.constraints:
            v = con.A @ x + con.c
            if con.kind == "eq":
                worst = max(worst, float(np.max(np.abs(v), initial=0.0)))
            elif con.kind == "nonneg":
                worst = max(worst, float(-np.min(v, initial=0.0)))
            else:
                worst = max(worst, -min_eigenvalue(smat(v, con.n)))
        for blk in self.blocks:
            worst = max(worst, -min_eigenvalue(smat(x[blk.slice], blk.n)))
        return worst


def solve(problem, feas_tol=1e-8, gap_tol=1e-8):
    """Solve ``problem``; never raises on numerical breakdown (status ``failed``)."""
    return problem.solve(feas_tol=feas_tol, gap_tol=gap_tol)
