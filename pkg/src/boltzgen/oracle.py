"""Numerical evaluation of the generating functions of a specification.

Values at a real point x are obtained by Newton iteration on the system
``y = Phi(x, y)`` started from ``y = 0``. Multiset constructions need the
system at the geometric sequence x, x^2, x^3, ... which is solved on a
memoised lattice of exponents. Classes given by a differential equation
are integrated with RK4 on a uniform grid refined by halving.
"""

from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DivergenceError, InternalError, ParameterError
from .kernels import gf
from .spec import (
    Atom,
    Cycle,
    Empty,
    MSet,
    Product,
    Ref,
    Seq,
    Set,
    Spec,
    Union,
    min_sizes,
    require_valid,
)

DEFAULT_TOL = float(os.environ.get("BOLTZGEN_TOL", "1e-12"))
VALUE_CAP = 1e9
# Newton iterates diverge through the monotonicity/domain checks long before
# this; generating functions like partitions legitimately exceed 1e9 below rho
NEWTON_CAP = 1e250
MAX_ITER = 500
X_CAP = 1e6
RADIUS_RTOL = 1e-9
MAX_GRID_STEPS = 2**22
BLOWUP_ETA = 0.005
MSET_EDGE = 1e-4
ODE_FLOOR_FACTOR = 1e3
TUNE_SEARCH_TOL = 1e-10

CONVERGED = "converged"
DIVERGED = "diverged"

_STATUS_TEXT = {
    gf.CAP: "iterate exceeded the value cap",
    gf.SINGULAR: "I - J became singular",
    gf.MAXIT: "iteration cap reached",
    gf.DOMAIN: "construction argument reached its singularity",
    gf.NONMONOTONE: "iteration left the monotone regime",
    gf.BLOWUP: "differential solution blew up",
}


# --------------------------------------------------------------------------
# compilation to postfix rows
# --------------------------------------------------------------------------


class Program:
    """A specification flattened into kernel arrays."""

    def __init__(self, spec: Spec):
        require_valid(spec)
        self.spec = spec
        self.names = spec.names
        self.index = {n: i for i, n in enumerate(self.names)}
        self.m = len(self.names)
        self.atom_types = spec.atom_types or [""]
        self.atom_index = {t: i for i, t in enumerate(self.atom_types)}
        self.w = np.array([spec.weight(t) for t in self.atom_types], dtype=np.float64)
        self.mset_slots: dict = {}
        self._op: list[int] = []
        self._arg: list[int] = []
        starts, ends = [], []
        self.depth = 1
        for d in spec.defs:
            starts.append(len(self._op))
            self._emit(d.body, 0)
            ends.append(len(self._op))
        self.mset_rows: list[int] = []
        done = 0
        while done < len(self.mset_slots):
            node = list(self.mset_slots)[done]
            self.mset_rows.append(len(starts))
            starts.append(len(self._op))
            self._emit(node.arg, 0)
            ends.append(len(self._op))
            done += 1
        self.op = np.array(self._op, dtype=np.int64)
        self.arg = np.array(self._arg, dtype=np.int64)
        self.starts = np.array(starts, dtype=np.int64)
        self.ends = np.array(ends, dtype=np.int64)
        self.n_rows = len(starts)
        self.n_slots = len(self.mset_slots)
        self.diff = np.array([i for i, d in enumerate(spec.defs) if d.differential], dtype=np.int64)
        self.plain = np.array([i for i, d in enumerate(spec.defs) if not d.differential], dtype=np.int64)
        self.y0 = np.zeros(self.m)
        for i, d in enumerate(spec.defs):
            if d.differential:
                self.y0[i] = d.initial_count
        self.has_mset = self.n_slots > 0
        self.has_diff = self.diff.size > 0

    def _push(self, op, arg, depth):
        self._op.append(op)
        self._arg.append(arg)
        self.depth = max(self.depth, depth)

    def _emit(self, e, depth):
        if isinstance(e, Empty):
            self._push(gf.OP_EMPTY, 0, depth + 1)
        elif isinstance(e, Atom):
            self._push(gf.OP_ATOM, self.atom_index[e.type], depth + 1)
        elif isinstance(e, Ref):
            self._push(gf.OP_REF, self.index[e.name], depth + 1)
        elif isinstance(e, (Union, Product)):
            self._emit(e.left, depth)
            self._emit(e.right, depth + 1)
            self._push(gf.OP_ADD if isinstance(e, Union) else gf.OP_MUL, 0, depth + 1)
        else:
            self._emit(e.arg, depth)
            if isinstance(e, MSet):
                slot = self.mset_slots.setdefault(e, len(self.mset_slots))
                self._push(gf.OP_MSET, slot, depth + 1)
            else:
                code = {Seq: gf.OP_SEQ, Set: gf.OP_SET, Cycle: gf.OP_CYC}[type(e)]
                self._push(code, 0, depth + 1)

    def scratch(self):
        return np.empty(self.depth + 1), np.empty((self.depth + 1, self.m + 1))

    def rows(self, lo, hi, x, y, tails, tails_dx=None, want_d=False, scratch=None):
        """Evaluate rows lo..hi-1; returns (values, jacobian-with-x-column, bad)."""
        sv, sd = scratch if scratch is not None else self.scratch()
        n = hi - lo
        vals = np.empty(n)
        jac = np.empty((n, self.m + 1))
        if tails_dx is None:
            tails_dx = np.zeros_like(tails)
        bad = gf.eval_rows(self.op, self.arg, self.starts, self.ends, lo, hi, float(x), self.w,
                           y, tails, tails_dx, vals, jac, sv, sd, want_d)
        return vals, jac, bad


# --------------------------------------------------------------------------
# solved points
# --------------------------------------------------------------------------


@dataclass
class PointSolution:
    z: float
    y: np.ndarray
    tails: np.ndarray
    status: int
    iterations: int = 0
    residual: float = 0.0
    history: tuple = ()
    reason: str = ""
    dy: np.ndarray | None = None
    tails_dx: np.ndarray | None = None

    @property
    def ok(self):
        return self.status == gf.OK


class LatticeSolver:
    """Solves an algebraic system at the points x**k, k = 1, 2, ...

    With multisets the whole lattice k = 1..K is solved bottom-up by one
    kernel call; K is the first power of two at which the multiset
    arguments are so small that the omitted part of every tail is below
    tol / 4. Points past K are solved on demand with zero tails.
    """

    def __init__(self, program: Program, x: float, tol: float = DEFAULT_TOL,
                 maxit: int = MAX_ITER, cap: float = NEWTON_CAP):
        if program.has_mset and not x < 1.0:
            raise ParameterError(f"multiset classes require x < 1 (got x={x})")
        self.p = program
        self.x = float(x)
        self.tol = tol
        self.maxit = maxit
        self.cap = cap
        self.log_cap = math.log(cap)
        self.points: dict[int, PointSolution] = {}
        self.scratch = program.scratch()
        self.K = 1
        self._tables = None
        self._dtables = None

    def z(self, k: int) -> float:
        return self.x**k

    def _newton(self, z, tails, hist=None):
        p = self.p
        y = np.zeros(p.m)
        if hist is None:
            hist = np.zeros(self.maxit + 8)
        sv, sd = self.scratch
        status, it, res = gf.newton(p.op, p.arg, p.starts, p.ends, z, p.w, y, p.plain, tails,
                                    np.zeros_like(tails), self.tol, self.maxit, self.cap, hist, sv, sd)
        if status == gf.OK and (np.any(y < -self.tol) or not np.all(np.isfinite(y))):
            status = gf.DOMAIN
        return status, it, res, y

    def _row_values(self, z, y, tails) -> np.ndarray:
        p = self.p
        out = np.empty(p.n_slots)
        for s, row in enumerate(p.mset_rows):
            vals, _, _ = p.rows(row, row + 1, z, y, tails, scratch=self.scratch)
            out[s] = vals[0]
        return out

    def _choose_K(self):
        p = self.p
        limit = max(64, 2**23 // max(p.m, 1))
        K = 8
        zero = np.zeros(p.n_slots)
        while True:
            if K > limit:
                return None
            z = self.x**K
            status, _, _, y = self._newton(z, zero)
            if status == gf.OK:
                a = self._row_values(z, y, zero)
                if np.all(a / (1.0 - self.x) <= self.tol / 4):
                    return K
            K *= 2

    def _solve_lattice(self):
        p = self.p
        K = self._choose_K()
        if K is None:
            self.K = 1
            self._fail(gf.MAXIT, "too close to 1 for the multiset lattice")
            return
        m, ns = p.m, p.n_slots
        Y = np.zeros((K + 1, m))
        A = np.zeros((K + 1, ns))
        T = np.zeros((K + 1, ns))
        status = np.zeros(K + 1, dtype=np.int64)
        sv, sd = self.scratch
        hist = np.zeros(self.maxit + 8)
        failed = gf.lattice(p.op, p.arg, p.starts, p.ends, np.array(p.mset_rows, dtype=np.int64),
                            self.x, K, 2, p.w, self.tol, self.maxit, self.cap, self.log_cap,
                            Y, A, T, status, hist, sv, sd)
        self.K = K
        self._tables = (Y, A, T, status)
        if failed:
            self._fail(int(status[failed]), f"inner point x^{failed}: {_STATUS_TEXT[int(status[failed])]}")
            return
        tails = (A[2:] / np.arange(2, K + 1)[:, None]).sum(axis=0)
        if np.any(tails > self.log_cap):
            self._fail(gf.CAP, _STATUS_TEXT[gf.CAP])
            return
        T[1] = tails
        st, it, res, y = self._newton(self.x, tails, hist)
        Y[1] = y
        status[1] = st
        n_hist = min(it + 1, hist.size)
        self.points[1] = PointSolution(self.x, y, tails, st, it, res, tuple(hist[:n_hist]),
                                       "" if st == gf.OK else _STATUS_TEXT[st])

    def _fail(self, status, reason):
        self.points[1] = PointSolution(self.x, np.zeros(self.p.m), np.zeros(self.p.n_slots),
                                       status, reason=reason)

    def solve(self, k: int = 1) -> PointSolution:
        sol = self.points.get(k)
        if sol is not None:
            return sol
        p = self.p
        if k == 1 and p.has_mset:
            self._solve_lattice()
            return self.points[1]
        if k != 1 and not self.solve(1).ok and k <= self.K:
            return self.points[1]
        if k <= self.K and self._tables is not None:
            Y, _, T, status = self._tables
            sol = PointSolution(self.x**k, Y[k].copy(), T[k].copy(), int(status[k]))
            if self._dtables is not None:
                sol.dy, sol.tails_dx = self._dtables[0][k].copy(), self._dtables[1][k].copy()
        else:
            tails = np.zeros(p.n_slots)
            hist = np.zeros(self.maxit + 8)
            st, it, res, y = self._newton(self.x**k, tails, hist)
            n_hist = min(it + 1, hist.size)
            sol = PointSolution(self.x**k, y, tails, st, it, res, tuple(hist[:n_hist]),
                                "" if st == gf.OK else _STATUS_TEXT[st])
        self.points[k] = sol
        return sol

    def derivative(self, k: int = 1) -> np.ndarray:
        """dy/dz at z = x**k by implicit differentiation of y = Phi(z, y)."""
        sol = self.solve(k)
        if not sol.ok:
            raise DivergenceError(f"no derivative at a diverged point x^{k}")
        if sol.dy is not None:
            return sol.dy
        p = self.p
        if p.has_mset and k <= self.K:
            self._lattice_derivative()
            return self.points[k].dy
        tails_dx = np.zeros(p.n_slots)
        sol.dy = self._linear_dy(sol, tails_dx)
        return sol.dy

    def _linear_dy(self, sol, tails_dx):
        p = self.p
        sol.tails_dx = tails_dx
        _, jac, _ = p.rows(0, p.m, sol.z, sol.y, sol.tails, tails_dx, True, self.scratch)
        A = np.eye(p.m) - jac[:, :p.m]
        try:
            return np.linalg.solve(A, jac[:, p.m])
        except np.linalg.LinAlgError:
            raise DivergenceError("I - J is singular at the evaluation point") from None

    def _lattice_derivative(self):
        p = self.p
        Y, _, T, _ = self._tables
        K = self.K
        DY = np.zeros((K + 1, p.m))
        DT = np.zeros((K + 1, p.n_slots))
        sv, sd = self.scratch
        if not gf.lattice_derivative(p.op, p.arg, p.starts, p.ends, np.array(p.mset_rows, dtype=np.int64),
                                     self.x, K, p.w, Y, T, DY, DT, sv, sd):
            raise DivergenceError("I - J is singular on the multiset lattice")
        self._dtables = (DY, DT)
        for k, sol in self.points.items():
            if k <= K:
                sol.dy, sol.tails_dx = DY[k].copy(), DT[k].copy()


class OdeGrid:
    """Dense RK4 solution of the differential classes on [0, x]."""

    def __init__(self, program: Program, x: float, ys: np.ndarray, fs: np.ndarray):
        self.p = program
        self.x = x
        self.n = ys.shape[0] - 1
        self.h = x / self.n
        self.ys = ys
        self.fs = fs
        self.t = np.linspace(0.0, x, self.n + 1)
        self._columns: dict = {}

    def column_of(self, cls: str) -> int:
        i = self.p.index[cls]
        hits = np.nonzero(self.p.diff == i)[0]
        if not hits.size:
            raise ParameterError(f"{cls} is not a differential class")
        return int(hits[0])

    def column(self, col: int):
        """Contiguous (values, derivatives) of one differential class."""
        if col not in self._columns:
            self._columns[col] = (np.ascontiguousarray(self.ys[:, col]),
                                  np.ascontiguousarray(self.fs[:, col]))
        return self._columns[col]

    def interp(self, t: float) -> np.ndarray:
        """Cubic Hermite interpolation of the differential-class values at t."""
        out = np.empty(self.ys.shape[1])
        gf.hermite_eval(self.ys, self.fs, self.n, self.h, self.x, float(t), out)
        return out

    def interp_one(self, col: int, t: float) -> float:
        return float(gf.hermite_eval_one(self.ys, self.fs, self.n, self.h, self.x, col, float(t)))


class OdeSolver:
    """Evaluates a specification containing differential classes."""

    def __init__(self, program: Program, x: float, tol: float = DEFAULT_TOL,
                 maxit: int = MAX_ITER, cap: float = VALUE_CAP):
        self.p = program
        self.x = float(x)
        self.tol = tol
        self.maxit = maxit
        self.cap = cap
        self.scratch = program.scratch()
        self.grid: OdeGrid | None = None
        self.sol: PointSolution | None = None

    def blows_up(self, x: float | None = None) -> bool:
        p = self.p
        sv, sd = self.scratch
        status, _ = gf.rk4_blowup(p.op, p.arg, p.starts, p.ends, float(self.x if x is None else x),
                                  p.w, p.y0, p.diff, p.plain, self.tol, self.maxit, self.cap,
                                  BLOWUP_ETA, sv, sd)
        return status != gf.OK

    def _run(self, n):
        p = self.p
        nd = p.diff.size
        ys = np.empty((n + 1, nd))
        fs = np.empty((n + 1, nd))
        sv, sd = self.scratch
        status = gf.rk4_grid(p.op, p.arg, p.starts, p.ends, self.x, n, p.w, p.y0, p.diff, p.plain,
                             self.tol, self.maxit, self.cap, ys, fs, sv, sd)
        return status, ys, fs

    def solve(self, k: int = 1) -> PointSolution:
        if k != 1:
            raise ParameterError("differential specifications have no lattice points")
        if self.sol is not None:
            return self.sol
        p = self.p
        fail = None
        if self.blows_up():
            fail = PointSolution(self.x, p.y0.copy(), np.zeros(0), gf.BLOWUP, reason=_STATUS_TEXT[gf.BLOWUP])
        else:
            n = 64
            status, prev, prev_f = self._run(n)
            history = []
            while True:
                if status != gf.OK:
                    fail = PointSolution(self.x, p.y0.copy(), np.zeros(0), status, reason=_STATUS_TEXT[status])
                    break
                n *= 2
                if n > MAX_GRID_STEPS:
                    fail = PointSolution(self.x, p.y0.copy(), np.zeros(0), gf.MAXIT,
                                         reason="RK4 grid did not converge")
                    break
                status, ys, fs = self._run(n)
                if status != gf.OK:
                    continue
                err = float(np.max(np.abs(ys[::2] - prev) / np.maximum(1.0, np.abs(ys[::2]))))
                history.append(err)
                if err <= self.tol:
                    break
                if (len(history) >= 2 and err > history[-2] / 4
                        and err <= ODE_FLOOR_FACTOR * self.tol):
                    # rounding floor: near a pole early rounding errors are
                    # amplified and halving stops helping
                    break
                prev, prev_f = ys, fs
        if fail is not None:
            self.sol = fail
            return fail
        self.grid = OdeGrid(p, self.x, ys, fs)
        y = p.y0.copy()
        # Richardson-corrected endpoint
        y[p.diff] = ys[-1] + (ys[-1] - prev[-1]) / 15.0
        sol = self.solve_plain(self.x, y)
        sol.iterations = n
        sol.residual = history[-1] if history else 0.0
        sol.history = tuple(history)
        self.sol = sol
        return sol

    def solve_plain(self, t: float, y: np.ndarray) -> PointSolution:
        """Values of the plain classes at t given the differential ones in y."""
        p = self.p
        y = y.copy()
        tails = np.zeros(0)
        if p.plain.size:
            y[p.plain] = 0.0
            hist = np.zeros(self.maxit + 8)
            sv, sd = self.scratch
            status, it, res = gf.newton(p.op, p.arg, p.starts, p.ends, float(t), p.w, y, p.plain,
                                        tails, tails, self.tol, self.maxit, self.cap, hist, sv, sd)
            return PointSolution(t, y, tails, status, it, res,
                                 reason="" if status == gf.OK else _STATUS_TEXT[status])
        return PointSolution(t, y, tails, gf.OK)

    def values_at(self, t: float) -> np.ndarray:
        """All class values at 0 <= t <= x (differential ones interpolated)."""
        if self.grid is None:
            self.solve()
        p = self.p
        y = p.y0.copy()
        y[p.diff] = self.grid.interp(t)
        if not p.plain.size:
            return y
        sol = self.solve_plain(t, y)
        if not sol.ok:
            raise DivergenceError(f"plain classes diverge at t={t}")
        return sol.y

    def derivative(self, k: int = 1) -> np.ndarray:
        sol = self.solve(k)
        if not sol.ok:
            raise DivergenceError("no derivative at a diverged point")
        if sol.dy is not None:
            return sol.dy
        p = self.p
        _, jac, _ = p.rows(0, p.m, self.x, sol.y, np.zeros(0), None, True, self.scratch)
        vals, _, _ = p.rows(0, p.m, self.x, sol.y, np.zeros(0), None, False, self.scratch)
        dy = np.zeros(p.m)
        dy[p.diff] = vals[p.diff]
        if p.plain.size:
            P, D = p.plain, p.diff
            A = np.eye(P.size) - jac[np.ix_(P, P)]
            b = jac[P, p.m] + jac[np.ix_(P, D)] @ dy[D]
            dy[P] = np.linalg.solve(A, b)
        sol.dy = dy
        return dy


def make_solver(program: Program, x: float, tol: float = DEFAULT_TOL):
    if program.has_diff:
        return OdeSolver(program, x, tol)
    return LatticeSolver(program, x, tol)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OracleTable:
    x: float
    values: dict
    status: str
    iterations: int
    residual: float
    residuals: tuple = ()
    ode_grid: dict | None = None
    reason: str = ""
    solver: object = field(default=None, repr=False, compare=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_json(self) -> dict:
        return {
            "x": self.x,
            "status": self.status,
            "values": self.values,
            "iterations": self.iterations,
            "residual": self.residual,
            "reason": self.reason,
        }


_PROGRAMS: dict = {}


def program_for(spec: Spec) -> Program:
    key = spec
    prog = _PROGRAMS.get(key)
    if prog is None:
        prog = Program(spec)
        if len(_PROGRAMS) > 256:
            _PROGRAMS.clear()
        _PROGRAMS[key] = prog
    return prog


def evaluate(spec: Spec, x: float, tol: float = DEFAULT_TOL) -> OracleTable:
    """Values of every generating function of `spec` at x."""
    if not x > 0 or not math.isfinite(x):
        raise ParameterError("x must be a positive real")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    prog = program_for(spec)
    solver = make_solver(prog, x, tol)
    sol = solver.solve(1)
    grid = None
    if prog.has_diff and solver.grid is not None:
        g = solver.grid
        grid = {prog.names[c]: np.column_stack([g.t, g.ys[:, i]]) for i, c in enumerate(prog.diff)}
    values = {n: float(v) for n, v in zip(prog.names, sol.y)}
    return OracleTable(
        x=float(x),
        values=values,
        status=CONVERGED if sol.ok else DIVERGED,
        iterations=sol.iterations,
        residual=float(sol.residual),
        residuals=tuple(float(r) for r in sol.history),
        ode_grid=grid,
        reason=sol.reason,
        solver=solver,
    )


def _converges(spec: Spec, x: float) -> bool:
    prog = program_for(spec)
    try:
        if prog.has_diff:
            return not OdeSolver(prog, x).blows_up()
        sol = LatticeSolver(prog, x).solve(1)
    except ParameterError:
        return False
    # running past the float range is not a singularity: the least fixed
    # point is finite (multisets below 1, exp-type classes everywhere) and
    # divergence shows up as a domain or monotonicity failure instead
    return sol.ok or sol.status == gf.CAP


@functools.lru_cache(maxsize=128)
def find_radius(spec: Spec, cls: str, rtol: float = RADIUS_RTOL) -> tuple[float, float]:
    """Radius of convergence of class `cls`, as (estimate, half-width).

    Returns ``(inf, 0.0)`` when no divergence is found below ``X_CAP``.
    """
    sub = spec.restrict(cls)
    require_valid(sub)
    has_mset = program_for(sub).has_mset
    x = 2.0**-20
    if _converges(sub, x):
        while True:
            nxt = 2 * x
            if nxt > X_CAP:
                return math.inf, 0.0
            if not _converges(sub, nxt):
                lo, hi = x, nxt
                break
            x = nxt
    else:
        lo, hi = 0.0, x
    while hi - lo > rtol * hi:
        if has_mset and lo >= 1.0 - MSET_EDGE:
            # multisets diverge at 1 at the latest and the lattice grows like
            # 1 / (1 - x), so the last stretch is not resolved
            return 1.0, MSET_EDGE
        mid = 0.5 * (lo + hi)
        if _converges(sub, mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), 0.5 * (hi - lo)


def _solver_for_class(spec: Spec, cls: str, x: float, tol: float):
    sub = spec.restrict(cls)
    prog = program_for(sub)
    solver = make_solver(prog, x, tol)
    sol = solver.solve(1)
    if not sol.ok:
        raise DivergenceError(f"oracle diverges at x={x} ({sol.reason})")
    return prog, solver, sol


def eval_derivative(spec: Spec, cls: str, x: float, method: str = "linear",
                    radius: float | None = None, tol: float = DEFAULT_TOL) -> float:
    """C'(x) for class `cls`.

    ``method="linear"`` solves the linearised system (I - J) y' = dPhi/dx;
    ``method="fd"`` is a finite-difference estimate kept as a cross-check.
    """
    if method == "fd":
        return _fd_derivative(spec, cls, x, radius, tol)
    prog, solver, _ = _solver_for_class(spec, cls, x, tol)
    return float(solver.derivative(1)[prog.index[cls]])


def _value(spec, cls, x, tol):
    prog, _, sol = _solver_for_class(spec, cls, x, tol)
    return float(sol.y[prog.index[cls]])


def _fd_derivative(spec, cls, x, radius, tol):
    if radius is None:
        radius = find_radius(spec, cls)[0]
    h = 1e-6 * x
    central = radius is not None and math.isfinite(radius)
    if central:
        h = min(h, (radius - x) / 4)
        if h <= 0:
            raise ParameterError("parameter too close to the singularity")
    for attempt in range(2):
        try:
            if central:
                return (_value(spec, cls, x + h, tol) - _value(spec, cls, x - h, tol)) / (2 * h)
            return (_value(spec, cls, x, tol) - _value(spec, cls, x - h, tol)) / h
        except DivergenceError:
            if attempt:
                raise ParameterError("parameter too close to the singularity") from None
            h /= 10
    raise AssertionError("unreachable")


def expected_size(spec: Spec, cls: str, x: float, tol: float = DEFAULT_TOL) -> float:
    """Mean size x C'(x) / C(x) of a Boltzmann structure of class `cls`."""
    prog, solver, sol = _solver_for_class(spec, cls, x, tol)
    i = prog.index[cls]
    c = float(sol.y[i])
    if c == 0.0:
        raise ParameterError(f"{cls}(x) vanishes at x={x}")
    return x * float(solver.derivative(1)[i]) / c


def size_moments(spec: Spec, cls: str, x: float, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """(mean, standard deviation) of the Boltzmann size at x (second moment by differences)."""
    mu = expected_size(spec, cls, x, tol)
    h = 1e-5 * x
    try:
        up = expected_size(spec, cls, x + h, tol)
        dmu = (up - expected_size(spec, cls, x - h, tol)) / (2 * h)
    except DivergenceError:
        dmu = (mu - expected_size(spec, cls, x - h, tol)) / h
    # d mu / d log x = variance
    return mu, math.sqrt(max(x * dmu, 0.0))


@dataclass(frozen=True)
class TuneResult:
    target: int
    x: float
    achieved: float
    radius: float
    radius_error: float
    singular: bool = False

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "x": self.x,
            "expected_size": self.achieved,
            "radius": None if math.isinf(self.radius) else self.radius,
            "radius_error": self.radius_error,
            "singular": self.singular,
        }


def tune(spec: Spec, cls: str, n: int, rtol: float = 1e-8, tol: float = DEFAULT_TOL) -> TuneResult:
    """Parameter x_n in (0, rho) at which the expected size of `cls` is n.

    N(x) is increasing, so the root is bracketed and then polished with
    Brent's method in a variable u that spreads (0, rho) over (0, inf)
    (x = rho (1 - e^-u)), where log N is close to linear. The search runs
    the oracle at a looser tolerance; the returned size uses `tol`.
    """
    sub = spec.restrict(cls)
    require_valid(sub)
    m = min_sizes(sub)[cls]
    if n < m:
        raise ParameterError(f"no solution: size {n} is below the minimum size {m} of {cls}")
    rho, rho_err = find_radius(sub, cls)
    search_tol = max(tol, TUNE_SEARCH_TOL)
    cache: dict = {}

    def size(u):
        if u not in cache:
            try:
                cache[u] = expected_size(sub, cls, to_x(u), search_tol)
            except DivergenceError:
                cache[u] = math.inf
        return cache[u]

    if math.isfinite(rho):
        top = rho - rho_err

        def to_x(u):
            return top * -math.expm1(-u)

        u_lo, u_max = 1e-9, 40.0
    else:
        to_x = math.exp
        u_lo, u_max = math.log(2.0**-40), math.log(X_CAP)

    def result(u, singular=False):
        x = to_x(u)
        try:
            achieved = expected_size(sub, cls, x, tol)
        except DivergenceError:
            achieved = size(u)
        return TuneResult(n, x, achieved, rho, rho_err, singular)

    if size(u_lo) >= n:
        return result(u_lo)
    u_hi = u_lo
    while size(u_hi) < n:
        u_lo = u_hi
        u_hi = u_lo + 1.0 if u_lo >= 1.0 else 1.0
        if u_hi > u_max:
            if math.isfinite(rho):
                # N stays finite up to the singularity
                return TuneResult(n, rho, size(u_lo), rho, rho_err, singular=True)
            raise ParameterError(f"cannot reach expected size {n} below x={X_CAP:g}")
    # a divergent upper end (rho over-estimated) is pulled back until N is finite
    while math.isinf(size(u_hi)):
        mid = 0.5 * (u_lo + u_hi)
        if mid in (u_lo, u_hi):
            return result(u_lo, singular=True)
        if size(mid) < n:
            u_lo = mid
        else:
            u_hi = mid
    u = brentq(lambda v: math.log(size(v) / n), u_lo, u_hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    res = result(u)
    if abs(res.achieved - n) > rtol * n:
        raise InternalError(f"tuning stalled at expected size {res.achieved} for target {n}")
    return res
