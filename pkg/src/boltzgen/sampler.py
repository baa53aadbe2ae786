"""Free Boltzmann samplers compiled from a specification and its oracle.

A compiled sampler knows, for every point at which it may be asked to
generate (x itself, x^k for multiset components, t < x inside
differential classes), the value of every subexpression of the
specification. Generation is a loop over an explicit task stack, so deep
structures do not hit the recursion limit.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist
from ._jit import JIT_ENABLED
from .kernels import walk
from .errors import DivergenceError, ModeError, NeedMoreTerms, ParameterError, ResourceError
from .oracle import OdeSolver, OracleTable, evaluate, program_for
from .rng import UniformStream
from .spec import Atom, Cycle, Empty, MSet, Product, Ref, Seq, Set, Spec, Union, require_valid
from .structure import (
    CYCLE,
    MSET,
    SEQ,
    SET,
    AtomNode,
    ClassNode,
    EmptyNode,
    ListNode,
    Node,
    PairNode,
    preorder,
)

MAX_NODES = 10**7
MAX_PEEK = 1 << 28

K_EMPTY, K_ATOM, K_REF, K_UNION, K_PRODUCT, K_SEQ, K_SET, K_CYCLE, K_MSET = range(9)
_KIND = {Empty: K_EMPTY, Atom: K_ATOM, Ref: K_REF, Union: K_UNION, Product: K_PRODUCT,
         Seq: K_SEQ, Set: K_SET, Cycle: K_CYCLE, MSet: K_MSET}
_KIND_NAME = ["empty", "atom", "ref", "union", "product", "seq", "set", "cycle", "mset"]
_EMPTY = EmptyNode()

# task codes
T_GEN, T_PAIR, T_LIST, T_CLASS, T_MSET, T_UNROLL = range(6)


@dataclass
class SizeReport:
    output_size: int = 0
    atoms_generated: int = 0
    uniforms_consumed: int = 0
    oracle_lookups: int = 0
    aborted: bool = False

    def to_json(self):
        return {"outputSize": self.output_size, "atomsGenerated": self.atoms_generated,
                "uniformsConsumed": self.uniforms_consumed, "oracleLookups": self.oracle_lookups,
                "aborted": self.aborted}


@dataclass
class SampleResult:
    structure: Node | None
    report: SizeReport
    ledger: dict = field(default_factory=dict)

    @property
    def aborted(self) -> bool:
        return self.report.aborted


@dataclass
class LedgerEntry:
    value: float
    interval: dist.SafetyInterval
    uses: int = 1


class Point:
    """Subexpression values at one parameter value."""

    __slots__ = ("key", "z", "y", "vals")

    def __init__(self, key, z, y, vals):
        self.key = key
        self.z = z
        self.y = y
        self.vals = vals


class CompiledSampler:
    def __init__(self, spec: Spec, x: float, oracle: OracleTable | None = None,
                 ceiling: int | None = None, max_nodes: int = MAX_NODES):
        require_valid(spec)
        if oracle is None:
            oracle = evaluate(spec, x)
        if not oracle.converged:
            raise DivergenceError(f"cannot compile: oracle diverges at x={x} ({oracle.reason})")
        if ceiling is not None and ceiling < 1:
            raise ParameterError("ceiling must be >= 1")
        self.spec = spec
        self.x = float(x)
        self.oracle = oracle
        self.ceiling = ceiling
        self.max_nodes = max_nodes
        self.program = program_for(spec)
        self.solver = oracle.solver
        self.is_ode = isinstance(self.solver, OdeSolver)
        self.overrides: dict[str, float] = {}
        self._compile_nodes()
        self._static_tables()
        self._points: dict = {}
        self.top = self._lattice_point(1) if not self.is_ode else self._ode_point(self.x, top=True)
        # differential specifications with multisets stay on the builder
        self.use_walk = JIT_ENABLED and not (self.is_ode and K_MSET in self.kind)
        self._walk_tables = None
        self._walk_lock = threading.Lock()
        self._stack_hint = 1024
        self._peek_hint = 4096
        self._rows_hint = 64

    # ------------------------------------------------------------------
    # static tables

    def _compile_nodes(self):
        spec = self.spec
        ids: dict = {}
        kind, a, b, info, owner = [], [], [], [], []

        def visit(e, cls):
            # post-order ids, children first
            stack = [(e, False)]
            while stack:
                n, done = stack.pop()
                if n in ids:
                    continue
                ch = _children(n)
                if not done:
                    stack.append((n, True))
                    for c in reversed(ch):
                        if c not in ids:
                            stack.append((c, False))
                    continue
                ids[n] = len(kind)
                k = _KIND[type(n)]
                kind.append(k)
                a.append(ids[ch[0]] if ch else -1)
                b.append(ids[ch[1]] if len(ch) > 1 else -1)
                owner.append(cls)
                if k == K_ATOM:
                    info.append((n.type, spec.weight(n.type)))
                elif k == K_REF:
                    info.append(n.name)
                elif k == K_MSET:
                    info.append(self.program.mset_slots[n])
                else:
                    info.append(None)

        for d in spec.defs:
            visit(d.body, d.name)
        for d in spec.defs:
            # entry points for top-level requests
            visit(Ref(d.name), d.name)
        self.ids = ids
        self.kind, self.arg_a, self.arg_b, self.info, self.owner = kind, a, b, info, owner
        self.body = {d.name: ids[d.body] for d in spec.defs}
        self.defs = {d.name: d for d in spec.defs}
        self.class_index = self.program.index
        self.names = [f"{owner[i]}:{_KIND_NAME[kind[i]]}{i}" for i in range(len(kind))]

    def _static_tables(self):
        n = len(self.kind)
        idx = self.class_index
        self._t_kind = np.array(self.kind, dtype=np.int64)
        self._t_a = np.array(self.arg_a, dtype=np.int64)
        self._t_b = np.array(self.arg_b, dtype=np.int64)
        self._t_w = np.zeros(n)
        self._t_col = np.full(n, -1, dtype=np.int64)
        self._t_slot = np.full(n, -1, dtype=np.int64)
        for i, k in enumerate(self.kind):
            if k == K_ATOM:
                self._t_w[i] = self.info[i][1]
            elif k == K_REF:
                self._t_col[i] = idx[self.info[i]]
            elif k == K_MSET:
                self._t_slot[i] = self.info[i]

    def _values(self, z, y, tails) -> list:
        out = np.empty(len(self.kind))
        walk.node_values(self._t_kind, self._t_a, self._t_b, self._t_w, self._t_col, self._t_slot, float(z),
                         np.asarray(y, dtype=float), np.asarray(tails, dtype=float), out)
        return out.tolist()

    def _lattice_point(self, k: int) -> Point:
        p = self._points.get(k)
        if p is None:
            sol = self.solver.solve(k)
            if not sol.ok:
                raise DivergenceError(f"oracle diverges at x^{k} ({sol.reason})")
            p = Point(k, sol.z, sol.y, self._values(sol.z, sol.y, sol.tails))
            if len(self._points) < 1 << 16:
                self._points[k] = p
        return p

    def _ode_point(self, t: float, top: bool = False) -> Point:
        if top:
            sol = self.solver.solve(1)
            y = sol.y
        else:
            y = self.solver.values_at(t)
        return Point(("t", t) if not top else 1, t, y, self._values(t, y, ()))

    def point_values(self, key) -> list:
        """Subexpression values at a lattice point (k) -- used by tests and reports."""
        return self._lattice_point(key).vals

    def const_name(self, node: int, point: Point, suffix: str = "") -> str | None:
        if not isinstance(point.key, int):
            return None
        return f"{self.names[node]}{suffix}@{point.key}"

    def constant(self, name: str | None, value: float) -> float:
        if name is not None and self.overrides:
            return self.overrides.get(name, value)
        return value

    def session(self, stream: UniformStream, track: bool = False) -> "Session":
        return Session(self, stream, track)

    def sample(self, cls: str, stream: UniformStream, track: bool = False,
               ceiling: int | None = None) -> SampleResult:
        return self.session(stream, track).run(cls, ceiling if ceiling is not None else self.ceiling)

    def search(self, cls: str, stream: UniformStream, lo: int, hi: int | None, max_trials: int,
               track: bool = False):
        """Draw with ceiling `hi` until the size is >= lo.

        Returns (accepted SampleResult or None, trials, atoms generated,
        uniforms consumed). Rejected draws go through the size-only walk
        when it is available; the accepted draw is always built by the
        full sampler from the same uniforms, so the output does not depend
        on whether the walk is used.
        """
        trials = atoms = uniforms = 0
        use_walk = self.use_walk and not self.overrides
        while trials < max_trials:
            if use_walk:
                t, a, u, status = self._walk_trials(cls, stream, lo, hi, max_trials - trials)
                trials += t
                atoms += a
                uniforms += u
                if status == "exhausted":
                    break
            res = self.sample(cls, stream, track, hi)
            trials += 1
            atoms += res.report.atoms_generated
            uniforms += res.report.uniforms_consumed
            if res.structure is not None and res.structure.size >= lo:
                return res, trials, atoms, uniforms
        return None, trials, atoms, uniforms

    def _walk_trials(self, cls, stream, lo, hi, max_trials):
        # rejected draws are consumed from the stream here; the stream is left
        # at the start of the draw the caller should build
        if self.is_ode:
            return self._ode_trials(cls, stream, lo, hi, max_trials)
        kind, a, b, ref_body = self._walk_setup()
        start = self.ids[Ref(cls)]
        ceiling = -1 if hi is None else hi
        out = np.zeros(10, dtype=np.int64)
        size = self._stack_hint
        stacks = [np.empty(size, dtype=np.int64) for _ in range(4)]
        n = self._peek_hint
        trials = atoms = uniforms = 0
        while True:
            U = stream.peek(n)
            st = walk.trial_walk(kind, a, b, ref_body, start, self._vt, self._have, U, lo, ceiling,
                                 max_trials - trials, self.max_nodes, *stacks, out)
            done, used = int(out[0]), int(out[2])
            stream.advance(used)
            trials += done
            atoms += int(out[1])
            uniforms += used
            if st == walk.W_OK:
                return trials, atoms, uniforms, "accept"
            if st == walk.W_ABORTED:
                return trials, atoms, uniforms, "exhausted"
            if st == walk.W_NEED_UNIFORMS:
                if done == 0:
                    n *= 4
                    if n > MAX_PEEK:
                        return trials, atoms, uniforms, "fallback"
                    self._peek_hint = max(self._peek_hint, n)
            elif st == walk.W_NEED_POINT:
                with self._walk_lock:
                    self._walk_row(int(out[4]))
            elif st == walk.W_STACK_FULL:
                size = max(int(out[4]), 2 * stacks[0].size)
                self._stack_hint = max(self._stack_hint, size)
                stacks = [np.empty(size, dtype=np.int64) for _ in range(4)]
            elif st == walk.W_TOO_MANY_NODES:
                raise ResourceError(f"structure exceeds the node guard of {self.max_nodes} nodes")
            else:
                return trials, atoms, uniforms, "fallback"

    def walk(self, cls: str, stream: UniformStream, ceiling: int | None = None):
        """Size of the next draw, without consuming it or building anything.

        Returns (status, uniforms used, atoms, oracle lookups), or None
        when the draw needs the full builder.
        """
        if cls not in self.body:
            raise ParameterError(f"unknown class {cls}")
        if self.is_ode:
            return None
        kind, a, b, ref_body = self._walk_setup()
        start = self.ids[Ref(cls)]
        ceiling = -1 if ceiling is None else ceiling
        out = np.zeros(5, dtype=np.int64)
        size = self._stack_hint
        stacks = [np.empty(size, dtype=np.int64) for _ in range(4)]
        n = 256
        while True:
            U = stream.peek(n)
            st = walk.size_walk(kind, a, b, ref_body, start, self._vt, self._have, U, 0, ceiling,
                                self.max_nodes, *stacks, out)
            if st == walk.W_OK or st == walk.W_ABORTED:
                return int(st), int(out[0]), int(out[1]), int(out[3])
            if st == walk.W_NEED_UNIFORMS:
                n *= 4
                if n > MAX_PEEK:
                    return None
            elif st == walk.W_NEED_POINT:
                with self._walk_lock:
                    self._walk_row(int(out[4]))
            elif st == walk.W_STACK_FULL:
                size = max(int(out[4]), 2 * stacks[0].size)
                self._stack_hint = max(self._stack_hint, size)
                stacks = [np.empty(size, dtype=np.int64) for _ in range(4)]
            elif st == walk.W_TOO_MANY_NODES:
                raise ResourceError(f"structure exceeds the node guard of {self.max_nodes} nodes")
            else:
                return None

    def _ode_setup(self):
        with self._walk_lock:
            if self._walk_tables is None:
                self._build_walk_tables()
                p = self.program
                grid = self.solver.grid
                n_cls = p.y0.size
                is_diff = np.zeros(n_cls, dtype=np.bool_)
                is_diff[p.diff] = True
                a0 = np.zeros(n_cls, dtype=np.int64)
                col = np.full(n_cls, -1, dtype=np.int64)
                for c, i in enumerate(p.diff):
                    col[i] = c
                for name, d in self.defs.items():
                    if d.differential:
                        a0[p.index[name]] = d.initial_count
                sv, sd = self.solver.scratch
                self._ode_tables = (
                    (self._t_kind, self._t_a, self._t_b, self._walk_tables[3], self._t_col, is_diff, a0, col,
                     self._t_w, self._t_slot, p.op, p.arg, p.starts, p.ends, p.w, p.y0, p.diff, p.plain,
                     float(self.solver.tol), int(self.solver.maxit), float(self.solver.cap),
                     grid.t, np.ascontiguousarray(grid.ys.T), np.ascontiguousarray(grid.fs.T),
                     grid.ys, grid.fs, int(grid.n), float(grid.h), float(grid.x)),
                    (sv, sd))
        return self._ode_tables

    def _ode_scratch(self, stack, rows):
        p = self.program
        n = len(self.kind)
        sv, sd = self._ode_tables[1]
        return (np.empty(stack, dtype=np.int64), np.empty(stack, dtype=np.int64), np.empty((rows, n + 1)),
                np.empty(p.y0.size), np.empty(p.diff.size), np.zeros(self.solver.maxit + 8),
                np.empty_like(sv), np.empty_like(sd), np.zeros(0))

    def _ode_trials(self, cls, stream, lo, hi, max_trials):
        tables, _ = self._ode_setup()
        start = self.ids[Ref(cls)]
        top = np.append(np.asarray(self.top.vals), self.x)
        ceiling = -1 if hi is None else hi
        out = np.zeros(10, dtype=np.int64)
        stack = self._stack_hint
        rows = self._rows_hint
        scratch = self._ode_scratch(stack, rows)
        n = self._peek_hint
        trials = atoms = uniforms = 0
        while True:
            U = stream.peek(n)
            st = walk.ode_trial_walk(*tables, start, top, U, lo, ceiling, max_trials - trials, self.max_nodes,
                                     *scratch, out)
            done, used = int(out[0]), int(out[2])
            stream.advance(used)
            trials += done
            atoms += int(out[1])
            uniforms += used
            if st == walk.W_OK:
                return trials, atoms, uniforms, "accept"
            if st == walk.W_ABORTED:
                return trials, atoms, uniforms, "exhausted"
            if st == walk.W_NEED_UNIFORMS:
                if done == 0:
                    n *= 4
                    if n > MAX_PEEK:
                        return trials, atoms, uniforms, "fallback"
                    self._peek_hint = max(self._peek_hint, n)
            elif st == walk.W_STACK_FULL or st == walk.W_POINTS_FULL:
                if st == walk.W_STACK_FULL:
                    stack = max(int(out[4]), 2 * stack)
                    self._stack_hint = max(self._stack_hint, stack)
                else:
                    rows *= 4
                    if rows > MAX_PEEK // max(1, len(self.kind)):
                        return trials, atoms, uniforms, "fallback"
                    self._rows_hint = max(self._rows_hint, rows)
                scratch = self._ode_scratch(stack, rows)
            elif st == walk.W_TOO_MANY_NODES:
                raise ResourceError(f"structure exceeds the node guard of {self.max_nodes} nodes")
            else:
                return trials, atoms, uniforms, "fallback"

    def _walk_setup(self):
        with self._walk_lock:
            if self._walk_tables is None:
                self._build_walk_tables()
        return self._walk_tables

    def _build_walk_tables(self):
        n = len(self.kind)
        ref_body = np.full(n, -1, dtype=np.int64)
        for i, k in enumerate(self.kind):
            if k == K_REF:
                ref_body[i] = self.body[self.info[i]]
        self._walk_tables = (np.array(self.kind, dtype=np.int64), np.array(self.arg_a, dtype=np.int64),
                             np.array(self.arg_b, dtype=np.int64), ref_body)
        self._vt = np.zeros((2, n))
        self._have = np.zeros(2, dtype=np.bool_)
        if not self.is_ode:
            self._walk_row(1)

    def _walk_row(self, k: int):
        if k < self._have.size and self._have[k]:
            return
        if k >= self._vt.shape[0]:
            rows = max(k + 1, 2 * self._vt.shape[0])
            vt = np.zeros((rows, self._vt.shape[1]))
            vt[: self._vt.shape[0]] = self._vt
            have = np.zeros(rows, dtype=np.bool_)
            have[: self._have.size] = self._have
        else:
            vt, have = self._vt.copy(), self._have.copy()
        vt[k] = self._lattice_point(k).vals
        have[k] = True
        # publish whole arrays; running walks keep their old (consistent) pair
        self._vt, self._have = vt, have


def _children(e):
    if isinstance(e, (Union, Product)):
        return (e.left, e.right)
    if isinstance(e, (Seq, Set, Cycle, MSet)):
        return (e.arg,)
    return ()


def compile(spec: Spec, x: float, oracle: OracleTable | None = None, ceiling: int | None = None,
            max_nodes: int = MAX_NODES) -> CompiledSampler:
    return CompiledSampler(spec, x, oracle, ceiling, max_nodes)


class _Abort(Exception):
    pass


class Session:
    """One sampling session: a private stream, report and ledger."""

    def __init__(self, sampler: CompiledSampler, stream: UniformStream, track: bool = False):
        self.s = sampler
        self.stream = stream
        self.track = track
        self.ledger: dict[str, LedgerEntry] = {}

    def _record(self, name, value, interval):
        if not self.track or name is None or interval is None:
            return
        e = self.ledger.get(name)
        if e is None:
            self.ledger[name] = LedgerEntry(value, interval)
        else:
            e.interval = e.interval.intersect(interval)
            e.uses += 1

    def run(self, cls: str, ceiling: int | None = None) -> SampleResult:
        s = self.s
        if cls not in s.body:
            raise ParameterError(f"unknown class {cls}")
        u0 = self.stream.consumed
        rep = SizeReport()
        self.report = rep
        self.ceiling = ceiling
        self.nodes = 0
        try:
            node = self._generate(cls)
        except _Abort:
            rep.aborted = True
            rep.uniforms_consumed = self.stream.consumed - u0
            return SampleResult(None, rep, self.ledger)
        rep.output_size = node.size
        rep.uniforms_consumed = self.stream.consumed - u0
        return SampleResult(node, rep, self.ledger)

    # ------------------------------------------------------------------

    def _atom(self, atype, mult=1):
        # an atom inside a multiset component repeated j times stands for j atoms
        rep = self.report
        rep.atoms_generated += mult
        if self.ceiling is not None and rep.atoms_generated > self.ceiling:
            raise _Abort()
        return AtomNode(atype)

    def _reserve(self, n):
        # built nodes plus pending tasks plus n new components must fit
        if self.nodes + len(self.tasks) + n > self.s.max_nodes:
            raise ResourceError(f"structure exceeds the node guard of {self.s.max_nodes} nodes")

    def _count_node(self, n=1):
        self.nodes += n
        if self.nodes > self.s.max_nodes:
            raise ResourceError(f"structure exceeds the node guard of {self.s.max_nodes} nodes")

    def _generate(self, cls: str) -> Node:
        s = self.s
        u = self.stream.uniform
        kind, a, b, info = s.kind, s.arg_a, s.arg_b, s.info
        rep = self.report
        top = s.top
        tasks: list = [(T_GEN, -1, top, cls, 1)]
        self.tasks = tasks
        out: list = []
        while tasks:
            t = tasks.pop()
            op = t[0]
            if op == T_GEN:
                _, e, pt, ref, m = t
                if e < 0:
                    e = s.ids[Ref(ref)]
                k = kind[e]
                if k == K_REF:
                    name = info[e]
                    d = s.defs[name]
                    if d.differential:
                        self._unroll(name, pt, tasks, out)
                    else:
                        tasks.append((T_CLASS, name))
                        tasks.append((T_GEN, s.body[name], pt, None, m))
                    continue
                self._count_node()
                if k == K_ATOM:
                    out.append(self._atom(info[e][0], m))
                elif k == K_EMPTY:
                    out.append(_EMPTY)
                elif k == K_UNION:
                    rep.oracle_lookups += 1
                    v = pt.vals
                    name = s.const_name(e, pt)
                    p = s.constant(name, v[a[e]] / v[e])
                    d = dist.bernoulli(u(), p, self.track)
                    self._record(name, p, d.interval)
                    tasks.append((T_GEN, a[e] if d.value else b[e], pt, None, m))
                elif k == K_PRODUCT:
                    tasks.append((T_PAIR,))
                    tasks.append((T_GEN, b[e], pt, None, m))
                    tasks.append((T_GEN, a[e], pt, None, m))
                elif k == K_MSET:
                    self._mset(e, pt, tasks, m)
                else:
                    rep.oracle_lookups += 1
                    name = s.const_name(e, pt)
                    p = s.constant(name, pt.vals[a[e]])
                    if k == K_SEQ:
                        d = dist.geometric(u(), p, self.track)
                        con = SEQ
                    elif k == K_SET:
                        d = dist.poisson(u(), p, self.track)
                        con = SET
                    else:
                        d = dist.loga(u(), p, self.track)
                        con = CYCLE
                    self._record(name, p, d.interval)
                    n = d.value
                    # every component is at least one node
                    self._reserve(n)
                    tasks.append((T_LIST, con, n))
                    for _ in range(n):
                        tasks.append((T_GEN, a[e], pt, None, m))
            elif op == T_PAIR:
                r = out.pop()
                out[-1] = PairNode(out[-1], r)
            elif op == T_LIST:
                n = t[2]
                if n:
                    items = out[-n:]
                    del out[-n:]
                else:
                    items = []
                out.append(ListNode(t[1], items))
            elif op == T_CLASS:
                out[-1] = ClassNode(t[1], out[-1])
            elif op == T_MSET:
                mult = t[1]
                n = len(mult)
                comps = out[-n:] if n else []
                if n:
                    del out[-n:]
                items = []
                for c, j in zip(comps, mult):
                    items.extend([c] * j)
                self._count_node(len(items))
                out.append(ListNode(MSET, items))
            else:  # T_UNROLL
                inner = out.pop()
                out.append(ClassNode(t[1], PairNode(t[2], inner), differential=True))
        return out[0]

    def _mset(self, e, pt: Point, tasks, m=1):
        s = self.s
        if not isinstance(pt.key, int):
            raise ModeError("multisets inside differential classes are not supported")
        rep = self.report
        k = pt.key
        arg = s.arg_a[e]
        base = s.names[e]
        inner, names = [], []
        cx = s.constant(f"{base}.C@{k}", pt.vals[e])
        uu = self.stream.uniform()
        j = 1
        while True:
            # enough terms for the CDF to get within 1e-15 of 1, then extend on demand
            while len(inner) < j:
                q = s._lattice_point(k * (len(inner) + 1))
                nm = f"{base}.A[{len(inner) + 1}]@{k}"
                names.append(nm)
                inner.append(s.constant(nm, q.vals[arg]))
            try:
                mi = dist.max_index(uu, inner, cx, self.track)
                break
            except NeedMoreTerms:
                if len(inner) > 64 and inner[-1] == 0.0:
                    # remaining mass lost to rounding: the last nonzero index
                    nz = max(i for i, v in enumerate(inner) if v > 0) + 1
                    mi = dist.MaxIndexResult(nz, (), None)
                    break
                j = max(2 * len(inner), 8)
        rep.oracle_lookups += mi.value
        if self.track:
            if mi.c_interval is None:
                # decided by the rounding fallback: only the exact values are known safe
                for nm, val in zip(names, inner):
                    self._record(nm, val, dist.SafetyInterval(val, val, True, True))
                self._record(f"{base}.C@{k}", cx, dist.SafetyInterval(cx, cx, True, True))
            else:
                # K = 0 has no per-term intervals but still constrains C
                for nm, val, iv in zip(names, inner, mi.intervals):
                    self._record(nm, val, iv)
                self._record(f"{base}.C@{k}", cx, mi.c_interval)
        K = mi.value
        mult = []
        gens = []
        for jj in range(1, K + 1):
            q = s._lattice_point(k * jj)
            nm = f"{base}.rate[{jj}]@{k}"
            lam = s.constant(nm, q.vals[arg] / jj)
            minv = 1 if jj == K else 0
            if lam <= 0.0 and minv == 0:
                # skipped without a draw; any positive rate would draw
                self._record(nm, lam, dist.SafetyInterval(lam, lam, True, True))
                continue
            d = dist.poisson_truncated(self.stream.uniform(), lam, minv, self.track)
            self._record(nm, lam, d.interval)
            self._reserve(len(mult) + d.value)
            for _ in range(d.value):
                mult.append(jj)
                gens.append(q)
        tasks.append((T_MSET, mult))
        for q, j in zip(reversed(gens), reversed(mult)):
            tasks.append((T_GEN, arg, q, None, m * j))

    def _unroll(self, name, pt: Point, tasks, out):
        """Differential class at parameter z: base case or atom + body at t < z."""
        s = self.s
        rep = self.report
        d = s.defs[name]
        z = pt.z
        val = float(pt.y[s.class_index[name]])
        a0 = d.initial_count
        rep.oracle_lookups += 1
        self._count_node()
        if a0 > 0:
            nm = s.const_name(s.body[name], pt, ".base")
            p = s.constant(nm, a0 / val)
            br = dist.bernoulli(self.stream.uniform(), p, self.track)
            self._record(nm, p, br.interval)
            if br.value:
                variant = self.stream.below(a0) if a0 > 1 else 0
                out.append(ClassNode(name, EmptyNode(variant) if variant else _EMPTY, differential=True))
                return
        t = dist.sample_h_density(self.stream.uniform(), name, z, s.solver).value
        if not t > 0.0:
            t = math.ulp(0.0)
        atom = self._atom("")
        atom.top = True
        tasks.append((T_UNROLL, name, atom))
        tasks.append((T_GEN, s.body[name], s._ode_point(t), None, 1))


def sample_free(sampler: CompiledSampler, cls: str, stream: UniformStream, track: bool = False,
                ceiling: int | None = None) -> SampleResult:
    return sampler.sample(cls, stream, track, ceiling)


def assign_labels(structure: Node, stream: UniformStream, labelled: bool = True) -> Node:
    """Write labels 1..n onto the atoms.

    A uniform permutation goes onto the atoms in depth-first order; then,
    top-down, the atom of every differential unrolling swaps labels with
    the largest label of its subtree. The second step keeps the law
    uniform (each arrangement of the rest of the subtree has the same
    number of preimages) while making the labelling increasing towards the
    root of every unrolling.
    """
    if not labelled:
        raise ModeError("labels only exist in labelled mode")
    atom_list = []
    starts = []
    for n in preorder(structure):
        if isinstance(n, ClassNode) and n.differential and isinstance(n.inner, PairNode):
            starts.append((len(atom_list), n.size))
        elif isinstance(n, AtomNode):
            atom_list.append(n)
    size = len(atom_list)
    if size == 0:
        return structure
    labels = (stream.permutation(size) + 1).tolist()
    for start, sz in starts:
        best = start
        for i in range(start + 1, start + sz):
            if labels[i] > labels[best]:
                best = i
        labels[start], labels[best] = labels[best], labels[start]
    for n, lab in zip(atom_list, labels):
        n.label = lab
    return structure
