"""Exact enumeration of specifications by coefficient recurrences.

This is the reference every statistical test is checked against, so it
works in big integers throughout; floating point only enters in
:func:`size_pmf`.
"""

from __future__ import annotations

import math
from typing import Callable

from .errors import InternalError, ParameterError
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
    children,
    require_valid,
)

COUNT_CAP = 512

CountTable = dict[str, list[int]]


def _postorder(expr, out: list, seen: set):
    stack = [(expr, False)]
    while stack:
        e, done = stack.pop()
        if done:
            if e not in seen:
                seen.add(e)
                out.append(e)
            continue
        if e in seen:
            continue
        stack.append((e, True))
        for c in reversed(children(e)):
            stack.append((c, False))
        if isinstance(e, Cycle):
            # the cycle recurrence needs the sequence table of its argument
            stack.append((Seq(e.arg), False))


class _Coefficients:
    """Coefficient tables for every class and subexpression, grown level by level."""

    def __init__(self, spec: Spec, atom_value: Callable[[str], object]):
        self.spec = spec
        self.labelled = spec.labelled
        self.atom_value = atom_value
        self.nodes: list = []
        seen: set = set()
        for d in spec.defs:
            _postorder(d.body, self.nodes, seen)
        self.table: dict = {e: [] for e in self.nodes}
        self.cls: dict[str, list] = {d.name: [] for d in spec.defs}
        self.divisor_sums: dict = {}
        self.level = -1

    def _binom(self, n, k):
        return math.comb(n, k) if self.labelled else 1

    def _node(self, e, n):
        t = self.table
        if isinstance(e, Empty):
            return 1 if n == 0 else 0
        if isinstance(e, Atom):
            return self.atom_value(e.type) if n == 1 else 0
        if isinstance(e, Ref):
            return self.cls[e.name][n]
        if isinstance(e, Union):
            return t[e.left][n] + t[e.right][n]
        if isinstance(e, Product):
            a, b = t[e.left], t[e.right]
            if self.labelled:
                return sum(math.comb(n, k) * a[k] * b[n - k] for k in range(n + 1) if a[k] and b[n - k])
            return sum(a[k] * b[n - k] for k in range(n + 1) if a[k] and b[n - k])
        a, c = t[e.arg], t[e]
        if isinstance(e, Seq):
            if n == 0:
                return 1
            if self.labelled:
                return sum(math.comb(n, j) * a[j] * c[n - j] for j in range(1, n + 1) if a[j])
            return sum(a[j] * c[n - j] for j in range(1, n + 1) if a[j])
        if isinstance(e, Set):
            if n == 0:
                return 1
            return sum(math.comb(n - 1, k - 1) * a[k] * c[n - k] for k in range(1, n + 1) if a[k])
        if isinstance(e, Cycle):
            if n == 0:
                return 0
            s = t[Seq(e.arg)]
            return sum(math.comb(n - 1, k - 1) * a[k] * s[n - k] for k in range(1, n + 1) if a[k])
        if isinstance(e, MSet):
            if n == 0:
                return 1
            # Euler transform: n c_n = sum_k (sum_{d|k} d a_d) c_{n-k}
            total = 0
            for k in range(1, n + 1):
                if c[n - k]:
                    total += self._divisor_sum(e, k, cache=k < n) * c[n - k]
            if isinstance(total, int):
                q, r = divmod(total, n)
                if r:
                    raise InternalError("non-integral multiset count")
                return q
            return total / n
        raise InternalError(f"unknown expression {e!r}")

    def _divisor_sum(self, e, k, cache=True):
        # a_k is still being iterated at level k, so only lower levels are cached
        key = (e, k)
        if key in self.divisor_sums:
            return self.divisor_sums[key]
        a = self.table[e.arg]
        s = sum(d * a[d] for d in range(1, k + 1) if k % d == 0)
        if cache:
            self.divisor_sums[key] = s
        return s

    def grow(self, N: int):
        spec = self.spec
        while self.level < N:
            n = self.level + 1
            for e in self.nodes:
                self.table[e].append(0)
            for d in spec.defs:
                if d.differential:
                    v = d.initial_count if n == 0 else self.table[d.body][n - 1]
                else:
                    v = 0
                self.cls[d.name].append(v)
            cap = len(self.nodes) + len(spec.defs) + 2
            for _ in range(cap):
                changed = False
                for e in self.nodes:
                    v = self._node(e, n)
                    if v != self.table[e][n]:
                        self.table[e][n] = v
                        changed = True
                for d in spec.defs:
                    if not d.differential:
                        v = self.table[d.body][n]
                        if v != self.cls[d.name][n]:
                            self.cls[d.name][n] = v
                            changed = True
                if not changed:
                    break
            else:
                bad = [d.name for d in spec.defs if not d.differential]
                raise InternalError(f"size-{n} counts do not stabilise for {', '.join(bad)}")
            self.level = n


def count_upto(spec: Spec, N: int, cap: int = COUNT_CAP) -> CountTable:
    """Exact counts ``c_0 .. c_N`` for every class.

    In labelled mode the counts are numbers of labelled structures, i.e.
    ``n!`` times the coefficients of the exponential generating function.
    """
    if N < 0:
        raise ParameterError("N must be >= 0")
    if N > cap:
        raise ParameterError(f"N={N} exceeds the enumeration cap {cap}")
    require_valid(spec)
    co = _Coefficients(spec, lambda t: 1)
    co.grow(N)
    return {name: list(vals) for name, vals in co.cls.items()}


def weighted_counts(spec: Spec, N: int) -> CountTable:
    """Like :func:`count_upto` but each atom contributes its weight (floats)."""
    require_valid(spec)
    if spec.unit_weights:
        return count_upto(spec, N)
    co = _Coefficients(spec, spec.weight)
    co.grow(N)
    return {name: list(vals) for name, vals in co.cls.items()}


def size_pmf(spec: Spec, cls: str, x: float, N: int, oracle=None) -> list[float]:
    """Boltzmann size law ``p_0 .. p_N`` of class `cls` at parameter `x`."""
    from .oracle import evaluate

    if not x > 0:
        raise ParameterError("x must be positive")
    sub = spec.restrict(cls)
    table = oracle if oracle is not None else evaluate(sub, x)
    if not table.converged:
        raise ParameterError(f"oracle diverges at x={x}: outside the convergence domain")
    total = table.values[cls]
    counts = weighted_counts(sub, N)[cls]
    log_x, log_total = math.log(x), math.log(total)
    out = []
    for n, c in enumerate(counts):
        if c == 0:
            out.append(0.0)
            continue
        lp = math.log(c) + n * log_x - log_total
        if spec.labelled:
            lp -= math.lgamma(n + 1)
        out.append(math.exp(lp))
    return out
