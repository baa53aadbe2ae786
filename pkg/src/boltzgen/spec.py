"""Specification algebra and static well-foundedness checks.

A specification is an ordered list of named class definitions over the
constructions Empty, Atom, Ref, Union, Product, Seq, Cycle, Set and MSet.
A definition is either plain (``A = expr``) or differential
(``A' = expr`` with a number of size-0 structures).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterator, Mapping

from .errors import SpecError, UnresolvedReference

LABELLED = "labelled"
UNLABELLED = "unlabelled"
INF = math.inf

ZERO_COUNT_CAP = 2**32


# --------------------------------------------------------------------------
# expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Empty:
    pass


@dataclass(frozen=True)
class Atom:
    type: str = ""  # "" is the plain atom Z


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Union:
    left: "ClassExpr"
    right: "ClassExpr"


@dataclass(frozen=True)
class Product:
    left: "ClassExpr"
    right: "ClassExpr"


@dataclass(frozen=True)
class Seq:
    arg: "ClassExpr"


@dataclass(frozen=True)
class Cycle:
    arg: "ClassExpr"


@dataclass(frozen=True)
class Set:
    arg: "ClassExpr"


@dataclass(frozen=True)
class MSet:
    arg: "ClassExpr"


ClassExpr = Empty | Atom | Ref | Union | Product | Seq | Cycle | Set | MSet
COMPONENT_CONSTRUCTIONS = (Seq, Cycle, Set, MSet)


def children(expr) -> tuple:
    if isinstance(expr, (Union, Product)):
        return (expr.left, expr.right)
    if isinstance(expr, COMPONENT_CONSTRUCTIONS):
        return (expr.arg,)
    return ()


def walk(expr) -> Iterator:
    """Pre-order traversal of an expression."""
    stack = [expr]
    while stack:
        e = stack.pop()
        yield e
        stack.extend(reversed(children(e)))


def refs(expr) -> list[str]:
    return [e.name for e in walk(expr) if isinstance(e, Ref)]


# --------------------------------------------------------------------------
# definitions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassDef:
    name: str
    body: ClassExpr
    differential: bool = False
    initial_count: int = 0

    def __post_init__(self):
        if self.initial_count < 0:
            raise SpecError(f"{self.name}: initial count must be >= 0")
        if not self.differential and self.initial_count:
            raise SpecError(f"{self.name}: initial count on a plain definition")


@dataclass(frozen=True)
class Spec:
    mode: str
    defs: tuple[ClassDef, ...]
    weights: Mapping[str, float] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.mode not in (LABELLED, UNLABELLED):
            raise SpecError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "defs", tuple(self.defs))
        seen = set()
        for d in self.defs:
            if d.name in seen:
                raise SpecError(f"duplicate definition of {d.name!r}")
            seen.add(d.name)
        for t, w in self.weights.items():
            if not (w > 0 and math.isfinite(w)):
                raise SpecError(f"atom weight for {t or 'Z'!r} must be positive")
        object.__setattr__(self, "weights", MappingProxyType(dict(self.weights)))

    @property
    def labelled(self) -> bool:
        return self.mode == LABELLED

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.defs]

    def __getitem__(self, name: str) -> ClassDef:
        for d in self.defs:
            if d.name == name:
                return d
        raise UnresolvedReference(name)

    def __contains__(self, name) -> bool:
        return any(d.name == name for d in self.defs)

    def index(self, name: str) -> int:
        for i, d in enumerate(self.defs):
            if d.name == name:
                return i
        raise UnresolvedReference(name)

    @property
    def atom_types(self) -> list[str]:
        types = []
        for d in self.defs:
            for e in walk(d.body):
                if isinstance(e, Atom) and e.type not in types:
                    types.append(e.type)
        return types

    def weight(self, atom_type: str) -> float:
        return float(self.weights.get(atom_type, 1.0))

    @property
    def has_differential(self) -> bool:
        return any(d.differential for d in self.defs)

    @property
    def unit_weights(self) -> bool:
        return all(w == 1.0 for w in self.weights.values())

    def check_names(self) -> None:
        for d in self.defs:
            for name in refs(d.body):
                if name not in self:
                    raise UnresolvedReference(name, d.name)

    def reachable(self, name: str) -> list[str]:
        """Names of the classes `name` depends on (itself included), in definition order."""
        self.check_names()
        seen = {name}
        todo = [name]
        while todo:
            for r in refs(self[todo.pop()].body):
                if r not in seen:
                    seen.add(r)
                    todo.append(r)
        return [d.name for d in self.defs if d.name in seen]

    def restrict(self, name: str) -> "Spec":
        keep = set(self.reachable(name))
        return Spec(self.mode, tuple(d for d in self.defs if d.name in keep), self.weights)


# --------------------------------------------------------------------------
# well-foundedness
# --------------------------------------------------------------------------


def _mul(a, b):
    # 0 * inf = 0: an empty factor kills the product
    if a == 0 or b == 0:
        return 0
    return a * b


def _zero_count_expr(expr, counts):
    if isinstance(expr, Empty):
        return 1
    if isinstance(expr, Atom):
        return 0
    if isinstance(expr, Ref):
        return counts[expr.name]
    if isinstance(expr, Union):
        return _zero_count_expr(expr.left, counts) + _zero_count_expr(expr.right, counts)
    if isinstance(expr, Product):
        return _mul(_zero_count_expr(expr.left, counts), _zero_count_expr(expr.right, counts))
    a = _zero_count_expr(expr.arg, counts)
    if a != 0:
        return INF
    return 0 if isinstance(expr, Cycle) else 1


def _zero_deps(expr, counts) -> set[str]:
    """Classes whose size-0 count the size-0 count of `expr` is sensitive to.

    These are the nonzero entries of the Jacobian of the size-0 system at the
    fixpoint; a cycle among them means infinitely many size-0 structures.
    """
    if isinstance(expr, Ref):
        return {expr.name}
    if isinstance(expr, Union):
        return _zero_deps(expr.left, counts) | _zero_deps(expr.right, counts)
    if isinstance(expr, Product):
        deps = set()
        if _zero_count_expr(expr.right, counts) != 0:
            deps |= _zero_deps(expr.left, counts)
        if _zero_count_expr(expr.left, counts) != 0:
            deps |= _zero_deps(expr.right, counts)
        return deps
    if isinstance(expr, COMPONENT_CONSTRUCTIONS):
        return _zero_deps(expr.arg, counts)
    return set()


def zero_size_counts(spec: Spec, cap: int = ZERO_COUNT_CAP) -> dict[str, float]:
    """Number of size-0 structures of each class (``math.inf`` when unbounded)."""
    spec.check_names()
    counts: dict[str, float] = {d.name: 0 for d in spec.defs}
    for d in spec.defs:
        if d.differential:
            counts[d.name] = d.initial_count
    plain = [d for d in spec.defs if not d.differential]

    stable = False
    for _ in range(len(spec.defs) + 1):
        changed = False
        for d in plain:
            v = _zero_count_expr(d.body, counts)
            if v > cap:
                v = INF
            if v != counts[d.name]:
                counts[d.name] = v
                changed = True
        if not changed:
            stable = True
            break
    if not stable:
        for d in plain:
            v = _zero_count_expr(d.body, counts)
            if v != counts[d.name]:
                counts[d.name] = INF

    # cycles in the size-0 dependency graph (B = 1 * B) are degenerate even
    # though the least fixpoint is finite
    graph = {d.name: _zero_deps(d.body, counts) for d in plain}
    for d in spec.defs:
        graph.setdefault(d.name, set())
    bad = {n for n in graph if _on_cycle(graph, n)}
    if bad:
        for n in bad:
            counts[n] = INF
        for _ in range(len(spec.defs) + 1):
            changed = False
            for d in plain:
                if d.name in bad:
                    continue
                v = _zero_count_expr(d.body, counts)
                if v > cap:
                    v = INF
                if v != counts[d.name]:
                    counts[d.name] = v
                    changed = True
            if not changed:
                break
    return counts


def _on_cycle(graph: dict[str, set[str]], start: str) -> bool:
    seen = set()
    todo = list(graph[start])
    while todo:
        n = todo.pop()
        if n == start:
            return True
        if n not in seen:
            seen.add(n)
            todo.extend(graph.get(n, ()))
    return False


def _min_size_expr(expr, sizes):
    if isinstance(expr, Empty):
        return 0
    if isinstance(expr, Atom):
        return 1
    if isinstance(expr, Ref):
        return sizes[expr.name]
    if isinstance(expr, Union):
        return min(_min_size_expr(expr.left, sizes), _min_size_expr(expr.right, sizes))
    if isinstance(expr, Product):
        return _min_size_expr(expr.left, sizes) + _min_size_expr(expr.right, sizes)
    if isinstance(expr, Cycle):
        return _min_size_expr(expr.arg, sizes)
    return 0


def min_sizes(spec: Spec) -> dict[str, float]:
    """Size of the smallest structure of each class, over the (min, +) semiring."""
    spec.check_names()
    sizes: dict[str, float] = {d.name: INF for d in spec.defs}
    for _ in range(len(spec.defs) + 2):
        changed = False
        for d in spec.defs:
            if d.differential:
                v = 0 if d.initial_count > 0 else 1 + _min_size_expr(d.body, sizes)
            else:
                v = _min_size_expr(d.body, sizes)
            if v < sizes[d.name]:
                sizes[d.name] = v
                changed = True
        if not changed:
            break
    return sizes


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    zero_counts: dict
    min_sizes: dict
    diagnostics: tuple[tuple[str, str], ...]

    def format(self) -> str:
        lines = [f"ok = {str(self.ok).lower()}"]
        for name in self.zero_counts:
            z, m = self.zero_counts[name], self.min_sizes[name]
            lines.append(f"{name}: zero_count={_fmt_ext(z)} min_size={_fmt_ext(m)}")
        for cls, reason in self.diagnostics:
            lines.append(f"error: {cls}: {reason}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "zero_counts": {k: _json_ext(v) for k, v in self.zero_counts.items()},
            "min_sizes": {k: _json_ext(v) for k, v in self.min_sizes.items()},
            "diagnostics": [list(d) for d in self.diagnostics],
        }


def _fmt_ext(v):
    return "inf" if v == INF else str(v)


def _json_ext(v):
    return None if v == INF else v


def validate_spec(spec: Spec) -> ValidationReport:
    diags: list[tuple[str, str]] = []
    unresolved = False
    for d in spec.defs:
        for name in refs(d.body):
            if name not in spec:
                diags.append((d.name, f"unresolved reference {name!r}"))
                unresolved = True
    if unresolved:
        return ValidationReport(False, {}, {}, tuple(diags))

    for d in spec.defs:
        if d.differential and not spec.labelled:
            diags.append((d.name, "differential definition requires labelled mode"))
        for e in walk(d.body):
            if isinstance(e, (Cycle, Set)) and not spec.labelled:
                diags.append((d.name, f"{type(e).__name__} requires labelled mode"))
            if isinstance(e, MSet) and spec.labelled:
                diags.append((d.name, "MSet requires unlabelled mode"))

    zc = zero_size_counts(spec)
    ms = min_sizes(spec)
    for d in spec.defs:
        if zc[d.name] == INF:
            diags.append((d.name, "infinitely many structures of size 0"))
        if ms[d.name] == INF:
            diags.append((d.name, "class contains no finite structure"))
        for e in walk(d.body):
            if isinstance(e, COMPONENT_CONSTRUCTIONS) and _zero_count_expr(e.arg, zc) != 0:
                diags.append((d.name, f"{type(e).__name__} argument admits size-0 structures"))

    seen = set()
    unique = tuple(x for x in diags if not (x in seen or seen.add(x)))
    return ValidationReport(not unique, zc, ms, unique)


def require_valid(spec: Spec) -> ValidationReport:
    from .errors import ValidationError

    report = validate_spec(spec)
    if not report.ok:
        raise ValidationError(report)
    return report
