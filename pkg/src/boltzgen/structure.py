"""Sampled structures and their text forms.

Structures can be deep (a sequence built by right recursion is a chain as
long as the structure is big), so everything here walks them with an
explicit stack.
"""

from __future__ import annotations

import json

from .errors import ParameterError

SEQ, CYCLE, SET, MSET = "seq", "cycle", "set", "mset"
_LIST_TEXT = {SEQ: "Seq", CYCLE: "Cycle", SET: "Set", MSET: "MSet"}


class Node:
    __slots__ = ("size",)

    def children(self):
        return ()

    def __repr__(self):
        # through the iterative writer: structures can be too deep for a
        # recursive repr
        text = to_term(self)
        if len(text) > 200:
            text = text[:197] + "..."
        return f"<{type(self).__name__} size={self.size} {text}>"


class EmptyNode(Node):
    """The size-0 structure; `variant` tells apart the a0 initial objects of a differential class."""

    __slots__ = ("variant",)

    def __init__(self, variant: int = 0):
        self.size = 0
        self.variant = variant

    def __repr__(self):
        return f"EmptyNode({self.variant})" if self.variant else "EmptyNode()"


class AtomNode(Node):
    __slots__ = ("type", "label", "top")

    def __init__(self, type: str = "", label: int | None = None, top: bool = False):
        self.size = 1
        self.type = type
        self.label = label
        # the atom of a differential unrolling; it carries the largest label
        # of its subtree
        self.top = top

    def __repr__(self):
        return f"AtomNode({self.type!r}, {self.label})"


class PairNode(Node):
    __slots__ = ("left", "right")

    def __init__(self, left: Node, right: Node):
        self.left = left
        self.right = right
        self.size = left.size + right.size

    def children(self):
        return (self.left, self.right)


class ListNode(Node):
    __slots__ = ("construction", "items")

    def __init__(self, construction: str, items: list):
        if construction not in _LIST_TEXT:
            raise ValueError(f"unknown construction {construction!r}")
        self.construction = construction
        self.items = items
        self.size = sum(i.size for i in items)

    def children(self):
        return self.items


class ClassNode(Node):
    __slots__ = ("name", "inner", "differential")

    def __init__(self, name: str, inner: Node, differential: bool = False):
        self.name = name
        self.inner = inner
        self.differential = differential
        self.size = inner.size

    def children(self):
        return (self.inner,)


def preorder(root: Node):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        ch = n.children()
        if ch:
            stack.extend(reversed(ch))


def atoms(root: Node) -> list[AtomNode]:
    """Atoms in depth-first (left to right) order."""
    return [n for n in preorder(root) if isinstance(n, AtomNode)]


def node_count(root: Node) -> int:
    return sum(1 for _ in preorder(root))


def strip_classes(root: Node) -> Node:
    """Copy of the structure without ClassNode wrappers."""
    return _rebuild(root, lambda n, kids: kids[0] if isinstance(n, ClassNode) else None)


def _rebuild(root, hook):
    # post-order rebuild; hook(node, new_children) may return a replacement
    out: dict = {}
    stack = [(root, False)]
    while stack:
        n, done = stack.pop()
        if not done:
            stack.append((n, True))
            for c in n.children():
                stack.append((c, False))
            continue
        kids = [out[id(c)] for c in n.children()]
        rep = hook(n, kids)
        if rep is None:
            if isinstance(n, PairNode):
                rep = PairNode(*kids)
            elif isinstance(n, ListNode):
                rep = ListNode(n.construction, kids)
            elif isinstance(n, ClassNode):
                rep = ClassNode(n.name, kids[0], n.differential)
            elif isinstance(n, AtomNode):
                rep = AtomNode(n.type, n.label, n.top)
            else:
                rep = EmptyNode(n.variant)
        out[id(n)] = rep
    return out[id(root)]


# --------------------------------------------------------------------------
# term text
# --------------------------------------------------------------------------


def _atom_text(n: AtomNode, labels: bool) -> str:
    s = "Z" if not n.type else f"Z_{n.type}"
    if labels and n.label is not None:
        s += "{" + str(n.label) + "}"
    return s


def _term(root: Node, labels: bool, canonical: bool, memo: dict | None = None) -> str:
    # pieces are emitted in order, so deep chains cost linear memory; only
    # the children of a canonical Set, MSet or Cycle are rendered separately
    # (and memoized by id, since multiset copies share one node object)
    out: list[str] = []
    stack: list = [(root, False)]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        n, bare = item
        if isinstance(n, AtomNode):
            out.append(_atom_text(n, labels))
        elif isinstance(n, EmptyNode):
            out.append("1" if not n.variant else f"1#{n.variant}")
        elif isinstance(n, PairNode):
            if not bare:
                out.append("(")
                stack.append(")")
            stack.extend([(n.right, False), ",", (n.left, False)])
        elif isinstance(n, ListNode):
            head = _LIST_TEXT[n.construction]
            if canonical and n.construction in (SET, MSET, CYCLE) and n.items:
                if memo is None:
                    memo = {}
                parts = []
                for c in n.items:
                    if id(c) not in memo:
                        memo[id(c)] = _term(c, labels, True, memo)
                    parts.append(memo[id(c)])
                if n.construction == CYCLE:
                    parts = min(parts[i:] + parts[:i] for i in range(len(parts)))
                else:
                    parts.sort()
                out.append(f"{head}[{','.join(parts)}]")
                continue
            out.append(head + "[")
            stack.append("]")
            for i in range(len(n.items) - 1, -1, -1):
                stack.append((n.items[i], False))
                if i:
                    stack.append(",")
        else:
            out.append(n.name + "(")
            stack.append(")")
            stack.append((n.inner, True))
    return "".join(out)


def to_term(root: Node, labels: bool = True) -> str:
    """Term text such as ``P(Z,Seq[P(Z,Seq[])])``; Set and Cycle lists in generation order."""
    return _term(root, labels, False)


def canonical_term(root: Node, labels: bool = True) -> str:
    """Term text identifying the structure up to the symmetries of Set, MSet and Cycle."""
    return _term(root, labels, True)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def to_json(root: Node, labels: bool = True) -> str:
    """Compact JSON text, written iteratively."""
    out: list[str] = []
    # stack of (node, enclosing class name) entries and literal text
    stack: list = [(root, None)]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        n, cls = item
        if isinstance(n, ClassNode):
            if cls is not None:
                # a class whose body is just another class
                out.append('{"class":' + json.dumps(cls) + ',"kind":"class","items":[')
                stack.append("]}")
            stack.append((n.inner, n.name))
            continue
        head = "{" + ('"class":' + json.dumps(cls) + "," if cls is not None else "")
        if isinstance(n, AtomNode):
            fields = ['"kind":"atom"']
            if n.type:
                fields.append('"type":' + json.dumps(n.type))
            if labels and n.label is not None:
                fields.append(f'"label":{n.label}')
            out.append(head + ",".join(fields) + "}")
        elif isinstance(n, EmptyNode):
            out.append(head + '"kind":"empty"' + (f',"variant":{n.variant}' if n.variant else "") + "}")
        else:
            if isinstance(n, PairNode):
                out.append(head + '"kind":"pair","items":[')
                kids = [n.left, n.right]
            else:
                out.append(head + '"kind":"list","construction":"' + n.construction + '","items":[')
                kids = n.items
            stack.append("]}")
            for i in range(len(kids) - 1, -1, -1):
                stack.append((kids[i], None))
                if i:
                    stack.append(",")
    return "".join(out)


def to_dict(root: Node, labels: bool = True) -> dict:
    return json.loads(to_json(root, labels))


def from_json(data) -> Node:
    """Inverse of :func:`to_json` (accepts text or the parsed object).

    Parsing goes through the json module, so nesting is bounded by the
    interpreter recursion limit.
    """
    obj = json.loads(data) if isinstance(data, str) else data

    def build(o):
        node = _from_obj(o, build)
        cls = o.get("class")
        if cls is not None and o.get("kind") != "class":
            node = ClassNode(cls, node)
        return node

    return build(obj)


def _from_obj(o, build):
    kind = o.get("kind")
    if kind == "atom":
        return AtomNode(o.get("type", ""), o.get("label"))
    if kind == "empty":
        return EmptyNode(o.get("variant", 0))
    if kind == "pair":
        left, right = o["items"]
        return PairNode(build(left), build(right))
    if kind == "list":
        return ListNode(o["construction"], [build(i) for i in o["items"]])
    if kind == "class":
        return ClassNode(o["class"], build(o["items"][0]))
    raise ParameterError(f"unknown structure kind {kind!r}")
