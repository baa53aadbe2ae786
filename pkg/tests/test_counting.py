import math
from fractions import Fraction

import pytest

from boltzgen import parse_spec
from boltzgen.counting import count_upto, size_pmf, weighted_counts
from boltzgen.errors import ParameterError, ValidationError
from boltzgen.spec import Atom, Cycle, Empty, MSet, Product, Ref, Seq, Set, Spec, Union

from conftest import corpus_names, corpus_spec


# independent route: truncated power series over Fractions, iterated to a fixed point


def _mul(a, b, N):
    out = [Fraction(0)] * (N + 1)
    for i, x in enumerate(a):
        if x:
            for j in range(N + 1 - i):
                out[i + j] += x * b[j]
    return out


def _exp(a, N):
    # a[0] == 0: sum of a^k / k!
    out = [Fraction(0)] * (N + 1)
    out[0] = Fraction(1)
    term = out[:]
    for k in range(1, N + 1):
        term = [t / k for t in _mul(term, a, N)]
        out = [x + y for x, y in zip(out, term)]
    return out


def _log_inv(a, N):
    # -log(1 - a) = sum a^k / k
    out = [Fraction(0)] * (N + 1)
    term = [Fraction(1)] + [Fraction(0)] * N
    for k in range(1, N + 1):
        term = _mul(term, a, N)
        out = [x + y / k for x, y in zip(out, term)]
    return out


def _inv1m(a, N):
    out = [Fraction(0)] * (N + 1)
    term = [Fraction(1)] + [Fraction(0)] * N
    for _ in range(N + 1):
        out = [x + y for x, y in zip(out, term)]
        term = _mul(term, a, N)
    return out


def _subs_power(a, k, N):
    out = [Fraction(0)] * (N + 1)
    for i, x in enumerate(a):
        if i * k <= N:
            out[i * k] += x
    return out


def series(spec, N):
    labelled = spec.labelled
    cur = {d.name: [Fraction(0)] * (N + 1) for d in spec.defs}

    def ev(e):
        if isinstance(e, Empty):
            return [Fraction(1)] + [Fraction(0)] * N
        if isinstance(e, Atom):
            return [Fraction(0), Fraction(1)] + [Fraction(0)] * (N - 1)
        if isinstance(e, Ref):
            return cur[e.name]
        if isinstance(e, Union):
            return [x + y for x, y in zip(ev(e.left), ev(e.right))]
        if isinstance(e, Product):
            return _mul(ev(e.left), ev(e.right), N)
        a = ev(e.arg)
        if isinstance(e, Seq):
            return _inv1m(a, N)
        if isinstance(e, Set):
            return _exp(a, N)
        if isinstance(e, Cycle):
            return _log_inv(a, N)
        assert isinstance(e, MSet)
        s = [Fraction(0)] * (N + 1)
        for k in range(1, N + 1):
            s = [x + y / k for x, y in zip(s, _subs_power(a, k, N))]
        return _exp(s, N)

    for _ in range(2 * N + 4):
        new = {}
        for d in spec.defs:
            v = ev(d.body)
            if d.differential:
                # Y = a0 + integral of the body
                v = [Fraction(d.initial_count)] + [v[i - 1] / i for i in range(1, N + 1)]
            new[d.name] = v
        cur = new
    fact = (lambda n: math.factorial(n)) if labelled else (lambda n: 1)
    return {k: [int(v[n] * fact(n)) for n in range(N + 1)] for k, v in cur.items()}


@pytest.mark.parametrize("name", corpus_names())
def test_corpus_matches_series_route(name):
    spec = corpus_spec(name)
    assert count_upto(spec, 8) == series(spec, 8)


@pytest.mark.parametrize("text, cls, want", [
    ("P = Z * Seq(P);", "P", [0, 1, 1, 2, 5, 14, 42]),
    ("B = 1 + Z * B * B;", "B", [1, 1, 2, 5, 14, 42, 132]),
    ("M = Z * (1 + M + M * M);", "M", [0, 1, 1, 2, 4, 9, 21]),
    ("R = Z * MSet(R);", "R", [0, 1, 1, 2, 4, 9, 20]),
    ("@labelled\nT = Z * Set(T);", "T", [0, 1, 2, 9, 64, 625, 7776]),
    ("@labelled\nP = Set(Cycle(Z));", "P", [math.factorial(n) for n in range(7)]),
    ("W = Seq(Z_a + Z_b * Z_b);", "W", [1, 1, 2, 3, 5, 8, 13]),
])
def test_known_sequences(text, cls, want):
    assert count_upto(parse_spec(text), len(want) - 1)[cls] == want


def test_tangent_numbers():
    c = count_upto(corpus_spec("tan"), 9)["T"]
    assert c[1::2] == [1, 2, 16, 272, 7936]
    assert c[0::2] == [0] * 5


def test_counts_are_exact_integers():
    c = count_upto(parse_spec("@labelled\nP = Set(Cycle(Z));"), 30)["P"]
    assert c[30] == math.factorial(30)
    assert all(type(v) is int for v in c)


def test_weighted_counts():
    base = parse_spec("W = Seq(Z_a + Z_b * Z_b);")
    spec = Spec(base.mode, base.defs, {"b": 0.5})
    w = weighted_counts(spec, 4)["W"]
    # words of size n weighted by 0.5 per b atom
    assert w[2] == pytest.approx(1 + 0.25)
    assert w[4] == pytest.approx(1 + 3 * 0.25 + 0.0625)


def test_size_pmf_geometric():
    p = size_pmf(parse_spec("S = Seq(Z);"), "S", 0.5, 10)
    assert p == pytest.approx([0.5 ** (n + 1) for n in range(11)], rel=1e-12)


def test_size_pmf_labelled():
    x = 0.4
    p = size_pmf(parse_spec("@labelled\nP = Set(Cycle(Z));"), "P", x, 6)
    assert p == pytest.approx([(1 - x) * x**n for n in range(7)], rel=1e-10)


def test_errors():
    with pytest.raises(ParameterError):
        count_upto(parse_spec("S = Seq(Z);"), -1)
    with pytest.raises(ParameterError):
        count_upto(parse_spec("S = Seq(Z);"), 10**6)
    with pytest.raises(ValidationError):
        count_upto(parse_spec("S = Seq(1 + Z);"), 3)
    with pytest.raises(ParameterError):
        size_pmf(parse_spec("S = Seq(Z);"), "S", 1.5, 3)
