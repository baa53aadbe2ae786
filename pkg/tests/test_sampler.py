import collections
import math

import pytest

from boltzgen import parse_spec
from boltzgen.controller import sample_exact
from boltzgen.counting import count_upto, size_pmf
from boltzgen.errors import DivergenceError, ParameterError, ResourceError
from boltzgen.rng import UniformStream
from boltzgen.sampler import assign_labels, compile
from boltzgen.structure import AtomNode, ClassNode, PairNode, atoms, canonical_term, preorder, to_term

from conftest import chi_square, corpus_spec, pool_tail

SIG = 1e-3

LAW_CASES = [("cayley", "T", 0.25), ("rooted", "R", 0.3), ("typed", "W", 0.3), ("mutual", "A", 0.3),
             ("tan", "T", 0.9), ("recip", "Y", 0.5), ("mixed", "D", 0.3), ("mixed", "L", 0.3),
             ("perms", "P", 0.6), ("motzkin", "M", 0.3)]


@pytest.mark.parametrize("name,cls,x", LAW_CASES)
def test_size_law(name, cls, x):
    spec = corpus_spec(name)
    sampler = compile(spec, x)
    stream = UniformStream(hash(name + cls) % 1000)
    draws = 8000
    sizes = collections.Counter(sampler.sample(cls, stream).report.output_size for _ in range(draws))
    top = max(sizes)
    pmf = size_pmf(spec, cls, x, top)
    obs = [sizes.get(m, 0) for m in range(top + 1)]
    exp = [draws * p for p in pmf]
    exp[-1] += draws * max(0.0, 1.0 - sum(pmf))
    _, p = chi_square(*pool_tail(obs, exp))
    assert p > SIG


def test_report_invariants():
    spec = corpus_spec("rooted")
    sampler = compile(spec, 0.3)
    stream = UniformStream(1)
    for _ in range(300):
        before = stream.consumed
        res = sampler.sample("R", stream)
        rep = res.report
        assert not rep.aborted
        assert rep.output_size == res.structure.size
        # MSet copies count once per copy in the output but are generated once
        assert rep.atoms_generated <= rep.output_size
        assert rep.uniforms_consumed == stream.consumed - before


def test_ceiling_abort():
    sampler = compile(parse_spec("P = Z * Seq(P);"), 0.249)
    stream = UniformStream(2)
    aborted = 0
    for _ in range(500):
        res = sampler.sample("P", stream, ceiling=5)
        if res.aborted:
            aborted += 1
            assert res.structure is None
            assert res.report.atoms_generated == 6
        else:
            assert res.structure.size <= 5
    assert aborted > 0
    with pytest.raises(ParameterError):
        compile(parse_spec("P = Z * Seq(P);"), 0.2, ceiling=0)


def test_node_guard():
    sampler = compile(parse_spec("S = Seq(Z);"), 0.9999, max_nodes=50)
    stream = UniformStream(3)
    with pytest.raises(ResourceError):
        for _ in range(200):
            sampler.sample("S", stream)


def test_outside_disc():
    with pytest.raises(DivergenceError):
        compile(parse_spec("P = Z * Seq(P);"), 0.3)


def _label_counts(spec, cls, x, n, draws, seed):
    sampler = compile(spec, x)
    stream = UniformStream(seed)
    seen = collections.Counter()
    for _ in range(draws):
        t = sample_exact(sampler, cls, n, stream).structure
        assign_labels(t, stream)
        seen[canonical_term(t)] += 1
    return seen


def test_cayley_labels_uniform():
    # 3^2 = 9 labelled rooted trees on 3 nodes
    seen = _label_counts(corpus_spec("cayley"), "T", 0.3, 3, 4500, 10)
    assert len(seen) == 9
    _, p = chi_square(list(seen.values()), [500.0] * 9)
    assert p > SIG


def test_decreasing_trees_uniform_and_increasing():
    spec = corpus_spec("tan")
    assert count_upto(spec, 5)["T"][5] == 16
    seen = _label_counts(spec, "T", 1.2, 5, 3200, 11)
    assert len(seen) == 16
    _, p = chi_square(list(seen.values()), [200.0] * 16)
    assert p > SIG


def test_unrolling_atom_holds_subtree_max():
    sampler = compile(corpus_spec("tan"), 1.2)
    stream = UniformStream(12)
    for _ in range(200):
        t = sampler.sample("T", stream).structure
        assign_labels(t, stream)
        labels = sorted(a.label for a in atoms(t))
        assert labels == list(range(1, t.size + 1))
        for n in preorder(t):
            if isinstance(n, ClassNode) and n.differential and isinstance(n.inner, PairNode):
                top = [a for a in atoms(n) if a.top][0]
                assert top.label == max(a.label for a in atoms(n))


def _search(sampler, cls, seed, lo, hi, walk):
    sampler.use_walk = walk
    res, trials, a, u = sampler.search(cls, UniformStream(seed), lo, hi, 10**6)
    return to_term(res.structure, False), trials, a, u


@pytest.mark.parametrize("name,cls,x,lo,hi", [
    ("ptrees", "P", 0.249, 30, 40), ("rooted", "R", 0.33, 20, 25), ("perms", "P", 0.95, 15, 20),
    ("partitions", "Part", 0.8, 10, 12), ("tan", "T", 1.4, 9, 11), ("mixed", "D", 0.5, 6, 8),
    ("recip", "Y", 0.8, 5, 7)])
def test_walk_matches_builder(name, cls, x, lo, hi):
    sampler = compile(corpus_spec(name), x)
    if not sampler.use_walk:
        pytest.skip("numba disabled")
    for seed in range(3):
        assert _search(sampler, cls, seed, lo, hi, True) == _search(sampler, cls, seed, lo, hi, False)


def test_ledger_intervals_contain_values():
    sampler = compile(corpus_spec("partitions"), 0.5)
    stream = UniformStream(13)
    for _ in range(100):
        res = sampler.sample("Part", stream, track=True)
        for name, e in res.ledger.items():
            assert e.value in e.interval, name
            assert e.uses >= 1


def test_inside_override_keeps_output():
    sampler = compile(parse_spec("B = 1 + Z * B * B;"), 0.2)
    for seed in range(40):
        base = sampler.sample("B", UniformStream(seed), track=True)
        for name, e in base.ledger.items():
            iv = e.interval
            lo = iv.lo if math.isfinite(iv.lo) else 0.0
            v = 0.5 * (lo + iv.hi) if math.isfinite(iv.hi) else lo + 0.5
            if v not in iv:
                continue
            sampler.overrides = {name: v}
            try:
                again = sampler.sample("B", UniformStream(seed))
            finally:
                sampler.overrides = {}
            assert to_term(again.structure, False) == to_term(base.structure, False)
