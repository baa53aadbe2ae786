import statistics

import pytest

from boltzgen import parse_spec
from boltzgen import controller as ctl
from boltzgen.counting import size_pmf
from boltzgen.errors import ParameterError, ResourceError
from boltzgen.rng import UniformStream
from boltzgen.sampler import compile

from conftest import corpus_spec

PT = parse_spec("P = Z * Seq(P);")


def test_window():
    assert ctl.window(1000, 0.05) == (951, 1049)
    assert ctl.window(10, 0.1) == (10, 10)
    assert ctl.window(20, 0.5) == (11, 29)
    for eps in (0.0, 1.0, -0.2):
        with pytest.raises(ParameterError):
            ctl.window(10, eps)


def test_exact_trials_match_size_law():
    x, n = 0.2, 4
    sampler = compile(PT, x)
    p = size_pmf(PT, "P", x, n)[n]
    stream = UniformStream(1)
    trials = [ctl.sample_exact(sampler, "P", n, stream).trials for _ in range(3000)]
    mean = statistics.fmean(trials)
    sd = ((1 - p) / p**2) ** 0.5 / len(trials) ** 0.5
    assert abs(mean - 1 / p) < 5 * sd


def test_walk_does_not_change_trial_counts():
    sampler = compile(PT, 0.249)
    a = ctl.sample_approx(sampler, "P", 50, 0.1, UniformStream(3))
    sampler.use_walk = False
    b = ctl.sample_approx(sampler, "P", 50, 0.1, UniformStream(3))
    assert (a.trials, a.total_atoms_generated, a.total_uniforms) == (b.trials, b.total_atoms_generated,
                                                                      b.total_uniforms)
    assert a.size == b.size


def test_rejected_sizes_outside_window():
    sampler = compile(PT, 0.249)
    res = ctl.sample_approx(sampler, "P", 40, 0.1, UniformStream(4), keep_sizes=True)
    lo, hi = ctl.window(40, 0.1)
    assert lo <= res.size <= hi
    assert len(res.rejected_sizes) == res.trials - 1
    assert all(s is None or s < lo for s in res.rejected_sizes)


def test_errors():
    sampler = compile(PT, 0.2)
    with pytest.raises(ParameterError):
        ctl.sample_exact(sampler, "P", -1, UniformStream(0))
    with pytest.raises(ParameterError):
        ctl.sample_exact(sampler, "P", 0, UniformStream(0))
    with pytest.raises(ResourceError):
        ctl.sample_exact(compile(PT, 0.01), "P", 30, UniformStream(0), max_trials=50)
    with pytest.raises(ParameterError):
        ctl.singular_parameter(parse_spec("@labelled S = Set(Z);"), "S")
    with pytest.raises(ParameterError):
        ctl.sampler_for(PT, "P")


def test_tuned_and_singular_samplers():
    s, singular = ctl.sampler_for(PT, "P", n=100)
    assert not singular and 0.2 < s.x < 0.25
    s, singular = ctl.sampler_for(PT, "P", singular=True)
    assert singular and 0.25 - 1e-8 < s.x <= 0.25
    res = ctl.sample_exact(s, "P", 25, UniformStream(5), singular=True)
    assert res.size == 25 and res.mode == ctl.SINGULAR_EXACT


def test_mode_and_json():
    sampler = compile(PT, 0.24)
    res = ctl.sample_exact(sampler, "P", 6, UniformStream(6))
    d = res.to_json()
    assert d["mode"] == "exact" and d["trials"] == res.trials and d["parameterUsed"] == 0.24
    assert d["totalAtomsGenerated"] >= 6


@pytest.mark.parametrize("alternation", ["deterministic", "random"])
def test_birthday_invariants(alternation):
    left = (compile(PT, 0.22), "P")
    right = (compile(corpus_spec("seq"), 0.8), "S")
    for seed in range(50):
        res = ctl.sample_hadamard_birthday(left, right, UniformStream(seed), alternation)
        a, b = res.structure
        assert a.size == b.size
        assert res.trials >= 2
        assert res.mode == ctl.HADAMARD_BIRTHDAY
    with pytest.raises(ParameterError):
        ctl.sample_hadamard_birthday(left, right, UniformStream(0), "sometimes")


def test_birthday_retention_cap():
    left = (compile(PT, 0.2499), "P")
    right = (compile(parse_spec("E = Z * Z * Z * Seq(Z * Z * Z);"), 0.5), "E")
    # left sizes that are not multiples of 3 can never match
    with pytest.raises(ResourceError):
        ctl.sample_hadamard_birthday(left, right, UniformStream(1), max_trials=10**4, max_atoms=200)


def test_naive_hadamard_sizes_agree():
    left = (compile(PT, 0.2), "P")
    right = (compile(corpus_spec("seq"), 0.5), "S")
    for seed in range(30):
        res = ctl.sample_hadamard_naive(left, right, UniformStream(seed))
        a, b = res.structure
        assert a.size == b.size and res.mode == ctl.HADAMARD_NAIVE
