"""Size control by rejection around the free samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ParameterError, ResourceError
from .oracle import find_radius, tune
from .rng import UniformStream
from .sampler import CompiledSampler, compile
from .spec import Spec, min_sizes

MAX_TRIALS = 10**6
MAX_RETAINED_ATOMS = 10**6

APPROX, EXACT = "approx", "exact"
SINGULAR_APPROX, SINGULAR_EXACT = "singular-approx", "singular-exact"
HADAMARD_NAIVE, HADAMARD_BIRTHDAY = "hadamard-naive", "hadamard-birthday"


@dataclass
class ControlResult:
    structure: object
    trials: int
    total_atoms_generated: int
    mode: str
    parameter_used: object
    total_uniforms: int = 0
    rejected_sizes: list = field(default_factory=list)
    report: object = None  # SizeReport of the accepted run
    ledger: dict = field(default_factory=dict)

    @property
    def size(self):
        if isinstance(self.structure, tuple):
            return self.structure[0].size
        return self.structure.size

    def to_json(self):
        return {"trials": self.trials, "totalAtomsGenerated": self.total_atoms_generated,
                "totalUniforms": self.total_uniforms, "mode": self.mode,
                "parameterUsed": self.parameter_used}


def window(n: int, epsilon: float) -> tuple[int, int]:
    """Smallest and largest integer sizes inside the open window ((1-eps)n, (1+eps)n)."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError("epsilon must lie in (0, 1)")
    lo, hi = (1 - epsilon) * n, (1 + epsilon) * n
    return math.floor(lo) + 1, math.ceil(hi) - 1


def _reject_loop(sampler: CompiledSampler, cls, lo, hi, stream, mode, max_trials, keep_sizes=False,
                 track=False):
    if hi < lo:
        raise ParameterError(f"empty size window [{lo}, {hi}]")
    mins = min_sizes(sampler.spec)[cls]
    if mins > hi:
        raise ParameterError(f"no structure of {cls} has size <= {hi} (minimum size {mins})")
    if keep_sizes:
        # every rejected size is wanted, so each draw goes through the builder
        atoms = uniforms = 0
        rejected = []
        for trial in range(1, max_trials + 1):
            res = sampler.sample(cls, stream, track, hi)
            atoms += res.report.atoms_generated
            uniforms += res.report.uniforms_consumed
            if res.structure is not None and res.structure.size >= lo:
                return ControlResult(res.structure, trial, atoms, mode, sampler.x, uniforms, rejected,
                                     res.report, res.ledger)
            rejected.append(None if res.report.aborted else res.report.output_size)
    else:
        # aborting past hi never changes which draw is accepted
        res, trials, atoms, uniforms = sampler.search(cls, stream, lo, hi, max_trials, track)
        if res is not None:
            return ControlResult(res.structure, trials, atoms, mode, sampler.x, uniforms, [],
                                 res.report, res.ledger)
    raise ResourceError(f"no sample of size in [{lo}, {hi}] after {max_trials} trials at x={sampler.x!r}; "
                        "the parameter is probably mistuned")


def sample_approx(sampler: CompiledSampler, cls: str, n: int, epsilon: float, stream: UniformStream,
                  singular: bool = False, max_trials: int = MAX_TRIALS, keep_sizes: bool = False,
                  track: bool = False) -> ControlResult:
    lo, hi = window(n, epsilon)
    return _reject_loop(sampler, cls, lo, hi, stream, SINGULAR_APPROX if singular else APPROX,
                        max_trials, keep_sizes, track)


def sample_exact(sampler: CompiledSampler, cls: str, n: int, stream: UniformStream,
                 singular: bool = False, max_trials: int = MAX_TRIALS, keep_sizes: bool = False,
                 track: bool = False) -> ControlResult:
    if n < 0:
        raise ParameterError("size must be >= 0")
    return _reject_loop(sampler, cls, n, n, stream, SINGULAR_EXACT if singular else EXACT,
                        max_trials, keep_sizes, track)


def singular_parameter(spec: Spec, cls: str) -> float:
    """Largest parameter certainly inside the disc: rho_hat minus its error bar."""
    rho, half = find_radius(spec, cls)
    if not math.isfinite(rho):
        raise ParameterError(f"{cls} has an infinite radius; singular sampling needs a finite singularity")
    return rho - half


def sampler_for(spec: Spec, cls: str, n: int | None = None, x: float | None = None,
                singular: bool = False, ceiling: int | None = None) -> tuple[CompiledSampler, bool]:
    """Compile at x, at tune(n), or at the singular parameter.

    Returns the sampler and whether it runs at the singularity (tuning
    falls back to it when the expected size stays below n).
    """
    if x is None:
        if singular:
            x = singular_parameter(spec, cls)
        else:
            if n is None:
                raise ParameterError("either x or a target size is needed")
            res = tune(spec, cls, n)
            x, singular = res.x, res.singular
    return compile(spec, x, ceiling=ceiling), singular


# --------------------------------------------------------------------------
# Hadamard product
# --------------------------------------------------------------------------


def _draw(sampler, cls, stream):
    res = sampler.sample(cls, stream)
    return res.structure, res.report


def sample_hadamard_naive(left: tuple[CompiledSampler, str], right: tuple[CompiledSampler, str],
                          stream: UniformStream, max_trials: int = MAX_TRIALS) -> ControlResult:
    """Independent pairs until the sizes agree; the pair is Boltzmann for the Hadamard class at xA*xB."""
    (sa, ca), (sb, cb) = left, right
    atoms = uniforms = 0
    for trial in range(1, max_trials + 1):
        a, ra = _draw(sa, ca, stream)
        b, rb = _draw(sb, cb, stream)
        atoms += ra.atoms_generated + rb.atoms_generated
        uniforms += ra.uniforms_consumed + rb.uniforms_consumed
        if a is not None and b is not None and a.size == b.size:
            return ControlResult((a, b), trial, atoms, HADAMARD_NAIVE, (sa.x, sb.x), uniforms)
    raise ResourceError(f"no size match after {max_trials} pairs")


def sample_hadamard_birthday(left: tuple[CompiledSampler, str], right: tuple[CompiledSampler, str],
                             stream: UniformStream, alternation: str = "deterministic",
                             max_trials: int = MAX_TRIALS, max_atoms: int = MAX_RETAINED_ATOMS) -> ControlResult:
    """Alternate draws, keep the first structure per (side, size), stop at the first shared size.

    `trials` counts single draws. The pair is uniform within its size but
    the size law is not the Hadamard Boltzmann law.
    """
    if alternation not in ("deterministic", "random"):
        raise ParameterError("alternation is 'deterministic' or 'random'")
    sides = (left, right)
    seen: tuple[dict, dict] = ({}, {})
    atoms = uniforms = retained = 0
    side = 0
    for trial in range(1, max_trials + 1):
        if alternation == "random":
            side = stream.below(2)
        sampler, cls = sides[side]
        s, rep = _draw(sampler, cls, stream)
        atoms += rep.atoms_generated
        uniforms += rep.uniforms_consumed
        if s is not None and s.size not in seen[side]:
            other = seen[1 - side].get(s.size)
            if other is not None:
                pair = (s, other) if side == 0 else (other, s)
                return ControlResult(pair, trial, atoms, HADAMARD_BIRTHDAY, (left[0].x, right[0].x), uniforms)
            retained += s.size
            if retained > max_atoms:
                raise ResourceError(f"birthday sampler retains more than {max_atoms} atoms")
            seen[side][s.size] = s
        if alternation == "deterministic":
            side = 1 - side
    raise ResourceError(f"no size match after {max_trials} draws")
