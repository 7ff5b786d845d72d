"""POVMs, local measurement protocol trees, and exact protocol simulation.

A protocol is a finite tree. Each node is one party measuring a POVM on some
of its own factors; classical communication is the branching on the outcome.
Leaves declare an answer or stay inconclusive. Simulation propagates
unnormalized density matrices with the square-root measurement update, so the
trace at a leaf is the probability of reaching it.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from locc_marker.config import DEFAULT_TOLERANCES, ToleranceConfig
from locc_marker.detect import DetectingCertificate
from locc_marker.ensembles.base import Ensemble, EnsembleMember, PartyStructure
from locc_marker.ensembles.codec import to_pairs
from locc_marker.ensembles.qubit_pairs import perp, trine_state
from locc_marker.ensembles.qutrit import tiles_pairs
from locc_marker.ensembles.registry import build_named
from locc_marker.errors import (
    DimensionMismatchError,
    InvalidParameterError,
    MalformedProtocolError,
    MarkingRangeError,
    MissingCertificateError,
    UnknownLabelError,
    UnknownProtocolError,
)
from locc_marker.marking import (
    DerivedMarkingSet,
    marking_permutation,
    marking_structure,
    tuple_label,
)
from locc_marker.metrics import record_simulation
from locc_marker.numkernel import ComplexArray, Operator, StateVector, psd_sqrt, regroup_operator

logger = logging.getLogger(__name__)

PSD_TOL = 1e-9
OFFDIAGONAL_TOL = 1e-12
PRUNE_TOL = 1e-18
DISTRIBUTION_TOL = 1e-9
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class POVM:
    """Labelled effects on ``subsystem`` (sorted factor indices).

    ``party`` is None for a measurement on the whole space, which can be
    checked against an ensemble but never appears in a protocol tree.
    """

    party: int | None
    subsystem: tuple[int, ...]
    dims: tuple[int, ...]
    labels: tuple[str, ...]
    effects: tuple[ComplexArray, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.effects) or not self.labels:
            raise DimensionMismatchError("a POVM needs one effect per label and at least one")
        if len(set(self.labels)) != len(self.labels):
            raise MalformedProtocolError(f"duplicate POVM outcome labels {self.labels}")
        sorted_factors = list(self.subsystem) == sorted(set(self.subsystem))
        if not sorted_factors or len(self.subsystem) != len(self.dims):
            raise MalformedProtocolError(
                f"subsystem {self.subsystem} must be sorted, one dim per factor"
            )
        dim = math.prod(self.dims)
        effects = tuple(np.asarray(e, dtype=np.complex128) for e in self.effects)
        for label, effect in zip(self.labels, effects):
            if effect.shape != (dim, dim):
                raise DimensionMismatchError(
                    f"effect '{label}' has shape {effect.shape}, expected {dim}x{dim}"
                )
        object.__setattr__(self, "effects", effects)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    @property
    def completeness_residual(self) -> float:
        total = sum(self.effects, np.zeros((self.dim, self.dim), dtype=np.complex128))
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def effect(self, label: str) -> ComplexArray:
        try:
            return self.effects[self.labels.index(label)]
        except ValueError:
            raise UnknownLabelError(f"POVM has no outcome '{label}'") from None

    @classmethod
    def from_effects(
        cls,
        party: int | None,
        subsystem: Sequence[int],
        dims: Sequence[int],
        effects: Mapping[str, ComplexArray],
    ) -> POVM:
        return cls(party, tuple(subsystem), tuple(dims), tuple(effects), tuple(effects.values()))

    @classmethod
    def binary_test(
        cls,
        party: int,
        subsystem: Sequence[int],
        dims: Sequence[int],
        vector: StateVector,
        hit: str,
        miss: str,
    ) -> POVM:
        """Two-outcome projective test {|v><v|, 1 - |v><v|}."""
        projector = vector.normalized().projector()
        return cls.from_effects(
            party, subsystem, dims, {hit: projector, miss: np.eye(projector.shape[0]) - projector}
        )

    @classmethod
    def computational(
        cls, party: int, subsystem: Sequence[int], dims: Sequence[int], prefix: str
    ) -> POVM:
        dim = math.prod(dims)
        effects = {}
        for k in range(dim):
            effect = np.zeros((dim, dim), dtype=np.complex128)
            effect[k, k] = 1.0
            effects[f"{prefix}{k}"] = effect
        return cls.from_effects(party, subsystem, dims, effects)


@dataclass
class POVMReport:
    passed: bool
    min_eigenvalues: dict[str, float]
    completeness_residual: float
    failures: list[str] = field(default_factory=list)


def verify_povm(p: POVM, tol: ToleranceConfig = DEFAULT_TOLERANCES) -> POVMReport:
    """Positivity of every effect and completeness of their sum."""
    min_eigenvalues = {
        label: float(np.linalg.eigvalsh((e + e.conj().T) / 2)[0])
        for label, e in zip(p.labels, p.effects)
    }
    failures = [
        f"effect '{label}' has eigenvalue {v:.3e}"
        for label, v in min_eigenvalues.items()
        if v < -PSD_TOL
    ]
    residual = p.completeness_residual
    if residual > tol.identity_tol:
        failures.append(f"effects miss the identity by {residual:.3e}")
    return POVMReport(not failures, min_eigenvalues, residual, failures)


@dataclass
class ConclusiveReport:
    """Traces Tr(rho_l P_k) for every answering effect k and member l."""

    passed: bool
    success: dict[str, float]
    max_offdiagonal: float
    traces: dict[str, dict[str, float]] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)


def verify_conclusive_condition(
    p: POVM,
    e: Ensemble,
    answer_map: Mapping[str, str],
) -> ConclusiveReport:
    """Answering effects fire only on their own member, with positive probability.

    Raises:
        DimensionMismatchError: the POVM does not act on the ensemble's space
        UnknownLabelError: an answer map entry names no effect or no member
    """
    if p.dim != e.structure.total_dim:
        raise DimensionMismatchError(
            f"POVM of dim {p.dim} on ensemble of dim {e.structure.total_dim}"
        )
    for effect_label, member_label in answer_map.items():
        p.effect(effect_label)
        e.index_of(member_label)

    densities = {m.label: m.density_matrix() / np.trace(m.density_matrix()).real for m in e.members}
    traces: dict[str, dict[str, float]] = {}
    success: dict[str, float] = {}
    failures: list[str] = []
    worst = 0.0
    for effect_label, member_label in answer_map.items():
        effect = p.effect(effect_label)
        row = {label: float(np.trace(rho @ effect).real) for label, rho in densities.items()}
        traces[effect_label] = row
        success[effect_label] = row[member_label]
        if row[member_label] <= OFFDIAGONAL_TOL:
            failures.append(f"effect '{effect_label}' never fires on '{member_label}'")
        for label, value in row.items():
            if label == member_label:
                continue
            worst = max(worst, abs(value))
            if abs(value) > OFFDIAGONAL_TOL:
                failures.append(
                    f"effect '{effect_label}' fires on '{label}' with probability {value:.3e}"
                )
    return ConclusiveReport(not failures, success, worst, traces, failures)


def povm_from_certificate(cert: DetectingCertificate, structure: PartyStructure) -> POVM:
    """Whole-space {hit: |phi><phi|, miss: 1 - |phi><phi|} from a detector."""
    detector = StateVector.from_amplitudes(cert.detector().amplitudes)
    if detector.dim != structure.total_dim:
        raise DimensionMismatchError(
            f"detector of dim {detector.dim} for structure of dim {structure.total_dim}"
        )
    projector = detector.projector()
    return POVM.from_effects(
        None,
        range(structure.num_factors),
        structure.factor_dims,
        {"hit": projector, "miss": np.eye(structure.total_dim) - projector},
    )


# =============================================================================
# Protocol trees
# =============================================================================
@dataclass(frozen=True)
class Declaration:
    answer: str | None = None

    @property
    def is_inconclusive(self) -> bool:
        return self.answer is None

    @property
    def key(self) -> str:
        return self.answer if self.answer is not None else INCONCLUSIVE


INCONCLUSIVE_DECLARATION = Declaration()


@dataclass(frozen=True, eq=False)
class ProtocolNode:
    povm: POVM
    branches: Mapping[str, ProtocolNode | Declaration]

    @property
    def acting_party(self) -> int | None:
        return self.povm.party

    @property
    def subsystem(self) -> tuple[int, ...]:
        return self.povm.subsystem


def _check_tree(
    node: ProtocolNode, structure: PartyStructure, answers: set[str], seen: set[int]
) -> None:
    if id(node) in seen:
        return
    seen.add(id(node))
    povm = node.povm
    if povm.party is None or not 0 <= povm.party < structure.num_parties:
        raise MalformedProtocolError(f"node acts on party {povm.party}, not a local party")
    own = set(structure.party_factors(povm.party))
    if not set(povm.subsystem) <= own:
        raise MalformedProtocolError(
            f"node of party {povm.party} touches factors "
            f"{sorted(set(povm.subsystem) - own)} of other parties"
        )
    if povm.dims != tuple(structure.factor_dims[f] for f in povm.subsystem):
        raise MalformedProtocolError(f"POVM dims {povm.dims} do not match factors {povm.subsystem}")
    if set(node.branches) != set(povm.labels):
        raise MalformedProtocolError(
            f"branches {sorted(node.branches)} do not cover outcomes {povm.labels}"
        )
    for child in node.branches.values():
        if isinstance(child, Declaration):
            if child.answer is not None and child.answer not in answers:
                raise MalformedProtocolError(f"declaration '{child.answer}' is not a hypothesis")
        else:
            _check_tree(child, structure, answers, seen)


def _apply_local(
    kraus: ComplexArray, rho: ComplexArray, dims: tuple[int, ...], factors: tuple[int, ...]
) -> ComplexArray:
    """K rho K^+ with K acting on ``factors`` of the composite space."""
    n = len(dims)
    m = len(factors)
    sub = tuple(dims[f] for f in factors)
    k = kraus.reshape(sub + sub)
    t = rho.reshape(dims + dims)
    t = np.tensordot(k, t, axes=(list(range(m, 2 * m)), list(factors)))
    t = np.moveaxis(t, list(range(m)), list(factors))
    t = np.tensordot(k.conj(), t, axes=(list(range(m, 2 * m)), [n + f for f in factors]))
    t = np.moveaxis(t, list(range(m)), [n + f for f in factors])
    dim = rho.shape[0]
    return t.reshape(dim, dim)


@dataclass
class HypothesisOutcome:
    distribution: dict[str, float]
    success_probability: float
    error_probability: float

    @property
    def total(self) -> float:
        return sum(self.distribution.values())


@dataclass
class SimulationReport:
    hypotheses: str
    per_hypothesis: dict[str, HypothesisOutcome] = field(default_factory=dict)

    @property
    def max_error_declaration(self) -> float:
        """Largest probability of one wrong answer under one hypothesis."""
        worst = 0.0
        for label, outcome in self.per_hypothesis.items():
            for key, p in outcome.distribution.items():
                if key not in (label, INCONCLUSIVE):
                    worst = max(worst, p)
        return worst

    @property
    def zero_error(self) -> bool:
        return self.max_error_declaration <= OFFDIAGONAL_TOL

    @property
    def conserved(self) -> bool:
        return all(abs(o.total - 1.0) <= DISTRIBUTION_TOL for o in self.per_hypothesis.values())


def simulate(root: ProtocolNode, hypotheses: Ensemble | DerivedMarkingSet) -> SimulationReport:
    """Exact outcome distribution of a protocol under every hypothesis.

    Raises:
        MalformedProtocolError: a node is not local, misses an outcome, or
            declares something that is not a hypothesis
    """
    e = hypotheses.derived if isinstance(hypotheses, DerivedMarkingSet) else hypotheses
    structure = e.structure
    _check_tree(root, structure, set(e.labels), set())
    dims = structure.factor_dims
    kraus_cache: dict[tuple[int, str], ComplexArray] = {}

    def kraus(node: ProtocolNode, label: str) -> ComplexArray:
        key = (id(node), label)
        if key not in kraus_cache:
            kraus_cache[key] = psd_sqrt(node.povm.effect(label))
        return kraus_cache[key]

    report = SimulationReport(e.name)
    for member in e.members:
        rho = member.density_matrix()
        rho = rho / np.trace(rho).real
        distribution: dict[str, float] = {}
        stack: list[tuple[ProtocolNode, ComplexArray]] = [(root, rho)]
        while stack:
            node, state = stack.pop()
            for label in node.povm.labels:
                updated = _apply_local(kraus(node, label), state, dims, node.subsystem)
                p = float(np.trace(updated).real)
                if p <= PRUNE_TOL:
                    continue
                child = node.branches[label]
                if isinstance(child, Declaration):
                    distribution[child.key] = distribution.get(child.key, 0.0) + p
                else:
                    stack.append((child, updated))
        success = distribution.get(member.label, 0.0)
        error = sum(p for k, p in distribution.items() if k not in (member.label, INCONCLUSIVE))
        report.per_hypothesis[member.label] = HypothesisOutcome(distribution, success, error)

    record_simulation()
    if not report.conserved:
        logger.warning(f"Simulation on {e.name} lost probability mass")
    logger.info(
        f"Simulated protocol on {len(e)} hypotheses of {e.name}: "
        f"zero_error={report.zero_error}, max wrong answer {report.max_error_declaration:.3e}"
    )
    return report


# =============================================================================
# Protocol construction
# =============================================================================
def build_sequential_marking_protocol(
    d: DerivedMarkingSet, base_certificates: Mapping[str, DetectingCertificate]
) -> ProtocolNode:
    """Identify the member in each slot in turn from base detectors.

    In every slot the first party picks a candidate among the members not yet
    identified, each with weight 1/n; the remaining parties test their own
    factor of that candidate's detector. A full hit identifies the slot, any
    miss ends the run inconclusively.

    Raises:
        MissingCertificateError: some base member has no certificate
    """
    base = d.base
    for label in base.labels:
        if label not in base_certificates:
            raise MissingCertificateError(f"no detecting certificate for base member '{label}'")
    certs = [base_certificates[label] for label in base.labels]
    structure = d.derived.structure
    parties = base.structure.num_parties

    def party_dims(party: int, slot: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        factors = d.slot_factors(party, slot)
        return factors, tuple(structure.factor_dims[f] for f in factors)

    def confirm(
        slot: int, candidate: int, party: int, done: tuple[int, ...]
    ) -> ProtocolNode | Declaration:
        if party == parties:
            identified = done + (candidate,)
            if slot == d.m - 1:
                return Declaration(tuple_label(base, identified))
            return pick(slot + 1, identified)
        factors, dims = party_dims(party, slot)
        test = POVM.binary_test(
            party, factors, dims, certs[candidate].per_party_vectors[party], "hit", "miss"
        )
        hit = confirm(slot, candidate, party + 1, done)
        return ProtocolNode(test, {"hit": hit, "miss": INCONCLUSIVE_DECLARATION})

    def pick(slot: int, done: tuple[int, ...]) -> ProtocolNode:
        candidates = [i for i in range(len(base)) if i not in done]
        weight = 1.0 / len(candidates)
        factors, dims = party_dims(0, slot)
        effects: dict[str, ComplexArray] = {}
        for i in candidates:
            local = certs[i].per_party_vectors[0].normalized()
            effects[base.members[i].label] = weight * local.projector()
        dim = math.prod(dims)
        covered = sum(effects.values(), np.zeros((dim, dim), dtype=np.complex128))
        effects["?"] = np.eye(dim) - covered
        branches: dict[str, ProtocolNode | Declaration] = {"?": INCONCLUSIVE_DECLARATION}
        for i in candidates:
            branches[base.members[i].label] = confirm(slot, i, 1, done)
        return ProtocolNode(POVM.from_effects(0, factors, dims, effects), branches)

    root = pick(0, ())
    logger.info(f"Built sequential marking protocol over {len(d)} hypotheses of {d.derived.name}")
    return root


def mixed_marking_hypotheses(e: Ensemble, m: int) -> DerivedMarkingSet:
    """Regrouped m-fold products of possibly mixed members, one per ordered tuple."""
    n = len(e)
    if not 1 <= m <= n:
        raise MarkingRangeError(f"m={m} outside 1..{n} for ensemble '{e.name}'")
    structure = e.structure
    perm = marking_permutation(structure, m)
    densities = [mem.density_matrix() / np.trace(mem.density_matrix()).real for mem in e.members]
    tuples = tuple(itertools.permutations(range(n), m))
    members = []
    for t in tuples:
        joint = densities[t[0]]
        for i in t[1:]:
            joint = np.kron(joint, densities[i])
        op = regroup_operator(Operator(structure.factor_dims * m, joint), perm)
        members.append(EnsembleMember(tuple_label(e, t), op))
    derived = Ensemble(f"{e.name}[m={m}]", marking_structure(structure, m), tuple(members))
    return DerivedMarkingSet(e, m, tuples, derived)


def pw_conclusive(target: int = 0) -> ProtocolNode:
    """Alice tests w_{k+1}, Bob tests w_{k+2}; both orthogonal outcomes identify w_k w_k."""
    if target not in (0, 1, 2):
        raise InvalidParameterError(f"pw_conclusive target must be 0, 1 or 2, got {target}")
    first, second = (target + 1) % 3, (target + 2) % 3
    bob = ProtocolNode(
        POVM.binary_test(1, (1,), (2,), perp(trine_state(second)), "perp", "parallel"),
        {"perp": Declaration(f"w{target}w{target}"), "parallel": INCONCLUSIVE_DECLARATION},
    )
    return ProtocolNode(
        POVM.binary_test(0, (0,), (2,), perp(trine_state(first)), "perp", "parallel"),
        {"perp": bob, "parallel": INCONCLUSIVE_DECLARATION},
    )


def pw_conclusive_povm(target: int = 0) -> POVM:
    """The same measurement as one product-basis POVM on C^2 x C^2."""
    first, second = (target + 1) % 3, (target + 2) % 3
    a = [perp(trine_state(first)), trine_state(first)]
    b = [perp(trine_state(second)), trine_state(second)]
    effects = {
        label: np.kron(a[i].projector(), b[j].projector())
        for label, (i, j) in zip(("E0", "E?", "E??", "E???"), ((0, 0), (0, 1), (1, 0), (1, 1)))
    }
    return POVM.from_effects(None, (0, 1), (2, 2), effects)


YU_MODES = ("strict01", "any_anticorrelated")


def yu_marking(d: int, mode: str = "any_anticorrelated") -> ProtocolNode:
    """Computational measurements on A1 and B1, then A2 and B2.

    The maximally entangled member always gives equal outcomes, so a
    qualifying unequal pair marks the other member in that slot.
    """
    if mode not in YU_MODES:
        raise InvalidParameterError(f"yu_marking mode must be one of {YU_MODES}, got '{mode}'")
    if d < 2:
        raise InvalidParameterError(f"yu_marking needs d >= 2, got {d}")

    def hit(a: int, b: int) -> bool:
        return (a, b) == (0, 1) if mode == "strict01" else a != b

    def slot(
        a_factor: int, b_factor: int, answer: str, fallback: ProtocolNode | Declaration
    ) -> ProtocolNode:
        bob = POVM.computational(1, (b_factor,), (d,), "b")
        branches: dict[str, ProtocolNode | Declaration] = {}
        for a in range(d):
            bob_branches = {
                f"b{b}": Declaration(answer) if hit(a, b) else fallback for b in range(d)
            }
            branches[f"a{a}"] = ProtocolNode(bob, bob_branches)
        return ProtocolNode(POVM.computational(0, (a_factor,), (d,), "a"), branches)

    second = slot(1, 3, "rho.sigma", INCONCLUSIVE_DECLARATION)
    return slot(0, 2, "sigma.rho", second)


def upb_marking(member: str = "tile0") -> ProtocolNode:
    """Local tests onto one Tiles member's factors, slot by slot.

    The entangled member lives in the complement of the Tiles span, so a
    double hit marks the UPB-span member in that slot.
    """
    labels = [f"tile{k}" for k in range(5)]
    if member not in labels:
        raise InvalidParameterError(f"upb_marking member must be one of {labels}, got '{member}'")
    a, b = tiles_pairs()[labels.index(member)]

    def slot(
        a_factor: int, b_factor: int, answer: str, fallback: ProtocolNode | Declaration
    ) -> ProtocolNode:
        bob = ProtocolNode(
            POVM.binary_test(1, (b_factor,), (3,), b, "hit", "miss"),
            {"hit": Declaration(answer), "miss": fallback},
        )
        alice = POVM.binary_test(0, (a_factor,), (3,), a, "hit", "miss")
        return ProtocolNode(alice, {"hit": bob, "miss": fallback})

    second = slot(1, 3, "rho_ent.sigma_upb", INCONCLUSIVE_DECLARATION)
    return slot(0, 2, "sigma_upb.rho_ent", second)


@dataclass(frozen=True)
class NamedProtocol:
    build: Callable[..., ProtocolNode]
    hypotheses: Callable[..., Ensemble | DerivedMarkingSet]
    parameters: tuple[str, ...]


NAMED_PROTOCOLS: dict[str, NamedProtocol] = {
    "pw_conclusive": NamedProtocol(
        lambda target=0: pw_conclusive(target), lambda **_: build_named("pw_trine"), ("target",)
    ),
    "yu_marking": NamedProtocol(
        lambda d=2, mode="any_anticorrelated": yu_marking(d, mode),
        lambda d=2, **_: mixed_marking_hypotheses(build_named("yu", d=d), 2),
        ("d", "mode"),
    ),
    "upb_marking": NamedProtocol(
        lambda member="tile0": upb_marking(member),
        lambda **_: mixed_marking_hypotheses(build_named("xb_from_upb"), 2),
        ("member",),
    ),
}


def _named(name: str) -> NamedProtocol:
    try:
        return NAMED_PROTOCOLS[name]
    except KeyError:
        known = ", ".join(NAMED_PROTOCOLS)
        raise UnknownProtocolError(f"Unknown protocol '{name}' (known: {known})") from None


def build_named_protocol(name: str, **params: Any) -> ProtocolNode:
    """Build a named protocol; parameters left as None take their defaults."""
    entry = _named(name)
    given = {k: v for k, v in params.items() if v is not None and k in entry.parameters}
    return entry.build(**given)


def named_protocol_hypotheses(name: str, **params: Any) -> Ensemble | DerivedMarkingSet:
    """The hypothesis set a named protocol is meant to be simulated on."""
    entry = _named(name)
    given = {k: v for k, v in params.items() if v is not None}
    return entry.hypotheses(**given)


def protocol_to_dict(node: ProtocolNode | Declaration) -> dict[str, Any]:
    """Nested {party, subsystem, effects, branches} mapping; leaves are {declare}."""
    if isinstance(node, Declaration):
        return {"declare": node.answer}
    return {
        "party": node.povm.party,
        "subsystem": list(node.povm.subsystem),
        "effects": {label: to_pairs(e) for label, e in zip(node.povm.labels, node.povm.effects)},
        "branches": {label: protocol_to_dict(child) for label, child in node.branches.items()},
    }


def count_nodes(node: ProtocolNode | Declaration) -> int:
    if isinstance(node, Declaration):
        return 0
    return 1 + sum(count_nodes(child) for child in node.branches.values())
