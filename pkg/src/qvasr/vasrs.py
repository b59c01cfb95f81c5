"""Abstraction of transition formulas by systems with control states.

A plain system abstracts away all control flow; here the control states
are disjoint predicates over the pre-state vocabulary, inferred from the
formula itself, and each edge is an abstract transformer admissible
between a particular pair of predicates.  The transitive-closure
operators at the bottom of the module tie the pieces together: infer
predicates, abstract, build the reachability relation of the machine,
and pull it back through the simulation.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .linalg import RationalMatrix
from .logic import (
    And,
    Const,
    Eq,
    Formula,
    Lt,
    Sort,
    Term,
    TransitionFormula,
    Var,
    compose,
    free_symbols,
    identity_tf,
    linear_term,
    mk_and,
    mk_exists,
    mk_le,
    mk_or,
    negate,
    prime_var,
    primed,
    select_cube,
    skolemize,
    substitute,
    SolverHandle,
    is_sat,
    TRUE,
)
from .reach import QVasrs, ReachFormula, reach_vasr, reach_vasrs
from .vas import (
    QVasr,
    Transformer,
    VasrAbstraction,
    abstract_vasr,
    bottom_abstraction,
    image,
    is_normal,
    lub,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_PREDICATES = 16
DEFAULT_MAX_REGIONS = 64


@dataclass(frozen=True)
class PredicateVasrs:
    """A machine whose control states are disjoint pre-state predicates.

    Edges are keyed by predicate index, so the machine itself is an
    ordinary integer-state system plus a predicate per state.  Pairwise
    inconsistency of the predicates is semantic and solver-checked by
    callers, not here.
    """

    predicates: Tuple[Formula, ...]
    dimension: int
    edges: Tuple[Tuple[int, Transformer, int], ...]

    def __init__(self, predicates: Sequence[Formula], dimension: int,
                 edges: Sequence[Tuple[int, Transformer, int]]):
        predicates = tuple(predicates)
        # Index validation, deduplication and ordering all come from the
        # underlying machine representation.
        machine = QVasrs(dimension, tuple(range(len(predicates))), edges)
        object.__setattr__(self, 'predicates', predicates)
        object.__setattr__(self, 'dimension', dimension)
        object.__setattr__(self, 'edges', machine.edges)

    def as_qvasrs(self) -> QVasrs:
        return QVasrs(self.dimension, tuple(range(len(self.predicates))),
                      self.edges)

    @property
    def transformers(self) -> frozenset:
        return frozenset(t for _, t, _ in self.edges)


@dataclass(frozen=True)
class VasrsAbstraction:
    """A simulation matrix S together with a predicate machine.

    Same reading as the stateless abstraction: S maps the concrete
    vocabulary into the machine's dimensions, and every concrete step
    starting in predicate p and ending in q is simulated by some p -> q
    edge.
    """

    sim: RationalMatrix
    machine: PredicateVasrs
    vocabulary: Tuple[Var, ...]

    def __init__(self, sim: RationalMatrix, machine: PredicateVasrs,
                 vocabulary: Sequence[Var]):
        vocabulary = tuple(vocabulary)
        if sim.rows != machine.dimension:
            raise ValueError("simulation rows != machine dimension")
        if sim.cols != len(vocabulary):
            raise ValueError("simulation cols != vocabulary size")
        object.__setattr__(self, 'sim', sim)
        object.__setattr__(self, 'machine', machine)
        object.__setattr__(self, 'vocabulary', vocabulary)

    @property
    def dimension(self) -> int:
        return self.machine.dimension


def machine_is_normal(a: VasrsAbstraction) -> bool:
    """Row independence of S per coherence class of the edge transformers."""
    union = QVasr(a.machine.dimension, a.machine.transformers)
    return is_normal(VasrAbstraction(a.sim, union, a.vocabulary))


# ---------------------------------------------------------------------------
# Abstraction with a fixed set of control states


def abstract_vasrs(h: SolverHandle, f: TransitionFormula,
                   predicates: Sequence[Formula]) -> VasrsAbstraction:
    """Best abstraction of f whose control states are the given predicates.

    Each predicate pair (p, q) contributes the best stateless abstraction
    of the steps from p into q; the overall simulation is the least upper
    bound of all of them, and the pair's transformers are carried onto the
    p -> q edge through the simulation witnessed by the bound.  Pairs with
    no satisfiable step contribute nothing.
    """
    predicates = tuple(predicates)
    vocabulary = f.vocabulary
    to_primed = {v.name: prime_var(v) for v in vocabulary}
    current = bottom_abstraction(vocabulary)
    sims: Dict[Tuple[int, int], RationalMatrix] = {}
    systems: Dict[Tuple[int, int], QVasr] = {}
    for (i, p), (j, q) in itertools.product(enumerate(predicates), repeat=2):
        pair = TransitionFormula(
            mk_and([p, f.formula, substitute(q, to_primed)]), vocabulary)
        a = abstract_vasr(h, pair)
        if not a.vasr.transformers:
            continue
        if not current.vasr.transformers:
            # Bound with the empty abstraction is the operand itself.
            current = a
            t_new = RationalMatrix.identity(a.dimension)
        else:
            current, t_old, t_new = lub(current, a)
            sims = {key: t_old * t for key, t in sims.items()}
        sims[(i, j)] = t_new
        systems[(i, j)] = a.vasr
    edges: List[Tuple[int, Transformer, int]] = []
    for (i, j), t in sorted(sims.items()):
        for tr in image(systems[(i, j)], t).sorted_transformers():
            edges.append((i, tr, j))
    machine = PredicateVasrs(predicates, current.dimension, edges)
    return VasrsAbstraction(current.sim, machine, vocabulary)


# ---------------------------------------------------------------------------
# Control-state inference


def _conjuncts(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        out: List[Formula] = []
        for g in f.args:
            out.extend(_conjuncts(g))
        return out
    return [f]


def _close_region(cube: Formula, vocabulary: Sequence[Var]) -> Formula:
    """Topological closure of a cube, with helper symbols bound again.

    Strict inequalities relax to non-strict; equalities stay, which keeps
    divisibility constraints (an equality on a quantified multiplier)
    exact.  Any symbol outside the vocabulary is a witness introduced by
    quantifier elimination on the source formula, so it goes back under a
    quantifier here.
    """
    vocab_names = {v.name for v in vocabulary}
    extra: Dict[str, Sort] = {}
    relaxed: List[Formula] = []
    for atom in _conjuncts(cube):
        for name, sort in free_symbols(atom).items():
            if name not in vocab_names:
                extra[name] = sort
        if isinstance(atom, Lt):
            relaxed.append(mk_le(atom.lhs, atom.rhs))
        else:
            relaxed.append(atom)
    bound = [Var(name, sort) for name, sort in sorted(extra.items())]
    return mk_exists(bound, mk_and(relaxed))


def control_states(h: SolverHandle, f: TransitionFormula,
                   max_predicates: int = DEFAULT_MAX_PREDICATES,
                   max_regions: int = DEFAULT_MAX_REGIONS) -> List[Formula]:
    """Connected closed regions of f's projection onto the pre-state.

    Enumerates the pre-state cubes of f model by model, closes each one
    topologically, then merges overlapping regions until the result is
    pairwise inconsistent.  An unsatisfiable f yields no regions.  Blowup
    in either phase degrades to the single region `true`, trading the
    control structure for a result of manageable size.
    """
    fs = skolemize(f)
    primed_names = {primed(v.name) for v in fs.vocabulary}
    declared = dict(free_symbols(fs.formula))
    for v in fs.vocabulary + fs.primed_vocabulary:
        declared.setdefault(v.name, v.sort)
    regions: List[Formula] = []
    with h.frame():
        for name, sort in declared.items():
            h.declare(name, sort)
        h.assert_formula(fs.formula)
        for _ in range(max_regions):
            if not h.check():
                break
            m = h.get_model(declared)
            cube = select_cube(fs.formula, m)
            kept = [atom for atom in _conjuncts(cube)
                    if not (set(free_symbols(atom)) & primed_names)]
            pre_cube = mk_and(kept)
            regions.append(_close_region(pre_cube, fs.vocabulary))
            # Blocking the pre-state part alone also rules out every other
            # post-state this cube allows, which is exactly what projecting
            # onto the pre-state asks for.
            h.assert_formula(negate(pre_cube))
        else:
            logger.warning(
                "projection of the transition formula exceeded %d cubes; "
                "falling back to a single control state", max_regions)
            return [TRUE]

    while True:
        overlap: Optional[Tuple[int, int]] = None
        for a in range(len(regions)):
            for b in range(a + 1, len(regions)):
                if is_sat(h, mk_and([regions[a], regions[b]])) is not None:
                    overlap = (a, b)
                    break
            if overlap:
                break
        if overlap is None:
            break
        a, b = overlap
        merged = mk_or([regions[a], regions[b]])
        regions = [r for k, r in enumerate(regions) if k not in (a, b)]
        regions.append(merged)

    if len(regions) > max_predicates:
        logger.warning(
            "%d control states exceed the cap of %d; falling back to a "
            "single control state", len(regions), max_predicates)
        return [TRUE]
    return regions


# ---------------------------------------------------------------------------
# Transitive closure


@dataclass(frozen=True)
class IterationArtifacts:
    """Everything produced on the way to a transitive-closure formula.

    The reachability relation is stated over the abstract vocabulary
    (the y variables below); the closure is back over the concrete one.
    """

    method: str
    predicates: Tuple[Formula, ...]
    abstraction: Union[VasrAbstraction, VasrsAbstraction]
    abstract_vocabulary: Tuple[Var, ...]
    reach: ReachFormula
    closure: TransitionFormula


def _abstract_vocabulary(dimension: int) -> Tuple[Var, ...]:
    return tuple(Var('y!%d' % k) for k in range(dimension))


def _inverse_image(sim: RationalMatrix, vocabulary: Sequence[Var],
                   ys: Sequence[Var]) -> Dict[str, Term]:
    xs = list(vocabulary)
    xps = [prime_var(v) for v in vocabulary]
    mapping: Dict[str, Term] = {}
    for k, y in enumerate(ys):
        row = list(sim.row(k).entries)
        mapping[y.name] = linear_term(row, xs)
        mapping[primed(y.name)] = linear_term(row, xps)
    return mapping


def _iterate_vasr(h: SolverHandle, f: TransitionFormula) -> IterationArtifacts:
    a = abstract_vasr(h, f)
    ys = _abstract_vocabulary(a.dimension)
    rf = reach_vasr(a.vasr, ys)
    closed = mk_exists(rf.selector_vars(), rf.formula)
    closure = TransitionFormula(
        substitute(closed, _inverse_image(a.sim, f.vocabulary, ys)),
        f.vocabulary)
    return IterationArtifacts('vasr', (), a, ys, rf, closure)


def _iterate_vasrs(h: SolverHandle, f: TransitionFormula,
                   precise: bool) -> IterationArtifacts:
    method = 'vasrs-prec' if precise else 'vasrs'
    vocabulary = f.vocabulary
    predicates = tuple(control_states(h, f))
    if not predicates:
        n = len(vocabulary)
        a = VasrsAbstraction(RationalMatrix.identity(n),
                             PredicateVasrs((), n, ()), vocabulary)
        ys = _abstract_vocabulary(n)
        return IterationArtifacts(method, (), a, ys,
                                  reach_vasrs(a.machine.as_qvasrs(), ys),
                                  identity_tf(vocabulary))
    to_primed = {v.name: prime_var(v) for v in vocabulary}
    # Restricting to steps that land in some predicate makes the machine an
    # over-approximation even when f has states with no outgoing step; the
    # final composition puts the lost last steps back.
    landing = mk_or([substitute(p, to_primed) for p in predicates])
    g = TransitionFormula(mk_and([f.formula, landing]), vocabulary)
    a = abstract_vasrs(h, g, predicates)
    ys = _abstract_vocabulary(a.dimension)
    rf = reach_vasrs(a.machine.as_qvasrs(), ys)
    body = rf.formula
    if precise:
        anchors = []
        for (i, p), (j, q) in itertools.product(
                enumerate(predicates), repeat=2):
            anchors.append(mk_and([
                Eq(rf.begin_var(i), Const(1)),
                Eq(rf.end_var(j), Const(1)),
                p,
                substitute(q, to_primed)]))
        body = mk_and([body, mk_or(anchors)])
    closed = mk_exists(rf.selector_vars(), body)
    reach_tf = TransitionFormula(
        substitute(closed, _inverse_image(a.sim, vocabulary, ys)), vocabulary)
    last = TransitionFormula(
        mk_or([identity_tf(vocabulary).formula, f.formula]), vocabulary)
    closure = compose(h, reach_tf, last)
    if precise:
        # Anchoring begin/end in the predicates loses the zero-step runs
        # from states with no outgoing step; restore reflexivity.
        closure = TransitionFormula(
            mk_or([closure.formula, identity_tf(vocabulary).formula]),
            vocabulary)
    return IterationArtifacts(method, predicates, a, ys, rf, closure)


def iterate(h: SolverHandle, f: TransitionFormula,
            method: str = 'vasrs') -> IterationArtifacts:
    if method == 'vasr':
        return _iterate_vasr(h, f)
    if method == 'vasrs':
        return _iterate_vasrs(h, f, precise=False)
    if method == 'vasrs-prec':
        return _iterate_vasrs(h, f, precise=True)
    raise ValueError("unknown method %r" % method)


def iter_vasr(h: SolverHandle, f: TransitionFormula) -> TransitionFormula:
    """Transitive-closure over-approximation through a stateless system."""
    return _iterate_vasr(h, f).closure


def iter_vasrs(h: SolverHandle, f: TransitionFormula) -> TransitionFormula:
    """Transitive-closure over-approximation through a predicate machine."""
    return _iterate_vasrs(h, f, precise=False).closure


def iter_vasrs_precise(h: SolverHandle,
                       f: TransitionFormula) -> TransitionFormula:
    """As iter_vasrs, but the run's end states keep their predicates.

    The begin/end indicators of the reachability relation are tied to the
    corresponding predicates over the concrete pre/post state, so facts
    like "every run starts in the even class" survive into the closure.
    """
    return _iterate_vasrs(h, f, precise=True).closure


# ---------------------------------------------------------------------------
# Debug output


def format_vasrs_abstraction(a: VasrsAbstraction) -> str:
    from .logic import formula_to_smt

    lines = ["simulation (%d x %d) over (%s):"
             % (a.sim.rows, a.sim.cols,
                ", ".join(v.name for v in a.vocabulary))]
    text = str(a.sim)
    lines.extend("  " + row for row in text.splitlines())
    lines.append("states:")
    for k, p in enumerate(a.machine.predicates):
        lines.append("  %d: %s" % (k, formula_to_smt(p)))
    if not a.machine.predicates:
        lines.append("  (none)")
    lines.append("edges:")
    for i, tr, j in a.machine.edges:
        lines.append("  %d -> %d reset=%s add=(%s)"
                     % (i, j, list(tr.reset),
                        ", ".join(str(x) for x in tr.add)))
    if not a.machine.edges:
        lines.append("  (none)")
    return "\n".join(lines)
