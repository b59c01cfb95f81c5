"""Exact reachability relations of systems with control states.

A machine is a finite set of control states and edges labelled with
transformers.  reach_vasrs compiles its reachability relation into a
transition formula with 0/1 begin/end indicator variables per state, one
pair of which is selected by every satisfying assignment.

The encoding enumerates "reset shapes": the set R of coherence classes
reset during the run, an ordered partition of R grouping classes by their
last reset, and for each group the edge whose occurrence is that last
reset.  Between consecutive last-reset events the run is an arbitrary path,
encoded by nonnegative edge counts with flow conservation plus the
distance-variable connectivity scheme, which is exact for Parikh images of
paths.  The size is exponential in the number of coherence classes, which
is acceptable at the dimensions produced by abstraction; a cap guards
against blow-up.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Set, Tuple

from .linalg import RationalVector
from .logic import (
    Const,
    Eq,
    Formula,
    Lt,
    Sort,
    TransitionFormula,
    Var,
    formula_to_smt,
    free_symbols,
    mk_add,
    mk_and,
    mk_exists,
    mk_le,
    mk_mul,
    mk_or,
    prime_var,
    smt_symbol,
)
from .vas import QVasr, Transformer, coherence_classes

DEFAULT_MAX_SHAPES = 5000

State = Hashable
Edge = Tuple[State, Transformer, State]


class EncodingTooLarge(Exception):
    """The reset-shape enumeration exceeded the configured cap."""


@dataclass(frozen=True)
class QVasrs:
    """A machine (Q, E): control states and transformer-labelled edges."""

    dimension: int
    states: Tuple[State, ...]
    edges: Tuple[Edge, ...]

    def __init__(self, dimension: int, states: Sequence[State],
                 edges: Iterable[Edge]):
        states = tuple(states)
        if len(set(states)) != len(states):
            raise ValueError("duplicate control states")
        index = {q: i for i, q in enumerate(states)}
        unique = set(edges)
        for src, t, dst in unique:
            if src not in index or dst not in index:
                raise ValueError("edge endpoint is not a state")
            if t.dimension != dimension:
                raise ValueError("edge transformer dimension mismatch")
        ordered = sorted(unique,
                         key=lambda e: (index[e[0]], index[e[2]],
                                        e[1].reset, e[1].add))
        object.__setattr__(self, 'dimension', dimension)
        object.__setattr__(self, 'states', states)
        object.__setattr__(self, 'edges', tuple(ordered))


@dataclass(frozen=True)
class RunTrace:
    start_state: State
    start: RationalVector
    edges: Tuple[Edge, ...]


def step(v: QVasrs, state: State, vec: RationalVector,
         edge: Edge) -> Tuple[State, RationalVector]:
    src, transformer, dst = edge
    if src != state:
        raise ValueError("edge does not start at the current state")
    return dst, transformer.apply(vec)


def enumerate_reachable(v: QVasrs, start: Tuple[State, RationalVector],
                        max_len: int) -> Set[Tuple[State, RationalVector, RunTrace]]:
    """All runs up to max_len steps, by exhaustive expansion."""
    state0, vec0 = start
    out = set()
    frontier = [(state0, vec0, ())]
    out.add((state0, vec0, RunTrace(state0, vec0, ())))
    for _ in range(max_len):
        new_frontier = []
        for state, vec, path in frontier:
            for edge in v.edges:
                if edge[0] != state:
                    continue
                nstate, nvec = step(v, state, vec, edge)
                npath = path + (edge,)
                out.add((nstate, nvec, RunTrace(state0, vec0, npath)))
                new_frontier.append((nstate, nvec, npath))
        frontier = new_frontier
    return out


# ---------------------------------------------------------------------------
# The reachability formula


def machine_classes(v: QVasrs) -> Tuple[Tuple[int, ...], ...]:
    """Coherence classes of the set of edge transformers."""
    return coherence_classes(
        QVasr(v.dimension, (t for _, t, _ in v.edges)))


def _resets(t: Transformer, classes) -> frozenset:
    """The classes a transformer resets (reset bit 0)."""
    return frozenset(c for c in classes if t.reset[c[0]] == 0)


def _ordered_partitions(items: List) -> Iterable[List[List]]:
    """Ordered partitions into nonempty blocks; deterministic order."""
    if not items:
        yield []
        return
    n = len(items)
    for mask in range(1, 1 << n):
        block = [items[i] for i in range(n) if mask >> i & 1]
        rest = [items[i] for i in range(n) if not mask >> i & 1]
        for tail in _ordered_partitions(rest):
            yield [block] + tail


@dataclass(frozen=True)
class ReachFormula:
    """Reachability as a formula over pre/post dims and state indicators.

    begin/end indicator variables are free so callers can constrain which
    states the run connects; as_transition_formula closes them (and the
    optional total step counter) existentially.
    """

    formula: Formula
    vocabulary: Tuple[Var, ...]
    begin: Tuple[Tuple[State, Var], ...]
    end: Tuple[Tuple[State, Var], ...]
    total: Optional[Var]

    def begin_var(self, q: State) -> Var:
        return dict(self.begin)[q]

    def end_var(self, q: State) -> Var:
        return dict(self.end)[q]

    def selector_vars(self) -> List[Var]:
        out = [v for _, v in self.begin] + [v for _, v in self.end]
        if self.total is not None:
            out.append(self.total)
        return out

    def as_transition_formula(self) -> TransitionFormula:
        return TransitionFormula(
            mk_exists(self.selector_vars(), self.formula), self.vocabulary)


def reach_vasrs(v: QVasrs, vocabulary: Sequence[Var],
                expose_total: bool = False,
                max_shapes: int = DEFAULT_MAX_SHAPES) -> ReachFormula:
    """Formula whose models with begin p, end q are exactly the runs p -> q.

    Exact in both directions, including zero-step runs.
    """
    vocabulary = tuple(vocabulary)
    if len(vocabulary) != v.dimension:
        raise ValueError("vocabulary size != machine dimension")
    xs = vocabulary
    xps = tuple(prime_var(x) for x in xs)
    classes = machine_classes(v)
    state_index = {q: i for i, q in enumerate(v.states)}
    begin = tuple((q, Var('begin!%d' % i, Sort.INTEGER))
                  for i, q in enumerate(v.states))
    end = tuple((q, Var('end!%d' % i, Sort.INTEGER))
                for i, q in enumerate(v.states))
    begin_v = {q: var for q, var in begin}
    end_v = {q: var for q, var in end}
    total = Var('n!total', Sort.INTEGER) if expose_total else None
    edge_resets = [_resets(t, classes) for _, t, _ in v.edges]

    def indicator(kind: str, q: State, boundary):
        """0/1 term saying the run's segment boundary sits at q.

        An event boundary is a known state (constant); the run's own ends
        (boundary None) are the begin/end indicator variables.
        """
        if boundary is None:
            return begin_v[q] if kind == 'begin' else end_v[q]
        return Const(1 if boundary == q else 0)

    disjuncts: List[Formula] = []

    zero_step = [Eq(xp, x) for x, xp in zip(xs, xps)]
    zero_step += [Eq(begin_v[q], end_v[q]) for q in v.states]
    if total is not None:
        zero_step.append(Eq(total, Const(0)))
    disjuncts.append(mk_and(zero_step))

    def shape_formula(reset_set: frozenset, blocks: List[List],
                      events: Tuple[int, ...]) -> Formula:
        k = len(blocks)
        forbidden = [frozenset(c for c in classes if c not in reset_set)]
        for j in range(k):
            forbidden.append(forbidden[-1] | frozenset(
                c for block in blocks[:j + 1] for c in block))
        # usable[s] lists edge indices that may occur inside segment s.
        usable = [[e for e in range(len(v.edges))
                   if not (edge_resets[e] & forbidden[s])]
                  for s in range(k + 1)]
        counts = {(s, e): Var('n!%d!%d' % (s, e), Sort.INTEGER)
                  for s in range(k + 1) for e in usable[s]}
        levels = {}
        for s in range(k + 1):
            incident = set()
            for e in usable[s]:
                incident.add(v.edges[e][0])
                incident.add(v.edges[e][2])
            for q in incident:
                levels[(s, q)] = Var('l!%d!%d' % (s, state_index[q]),
                                     Sort.INTEGER)

        parts: List[Formula] = []
        for var in counts.values():
            parts.append(mk_le(Const(0), var))
        for var in levels.values():
            parts.append(mk_le(Const(0), var))

        # Segment boundaries: segment s runs from the target of event s to
        # the source of event s+1; the run's own endpoints sit at the ends.
        seg_start = [None] + [v.edges[events[j]][2] for j in range(k)]
        seg_end = [v.edges[events[j]][0] for j in range(k)] + [None]

        for s in range(k + 1):
            for q in v.states:
                inflow = [counts[(s, e)] for e in usable[s]
                          if v.edges[e][2] == q]
                outflow = [counts[(s, e)] for e in usable[s]
                           if v.edges[e][0] == q]
                start_term = indicator('begin', q, seg_start[s])
                end_term = indicator('end', q, seg_end[s])
                parts.append(Eq(mk_add(outflow + [end_term]),
                                mk_add(inflow + [start_term])))

        # Connectivity: a used state carries a level; the segment's start
        # state is at level 0 and every other used state is entered by a
        # used edge from a level one lower.
        for s in range(k + 1):
            for q in v.states:
                if (s, q) not in levels:
                    continue
                level = levels[(s, q)]
                options: List[Formula] = []
                if s == 0 and seg_start[0] is None:
                    options.append(mk_and([Eq(begin_v[q], Const(1)),
                                           Eq(level, Const(0))]))
                elif seg_start[s] == q:
                    options.append(Eq(level, Const(0)))
                incident = [counts[(s, e)] for e in usable[s]
                            if q in (v.edges[e][0], v.edges[e][2])]
                options.append(Eq(mk_add(incident), Const(0)))
                for e in usable[s]:
                    src, _, dst = v.edges[e]
                    if dst != q or (s, src) not in levels:
                        continue
                    options.append(mk_and([
                        Lt(Const(0), counts[(s, e)]),
                        Eq(level, mk_add([levels[(s, src)], Const(1)]))]))
                parts.append(mk_or(options))

        # Values.  A never-reset dimension accumulates every contribution;
        # a dimension whose class was last reset by event j starts over at
        # that event's add entry.
        last_reset_event = {}
        for j, block in enumerate(blocks):
            for c in block:
                last_reset_event[c] = j
        for c in classes:
            j = last_reset_event.get(c)
            for i in c:
                contributions = []
                if j is None:
                    base = xs[i]
                    first_segment = 0
                    later_events = range(k)
                else:
                    base = Const(v.edges[events[j]][1].add[i])
                    first_segment = j + 1
                    later_events = range(j + 1, k)
                for s in range(first_segment, k + 1):
                    for e in usable[s]:
                        a = v.edges[e][1].add[i]
                        if a != 0:
                            contributions.append(mk_mul(a, counts[(s, e)]))
                event_total = sum((v.edges[events[l]][1].add[i]
                                   for l in later_events), start=0)
                parts.append(Eq(xps[i], mk_add(
                    [base] + contributions + [Const(event_total)])))

        if total is not None:
            parts.append(Eq(total, mk_add(
                list(counts.values()) + [Const(k)])))

        bound = [counts[key] for key in sorted(counts)]
        bound += [levels[(s, q)] for s, q in
                  sorted(levels, key=lambda key: (key[0],
                                                  state_index[key[1]]))]
        return mk_exists(bound, mk_and(parts))

    shape_count = 0
    class_list = list(classes)
    for r_mask in range(1 << len(class_list)):
        reset_list = [class_list[i] for i in range(len(class_list))
                      if r_mask >> i & 1]
        reset_set = frozenset(reset_list)
        for blocks in _ordered_partitions(reset_list):
            candidates = []
            earlier: frozenset = frozenset()
            for block in blocks:
                block_set = frozenset(block)
                choices = [e for e in range(len(v.edges))
                           if block_set <= edge_resets[e]
                           and not (edge_resets[e] & earlier)
                           and edge_resets[e] <= reset_set]
                candidates.append(choices)
                earlier = earlier | block_set
            for events in itertools.product(*candidates):
                shape_count += 1
                if shape_count > max_shapes:
                    raise EncodingTooLarge(
                        "more than %d reset shapes" % max_shapes)
                disjuncts.append(shape_formula(reset_set, blocks, events))

    constraints: List[Formula] = []
    for q in v.states:
        for var in (begin_v[q], end_v[q]):
            constraints.append(mk_or([Eq(var, Const(0)), Eq(var, Const(1))]))
    constraints.append(Eq(mk_add([var for _, var in begin]), Const(1)))
    constraints.append(Eq(mk_add([var for _, var in end]), Const(1)))
    constraints.append(mk_or(disjuncts))
    return ReachFormula(mk_and(constraints), vocabulary, begin, end, total)


def reach_vasr(v: QVasr, vocabulary: Sequence[Var],
               expose_total: bool = False,
               max_shapes: int = DEFAULT_MAX_SHAPES) -> ReachFormula:
    """Reachability of a stateless system via a one-state machine."""
    machine = QVasrs(v.dimension, (0,), tuple((0, t, 0)
                                              for t in v.transformers))
    return reach_vasrs(machine, vocabulary, expose_total=expose_total,
                       max_shapes=max_shapes)


def dump_smt2(rf: ReachFormula) -> str:
    """SMT-LIB2 text with declarations, selectors left free."""
    lines = []
    for name, sort in free_symbols(rf.formula).items():
        lines.append('(declare-const %s %s)' % (smt_symbol(name), sort.value))
    lines.append('(assert %s)' % formula_to_smt(rf.formula))
    return '\n'.join(lines) + '\n'
