"""Rational vector addition systems with resets and their abstractions.

A system of dimension d is a finite set of transformers (r, a) with r a
0/1 reset vector and a a rational addition vector; a step multiplies the
current vector entrywise by r and adds a.  An abstraction of a transition
formula is a simulation matrix S together with such a system; its meaning
is the transition formula saying S x' is obtained from S x by one step.

Dimensions are 0-based throughout.  Coherence partitions are tuples of
tuples of dimension indices, each class sorted, classes ordered by their
minimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .linalg import QQ, RationalMatrix, RationalVector, rank, rref
from .linalg import pushout as matrix_pushout
from .logic import (
    Const,
    Eq,
    Formula,
    SolverHandle,
    TransitionFormula,
    Var,
    affine_equalities,
    declare_and_assert,
    entails,
    free_symbols,
    linear_term,
    mk_and,
    mk_or,
    negate,
    prime_var,
    select_cube,
    skolemize,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_CUBES = 200


@dataclass(frozen=True)
class Transformer:
    """One transition (r, a): new vector = r * old vector + a, entrywise."""

    reset: Tuple[int, ...]
    add: Tuple[QQ, ...]

    def __init__(self, reset: Sequence[int], add: Sequence[QQ]):
        reset = tuple(int(r) for r in reset)
        add = tuple(QQ(a) for a in add)
        if len(reset) != len(add):
            raise ValueError("reset and add lengths differ")
        if any(r not in (0, 1) for r in reset):
            raise ValueError("reset entries must be 0 or 1")
        object.__setattr__(self, 'reset', reset)
        object.__setattr__(self, 'add', add)

    @property
    def dimension(self) -> int:
        return len(self.reset)

    def apply(self, v: RationalVector) -> RationalVector:
        return RationalVector([r * x + a
                               for r, x, a in zip(self.reset, v, self.add)])


@dataclass(frozen=True)
class QVasr:
    dimension: int
    transformers: FrozenSet[Transformer]

    def __init__(self, dimension: int, transformers: Iterable[Transformer]):
        transformers = frozenset(transformers)
        for t in transformers:
            if t.dimension != dimension:
                raise ValueError("transformer dimension mismatch")
        object.__setattr__(self, 'dimension', dimension)
        object.__setattr__(self, 'transformers', transformers)

    def sorted_transformers(self) -> List[Transformer]:
        return sorted(self.transformers, key=lambda t: (t.reset, t.add))


@dataclass(frozen=True)
class VasrAbstraction:
    """A simulation matrix S and a system V overapproximating a formula.

    The concrete vocabulary indexes the columns of S, so the abstraction
    carries everything needed to spell out its own transition formula.
    """

    sim: RationalMatrix
    vasr: QVasr
    vocabulary: Tuple[Var, ...]

    def __init__(self, sim: RationalMatrix, vasr: QVasr,
                 vocabulary: Sequence[Var]):
        vocabulary = tuple(vocabulary)
        if sim.rows != vasr.dimension:
            raise ValueError("simulation rows != system dimension")
        if sim.cols != len(vocabulary):
            raise ValueError("simulation cols != vocabulary size")
        object.__setattr__(self, 'sim', sim)
        object.__setattr__(self, 'vasr', vasr)
        object.__setattr__(self, 'vocabulary', vocabulary)

    @property
    def concrete_dim(self) -> int:
        return len(self.vocabulary)

    @property
    def dimension(self) -> int:
        return self.vasr.dimension


def bottom_abstraction(vocabulary: Sequence[Var]) -> VasrAbstraction:
    """(identity, no transformers): its transition formula is false."""
    n = len(vocabulary)
    return VasrAbstraction(
        RationalMatrix.identity(n), QVasr(n, ()), vocabulary)


def top_abstraction(vocabulary: Sequence[Var]) -> VasrAbstraction:
    """The zero-dimensional abstraction: its transition formula is true."""
    n = len(vocabulary)
    return VasrAbstraction(
        RationalMatrix.zero(0, n), QVasr(0, (Transformer((), ()),)),
        vocabulary)


# ---------------------------------------------------------------------------
# Coherence


def coherence_classes(v: QVasr) -> Tuple[Tuple[int, ...], ...]:
    """Partition of the dimensions by reset behaviour.

    Dimensions i, j share a class when every transformer agrees on
    resetting i and j.  Without transformers all dimensions are one class.
    """
    if v.dimension == 0:
        return ()
    transformers = v.sorted_transformers()
    groups = {}
    for i in range(v.dimension):
        signature = tuple(t.reset[i] for t in transformers)
        groups.setdefault(signature, []).append(i)
    return tuple(sorted((tuple(g) for g in groups.values()), key=min))


def is_normal(a: VasrAbstraction) -> bool:
    """Rows of S restricted to each coherence class are independent."""
    for cls in coherence_classes(a.vasr):
        if rank(a.sim.select_rows(cls)) != len(cls):
            return False
    return True


def image(v: QVasr, t: RationalMatrix) -> QVasr:
    """The system whose transition relation is the image of v's under t.

    Each row of t must be supported inside a single coherence class of v
    and must be nonzero, so every output dimension inherits a well-defined
    reset bit.
    """
    if t.cols != v.dimension:
        raise ValueError("matrix width != system dimension")
    supports = []
    classes = coherence_classes(v)
    class_of = {}
    for cls in classes:
        for i in cls:
            class_of[i] = cls
    for i in range(t.rows):
        support = [j for j in range(t.cols) if t[i, j] != 0]
        if not support:
            raise ValueError("zero row %d has no reset behaviour" % i)
        if any(class_of[j] is not class_of[support[0]] for j in support[1:]):
            raise ValueError("row %d mixes incoherent dimensions" % i)
        supports.append(support[0])
    out = []
    for tr in v.transformers:
        reset = tuple(tr.reset[j] for j in supports)
        add = t.mul_vector(RationalVector(tr.add))
        out.append(Transformer(reset, tuple(add.entries)))
    return QVasr(t.rows, out)


# ---------------------------------------------------------------------------
# Transition formulas of abstractions


def gamma(a: VasrAbstraction) -> TransitionFormula:
    """The transition formula of an abstraction: S x' steps from S x.

    A disjunct per transformer; no transformers yields false, and a
    zero-dimensional system with a transformer yields true.
    """
    xs = a.vocabulary
    xps = tuple(prime_var(v) for v in xs)
    disjuncts = []
    for tr in a.vasr.sorted_transformers():
        eqs = []
        for i in range(a.dimension):
            row = list(a.sim.row(i).entries)
            lhs = linear_term(row, xps)
            if tr.reset[i] == 0:
                rhs = Const(tr.add[i])
            else:
                rhs = linear_term(row, xs, tr.add[i])
            eqs.append(Eq(lhs, rhs))
        disjuncts.append(mk_and(eqs))
    return TransitionFormula(mk_or(disjuncts), xs)


def check_simulation(h: SolverHandle, f: TransitionFormula,
                     a: VasrAbstraction) -> bool:
    """Does f entail the abstraction's transition formula?"""
    if f.vocabulary != a.vocabulary:
        raise ValueError("vocabulary mismatch")
    return entails(h, f.formula, gamma(a).formula)


# ---------------------------------------------------------------------------
# Abstraction of a single cube


def alpha_hat(h: SolverHandle, c: Formula,
              vocabulary: Sequence[Var]) -> VasrAbstraction:
    """Best abstraction of a satisfiable conjunctive formula.

    The entailed affine equalities of c are sliced into reset functionals
    (s.x' = a, no dependence on x) and increment functionals
    (s.x' = s.x + a); stacking the two bases gives S and the one
    transformer.  Rows (u, v, b) of the equality basis with u = 0 are the
    reset slice; rows with u = -v become visible the same way after the
    change of basis (u, v, b) -> (u + v, v, b).
    """
    vocabulary = tuple(vocabulary)
    n = len(vocabulary)
    space = affine_equalities(h, c, vocabulary)
    basis = space.basis

    def pivot_tail(m: RationalMatrix) -> List[List[QQ]]:
        reduced, pivots = rref(m)
        rows = []
        for i, p in enumerate(pivots):
            if p >= n:
                rows.append([reduced[i, j] for j in range(n, 2 * n + 1)])
        return rows

    res_rows = pivot_tail(basis)
    shifted = RationalMatrix.from_rows(
        [[basis[i, j] + basis[i, n + j] for j in range(n)]
         + [basis[i, j] for j in range(n, 2 * n + 1)]
         for i in range(basis.rows)],
        cols=2 * n + 1)
    inc_rows = pivot_tail(shifted)

    sim_rows = [r[:n] for r in res_rows] + [r[:n] for r in inc_rows]
    adds = [r[n] for r in res_rows] + [r[n] for r in inc_rows]
    resets = [0] * len(res_rows) + [1] * len(inc_rows)
    sim = RationalMatrix.from_rows(sim_rows, cols=n)
    vasr = QVasr(sim.rows, (Transformer(resets, adds),))
    return VasrAbstraction(sim, vasr, vocabulary)


# ---------------------------------------------------------------------------
# Least upper bound


def lub(a1: VasrAbstraction, a2: VasrAbstraction
        ) -> Tuple[VasrAbstraction, RationalMatrix, RationalMatrix]:
    """Least upper bound of two normal abstractions.

    For each pair of coherence classes, the pushout of the corresponding
    row blocks of S1 and S2 contributes rows; the witnessing simulations
    t1, t2 satisfy t1 S1 = S = t2 S2 exactly, and the result's system is
    the union of the images of the operands' systems.
    """
    if a1.vocabulary != a2.vocabulary:
        raise ValueError("vocabulary mismatch")
    for a in (a1, a2):
        if not is_normal(a):
            raise ValueError("lub requires normal abstractions")
    n = a1.concrete_dim
    d1, d2 = a1.dimension, a2.dimension
    s_rows: List[RationalVector] = []
    t1_rows: List[List[QQ]] = []
    t2_rows: List[List[QQ]] = []
    for cls1 in coherence_classes(a1.vasr):
        p1 = a1.sim.select_rows(cls1)
        for cls2 in coherence_classes(a2.vasr):
            p2 = a2.sim.select_rows(cls2)
            u1, u2 = matrix_pushout(p1, p2)
            common = u1 * p1
            for k in range(u1.rows):
                s_rows.append(common.row(k))
                row1 = [QQ(0)] * d1
                for pos, j in enumerate(cls1):
                    row1[j] = u1[k, pos]
                t1_rows.append(row1)
                row2 = [QQ(0)] * d2
                for pos, j in enumerate(cls2):
                    row2[j] = u2[k, pos]
                t2_rows.append(row2)
    sim = RationalMatrix.from_rows([list(r.entries) for r in s_rows], cols=n)
    t1 = RationalMatrix.from_rows(t1_rows, cols=d1)
    t2 = RationalMatrix.from_rows(t2_rows, cols=d2)
    vasr = QVasr(sim.rows,
                 image(a1.vasr, t1).transformers
                 | image(a2.vasr, t2).transformers)
    return VasrAbstraction(sim, vasr, a1.vocabulary), t1, t2


# ---------------------------------------------------------------------------
# Abstraction of an arbitrary transition formula


def abstract_vasr(h: SolverHandle, f: TransitionFormula,
                  max_cubes: int = DEFAULT_MAX_CUBES) -> VasrAbstraction:
    """Joins the cube abstractions of f until every model is covered.

    Repeatedly finds a model of f outside the current abstraction's
    transition formula, selects its cube, and joins the cube's best
    abstraction into the running least upper bound.  Each iteration covers
    at least one new cube of f's DNF, so the loop terminates; the cap
    guards against a divergence bug, not a legitimate run.
    """
    fs = skolemize(f)
    vocabulary = fs.vocabulary
    current = bottom_abstraction(vocabulary)
    declared = dict(free_symbols(fs.formula))
    for v in list(vocabulary) + [prime_var(x) for x in vocabulary]:
        declared.setdefault(v.name, v.sort)
    for iteration in range(max_cubes):
        with h.frame():
            for name, sort in declared.items():
                h.declare(name, sort)
            h.assert_formula(fs.formula)
            h.assert_formula(negate(gamma(current).formula))
            if not h.check():
                return current
            m = h.get_model(declared)
        cube = select_cube(fs.formula, m)
        logger.debug("iteration %d: joining cube %s", iteration, cube)
        current = lub(current, alpha_hat(h, cube, vocabulary))[0]
    raise RuntimeError("abstraction failed to converge within %d cubes"
                       % max_cubes)


# ---------------------------------------------------------------------------
# Debug output


def format_abstraction(a: VasrAbstraction) -> str:
    lines = ["simulation (%d x %d) over (%s):"
             % (a.sim.rows, a.sim.cols,
                ", ".join(v.name for v in a.vocabulary))]
    text = str(a.sim)
    lines.extend("  " + row for row in text.splitlines())
    lines.append("transformers:")
    for tr in a.vasr.sorted_transformers():
        lines.append("  reset=%s add=(%s)"
                     % (list(tr.reset), ", ".join(str(x) for x in tr.add)))
    if not a.vasr.transformers:
        lines.append("  (none)")
    return "\n".join(lines)
