"""Negation-free linear-arithmetic syntax and the SMT solver client.

Terms are linear: constants, variables, sums, and scaling by rational
constants.  Formulas are strict inequalities and equalities closed under
conjunction, disjunction, and existential quantification (rational or
integer sort).  Negation does not exist in the grammar; the `negate`
operation rewrites into it.

Because every quantifier occurs positively, formulas are Skolemized before
being sent to the solver, so every solver query is quantifier-free.
"""

from __future__ import annotations

import logging
import os
import re
import select
import shlex
import subprocess
import time
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import (Dict, Iterable, List, Mapping, Optional, Sequence, Set,
                    Tuple, Union)

from .linalg import QQ, RationalMatrix, RationalVector, Scalar, nullspace, rref

logger = logging.getLogger(__name__)

PRIME = "'"


def _qq(x: Scalar) -> QQ:
    return x if isinstance(x, Fraction) else Fraction(x)


class Sort(Enum):
    RATIONAL = 'Real'
    INTEGER = 'Int'


# ---------------------------------------------------------------------------
# Terms


class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Term):
    value: QQ

    def __init__(self, value: Scalar):
        object.__setattr__(self, 'value', _qq(value))


@dataclass(frozen=True)
class Var(Term):
    name: str
    sort: Sort = Sort.RATIONAL


@dataclass(frozen=True)
class Add(Term):
    args: Tuple[Term, ...]


@dataclass(frozen=True)
class Mul(Term):
    """Scaling of a term by a rational constant."""

    coeff: QQ
    arg: Term

    def __init__(self, coeff: Scalar, arg: Term):
        object.__setattr__(self, 'coeff', _qq(coeff))
        object.__setattr__(self, 'arg', arg)


def mk_add(args: Iterable[Term]) -> Term:
    """Sum, flattening nested sums and folding constants."""
    flat: List[Term] = []
    const = QQ(0)
    for a in args:
        if isinstance(a, Add):
            flat.extend(a.args)
        elif isinstance(a, Const):
            const += a.value
        else:
            flat.append(a)
    if const != 0 or not flat:
        flat.append(Const(const))
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mk_mul(coeff: Scalar, arg: Term) -> Term:
    coeff = _qq(coeff)
    if coeff == 0:
        return Const(0)
    if coeff == 1:
        return arg
    if isinstance(arg, Const):
        return Const(coeff * arg.value)
    if isinstance(arg, Mul):
        return mk_mul(coeff * arg.coeff, arg.arg)
    return Mul(coeff, arg)


def linear_term(coeffs: Sequence[Scalar], variables: Sequence[Var],
                const: Scalar = 0) -> Term:
    """Builds sum(c_i * x_i) + const with zero coefficients dropped."""
    parts = [mk_mul(c, v) for c, v in zip(coeffs, variables) if _qq(c) != 0]
    c = _qq(const)
    if c != 0 or not parts:
        parts.append(Const(c))
    return mk_add(parts)


# ---------------------------------------------------------------------------
# Formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Lt(Formula):
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class Eq(Formula):
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class And(Formula):
    args: Tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: Tuple[Formula, ...]


@dataclass(frozen=True)
class Exists(Formula):
    var: Var
    body: Formula


TRUE = And(())
FALSE = Or(())


def mk_and(args: Iterable[Formula]) -> Formula:
    flat: List[Formula] = []
    for a in args:
        if isinstance(a, And):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def mk_or(args: Iterable[Formula]) -> Formula:
    flat: List[Formula] = []
    for a in args:
        if isinstance(a, Or):
            flat.extend(a.args)
        else:
            flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def mk_le(lhs: Term, rhs: Term) -> Formula:
    """lhs <= rhs in the negation-free grammar: lhs < rhs or lhs = rhs."""
    return mk_or([Lt(lhs, rhs), Eq(lhs, rhs)])


def mk_exists(variables: Sequence[Var], body: Formula) -> Formula:
    for v in reversed(variables):
        body = Exists(v, body)
    return body


def negate(f: Formula) -> Formula:
    """Negation-free rewriting of the complement of a quantifier-free formula."""
    if isinstance(f, Lt):
        return mk_or([Lt(f.rhs, f.lhs), Eq(f.rhs, f.lhs)])
    if isinstance(f, Eq):
        return mk_or([Lt(f.lhs, f.rhs), Lt(f.rhs, f.lhs)])
    if isinstance(f, And):
        return mk_or(negate(a) for a in f.args)
    if isinstance(f, Or):
        return mk_and(negate(a) for a in f.args)
    raise ValueError("cannot negate a quantified formula")


def free_symbols(f: Union[Formula, Term]) -> Dict[str, Sort]:
    """Free symbols in first-occurrence order; raises on sort conflicts."""
    out: Dict[str, Sort] = {}

    def visit_term(t: Term, bound: Tuple[str, ...]):
        if isinstance(t, Var):
            if t.name in bound:
                return
            if out.setdefault(t.name, t.sort) != t.sort:
                raise ValueError("symbol %r used at two sorts" % t.name)
        elif isinstance(t, Add):
            for a in t.args:
                visit_term(a, bound)
        elif isinstance(t, Mul):
            visit_term(t.arg, bound)

    def visit(g: Union[Formula, Term], bound: Tuple[str, ...]):
        if isinstance(g, (Lt, Eq)):
            visit_term(g.lhs, bound)
            visit_term(g.rhs, bound)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                visit(a, bound)
        elif isinstance(g, Exists):
            visit(g.body, bound + (g.var.name,))
        elif isinstance(g, Term):
            visit_term(g, bound)
        else:
            raise TypeError(type(g))

    visit(f, ())
    return out


def _all_names(f: Union[Formula, Term]) -> Set[str]:
    """Every symbol name occurring in f, free or bound, binders included.

    Fresh-name allocation must avoid bound names too: a generated name that
    merely dodges the free symbols can still collide with a binder deeper
    in the formula and conflate two distinct variables there.
    """
    out: Set[str] = set()

    def visit(g: Union[Formula, Term]):
        if isinstance(g, Var):
            out.add(g.name)
        elif isinstance(g, (Add,)):
            for a in g.args:
                visit(a)
        elif isinstance(g, Mul):
            visit(g.arg)
        elif isinstance(g, (Lt, Eq)):
            visit(g.lhs)
            visit(g.rhs)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                visit(a)
        elif isinstance(g, Exists):
            out.add(g.var.name)
            visit(g.body)
        elif not isinstance(g, Const):
            raise TypeError(type(g))

    visit(f)
    return out


class _FreshNames:
    """Deterministic fresh-name source avoiding a fixed set of used names."""

    def __init__(self, prefix: str, used: Iterable[str]):
        self.prefix = prefix
        self.used = set(used)
        self.counter = 0

    def next(self) -> str:
        while True:
            name = "%s%d" % (self.prefix, self.counter)
            self.counter += 1
            if name not in self.used:
                self.used.add(name)
                return name


def substitute(f: Formula, mapping: Mapping[str, Term]) -> Formula:
    """Capture-avoiding substitution of terms for free variables."""
    if not mapping:
        return f
    replacement_frees = set()
    for t in mapping.values():
        replacement_frees.update(free_symbols(t))

    fresh = _FreshNames("v!", set(mapping) | replacement_frees | _all_names(f))

    def sub_term(t: Term, mapping: Mapping[str, Term]) -> Term:
        if isinstance(t, Var):
            return mapping.get(t.name, t)
        if isinstance(t, Add):
            return mk_add(sub_term(a, mapping) for a in t.args)
        if isinstance(t, Mul):
            return mk_mul(t.coeff, sub_term(t.arg, mapping))
        return t

    def sub(g: Formula, mapping: Mapping[str, Term]) -> Formula:
        if isinstance(g, Lt):
            return Lt(sub_term(g.lhs, mapping), sub_term(g.rhs, mapping))
        if isinstance(g, Eq):
            return Eq(sub_term(g.lhs, mapping), sub_term(g.rhs, mapping))
        if isinstance(g, And):
            return mk_and(sub(a, mapping) for a in g.args)
        if isinstance(g, Or):
            return mk_or(sub(a, mapping) for a in g.args)
        if isinstance(g, Exists):
            inner = {k: v for k, v in mapping.items() if k != g.var.name}
            if not inner:
                return Exists(g.var, g.body)
            var = g.var
            body = g.body
            if any(var.name in free_symbols(t) for t in inner.values()):
                renamed = Var(fresh.next(), var.sort)
                body = sub(body, {var.name: renamed})
                var = renamed
            return Exists(var, sub(body, inner))
        raise TypeError(type(g))

    return sub(f, dict(mapping))


def skolemize_formula(f: Formula, used: Optional[Iterable[str]] = None) -> Formula:
    """Replaces every existential with a fresh free constant of the same sort.

    All quantifiers in this grammar are positive, so the result is
    equisatisfiable and every model of it restricts to a model of f.  One
    environment-passing walk: constants are drawn against every name in f,
    bound ones included, so they can never collide with a binder that has
    not been reached yet, and a shadowing binder simply overrides its
    enclosing entry.
    """
    fresh = _FreshNames("sk!", set(used or ()) | _all_names(f))

    def walk_term(t: Term, env: Mapping[str, Var]) -> Term:
        if isinstance(t, Var):
            return env.get(t.name, t)
        if isinstance(t, Add):
            return mk_add(walk_term(a, env) for a in t.args)
        if isinstance(t, Mul):
            return mk_mul(t.coeff, walk_term(t.arg, env))
        return t

    def walk(g: Formula, env: Mapping[str, Var]) -> Formula:
        if isinstance(g, Lt):
            return Lt(walk_term(g.lhs, env), walk_term(g.rhs, env))
        if isinstance(g, Eq):
            return Eq(walk_term(g.lhs, env), walk_term(g.rhs, env))
        if isinstance(g, And):
            return mk_and(walk(a, env) for a in g.args)
        if isinstance(g, Or):
            return mk_or(walk(a, env) for a in g.args)
        if isinstance(g, Exists):
            const = Var(fresh.next(), g.var.sort)
            return walk(g.body, {**env, g.var.name: const})
        raise TypeError(type(g))

    return walk(f, {})


# ---------------------------------------------------------------------------
# Transition formulas


def primed(name: str) -> str:
    return name + PRIME


def prime_var(v: Var) -> Var:
    return Var(primed(v.name), v.sort)


@dataclass(frozen=True)
class TransitionFormula:
    """A formula over a pre-state vocabulary x and its primed post-state x'.

    The vocabulary fixes both variable order (shared with every matrix whose
    columns index it) and variable sorts.  Free symbols beyond x and x' are
    Skolem constants.
    """

    formula: Formula
    vocabulary: Tuple[Var, ...]

    def __init__(self, formula: Formula, vocabulary: Sequence[Var]):
        object.__setattr__(self, 'formula', formula)
        object.__setattr__(self, 'vocabulary', tuple(vocabulary))

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)

    @property
    def primed_vocabulary(self) -> Tuple[Var, ...]:
        return tuple(prime_var(v) for v in self.vocabulary)


def identity_tf(vocabulary: Sequence[Var]) -> TransitionFormula:
    """x' = x on every vocabulary variable."""
    eqs = [Eq(prime_var(v), v) for v in vocabulary]
    return TransitionFormula(mk_and(eqs), vocabulary)


def skolemize(tf: TransitionFormula) -> TransitionFormula:
    return TransitionFormula(skolemize_formula(tf.formula), tf.vocabulary)


def compose(h: Optional['SolverHandle'], f: TransitionFormula,
            g: TransitionFormula) -> TransitionFormula:
    """Relational composition of two transition formulas.

    Midpoint symbols are fresh, sorted per vocabulary variable, and
    existentially bound.  The handle argument is unused (composition is
    syntactic) and accepted for interface uniformity.
    """
    if f.vocabulary != g.vocabulary:
        raise ValueError("vocabulary mismatch")
    used = set(free_symbols(f.formula)) | set(free_symbols(g.formula))
    fresh = _FreshNames("mid!", used)
    mids = [Var(fresh.next(), v.sort) for v in f.vocabulary]
    f_sub = substitute(
        f.formula, {primed(v.name): m for v, m in zip(f.vocabulary, mids)})
    g_sub = substitute(
        g.formula, {v.name: m for v, m in zip(g.vocabulary, mids)})
    return TransitionFormula(
        mk_exists(mids, mk_and([f_sub, g_sub])), f.vocabulary)


# ---------------------------------------------------------------------------
# Models and evaluation


@dataclass(frozen=True)
class Model:
    """Assignment of rational values to symbols; unmapped symbols are 0."""

    values: Tuple[Tuple[str, QQ], ...]

    def __init__(self, values: Mapping[str, Scalar]):
        items = tuple(sorted((k, _qq(v)) for k, v in values.items()))
        object.__setattr__(self, 'values', items)
        object.__setattr__(self, '_lookup', dict(items))

    def value(self, name: str) -> QQ:
        return self._lookup.get(name, QQ(0))

    def as_dict(self) -> Dict[str, QQ]:
        return dict(self.values)


def eval_term(t: Term, m: Model) -> QQ:
    if isinstance(t, Const):
        return t.value
    if isinstance(t, Var):
        return m.value(t.name)
    if isinstance(t, Add):
        return sum((eval_term(a, m) for a in t.args), QQ(0))
    if isinstance(t, Mul):
        return t.coeff * eval_term(t.arg, m)
    raise TypeError(type(t))


def eval_formula(f: Formula, m: Model) -> bool:
    if isinstance(f, Lt):
        return eval_term(f.lhs, m) < eval_term(f.rhs, m)
    if isinstance(f, Eq):
        return eval_term(f.lhs, m) == eval_term(f.rhs, m)
    if isinstance(f, And):
        return all(eval_formula(a, m) for a in f.args)
    if isinstance(f, Or):
        return any(eval_formula(a, m) for a in f.args)
    raise ValueError("cannot evaluate a quantified formula")


def select_cube(f: Formula, m: Model) -> Formula:
    """The implicant of f's DNF satisfied by m.

    Descends the tree keeping both children of a conjunction and the
    leftmost m-satisfied child of a disjunction; the result is a conjunction
    of atoms of f that m satisfies and that entails f.
    """
    atoms: List[Formula] = []

    def walk(g: Formula):
        if isinstance(g, (Lt, Eq)):
            if not eval_formula(g, m):
                raise ValueError("model does not satisfy formula")
            atoms.append(g)
        elif isinstance(g, And):
            for a in g.args:
                walk(a)
        elif isinstance(g, Or):
            for a in g.args:
                if eval_formula(a, m):
                    walk(a)
                    return
            raise ValueError("model does not satisfy formula")
        else:
            raise ValueError("select_cube requires a quantifier-free formula")

    walk(f)
    return mk_and(atoms)


# ---------------------------------------------------------------------------
# SMT-LIB2 serialization

_SIMPLE_SYMBOL = re.compile(r"[a-zA-Z~!@$%^&*_+=<>.?/-][0-9a-zA-Z~!@$%^&*_+=<>.?/-]*\Z")


def smt_symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name):
        return name
    if '|' in name or '\\' in name:
        raise ValueError("symbol %r cannot be quoted in SMT-LIB2" % name)
    return "|%s|" % name


def _smt_number(x: QQ) -> str:
    if x < 0:
        return "(- %s)" % _smt_number(-x)
    if x.denominator == 1:
        return str(x.numerator)
    return "(/ %d %d)" % (x.numerator, x.denominator)


def term_to_smt(t: Term) -> str:
    if isinstance(t, Const):
        return _smt_number(t.value)
    if isinstance(t, Var):
        return smt_symbol(t.name)
    if isinstance(t, Add):
        if not t.args:
            return "0"
        return "(+ %s)" % " ".join(term_to_smt(a) for a in t.args)
    if isinstance(t, Mul):
        return "(* %s %s)" % (_smt_number(t.coeff), term_to_smt(t.arg))
    raise TypeError(type(t))


def formula_to_smt(f: Formula) -> str:
    if isinstance(f, Lt):
        return "(< %s %s)" % (term_to_smt(f.lhs), term_to_smt(f.rhs))
    if isinstance(f, Eq):
        return "(= %s %s)" % (term_to_smt(f.lhs), term_to_smt(f.rhs))
    if isinstance(f, And):
        if not f.args:
            return "true"
        return "(and %s)" % " ".join(formula_to_smt(a) for a in f.args)
    if isinstance(f, Or):
        if not f.args:
            return "false"
        return "(or %s)" % " ".join(formula_to_smt(a) for a in f.args)
    if isinstance(f, Exists):
        return "(exists ((%s %s)) %s)" % (
            smt_symbol(f.var.name), f.var.sort.value, formula_to_smt(f.body))
    raise TypeError(type(f))


# S-expression reading, for model values and the CLI's --pre terms.

def tokenize_sexp(text: str) -> List[str]:
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in '()':
            tokens.append(c)
            i += 1
        elif c == ';':
            while i < len(text) and text[i] != '\n':
                i += 1
        elif c == '|':
            j = text.index('|', i + 1)
            tokens.append(text[i + 1:j])
            i = j + 1
        else:
            j = i
            while j < len(text) and not text[j].isspace() and text[j] not in '()|;':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


def parse_sexp(tokens: List[str], pos: int = 0):
    """Parses one s-expression; returns (tree, next position)."""
    if pos >= len(tokens):
        raise ValueError("unexpected end of s-expression")
    tok = tokens[pos]
    if tok == '(':
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ')':
            item, pos = parse_sexp(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise ValueError("unbalanced s-expression")
        return items, pos + 1
    if tok == ')':
        raise ValueError("unexpected )")
    return tok, pos + 1


def sexp_to_rational(sexp) -> QQ:
    """Numeric model value from solver output, e.g. (- (/ 1.0 2.0))."""
    if isinstance(sexp, str):
        return Fraction(sexp)
    if isinstance(sexp, list) and sexp:
        head = sexp[0]
        if head == '-' and len(sexp) == 2:
            return -sexp_to_rational(sexp[1])
        if head == '/' and len(sexp) == 3:
            return sexp_to_rational(sexp[1]) / sexp_to_rational(sexp[2])
        if head == 'to_real' and len(sexp) == 2:
            return sexp_to_rational(sexp[1])
    raise ValueError("unrecognized numeric value %r" % (sexp,))


# ---------------------------------------------------------------------------
# Solver client


class SolverError(Exception):
    pass


class SolverTimeout(SolverError):
    pass


def _default_command() -> List[str]:
    raw = os.environ.get('VASR_SMT_SOLVER', 'z3')
    parts = shlex.split(raw)
    if len(parts) == 1:
        # Bare binary name: assume a z3-style SMT-LIB2 pipe interface.
        return parts + ['-smt2', '-in']
    return parts


class SolverHandle:
    """One SMT-LIB2 session with an external solver process.

    Commands whose only answer is `success` are pipelined: they are written
    immediately but their acknowledgements are drained lazily, so a typical
    query costs two round trips (check-sat and get-value).  A handle is used
    by one thread at a time.
    """

    def __init__(self, command: Optional[Sequence[str]] = None,
                 timeout_ms: Optional[int] = None,
                 seed: Optional[int] = None):
        self.command = list(command) if command else _default_command()
        self.timeout_ms = timeout_ms
        if seed is None and os.environ.get('VASR_SEED'):
            seed = int(os.environ['VASR_SEED'])
        self.seed = seed
        self._pending: List[Tuple[str, bool]] = []
        self._buf = ''
        self._dead = False
        try:
            self.process = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, universal_newlines=True)
        except OSError as e:
            raise SolverError("cannot start solver %r: %s" % (self.command, e))
        self._configure()

    def _configure(self):
        self._command('(set-option :print-success true)')
        self._command('(set-option :produce-models true)')
        # Errors for the remaining options are tolerated (solver-specific).
        self._command('(set-logic QF_LIRA)', tolerate_error=True)
        if self.seed is not None:
            self._command('(set-option :smt.random_seed %d)' % self.seed,
                          tolerate_error=True)
            self._command('(set-option :sat.random_seed %d)' % self.seed,
                          tolerate_error=True)
        if self.timeout_ms is not None:
            self._command('(set-option :timeout %d)' % self.timeout_ms,
                          tolerate_error=True)

    # -- low-level protocol

    def _send(self, text: str):
        if self._dead:
            raise SolverError("solver process is not running")
        logger.debug("smt> %s", text)
        try:
            self.process.stdin.write(text + '\n')
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            self._dead = True
            raise SolverError("solver process died: %s" % e)

    def _read_sexp(self, deadline: Optional[float]) -> str:
        """One complete response: a line, extended until parens balance."""
        text = ''
        while True:
            nl = self._buf.find('\n')
            while nl < 0:
                if deadline is not None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0:
                        self.kill()
                        raise SolverTimeout(
                            "no solver response within %d ms" % self.timeout_ms)
                    ready, _, _ = select.select(
                        [self.process.stdout], [], [], remaining)
                    if not ready:
                        continue
                chunk = os.read(self.process.stdout.fileno(), 65536).decode()
                if not chunk:
                    self._dead = True
                    raise SolverError("solver process closed its output")
                self._buf += chunk
                nl = self._buf.find('\n')
            line, self._buf = self._buf[:nl], self._buf[nl + 1:]
            text += line
            if text.count('(') == text.count(')') and text.strip():
                logger.debug("smt< %s", text)
                return text.strip()
            text += '\n'

    def _drain(self, deadline: Optional[float] = None):
        while self._pending:
            cmd, tolerate = self._pending.pop(0)
            resp = self._read_sexp(deadline)
            if resp == 'success':
                continue
            if resp.startswith('(error') and tolerate:
                logger.debug("ignored solver error for %s: %s", cmd, resp)
                continue
            raise SolverError("solver rejected %r: %s" % (cmd, resp))

    def _command(self, text: str, tolerate_error: bool = False):
        """A command acknowledged by `success`; the reply is drained lazily."""
        self._send(text)
        self._pending.append((text, tolerate_error))

    def _query(self, text: str) -> str:
        """A command with a real answer; drains pending acknowledgements."""
        deadline = None
        if self.timeout_ms is not None:
            deadline = time.monotonic() + self.timeout_ms / 1000.0
        self._send(text)
        self._drain(deadline)
        return self._read_sexp(deadline)

    # -- session operations

    def declare(self, name: str, sort: Sort):
        self._command('(declare-const %s %s)' % (smt_symbol(name), sort.value))

    def assert_formula(self, f: Formula):
        self._command('(assert %s)' % formula_to_smt(f))

    def assert_text(self, text: str):
        self._command('(assert %s)' % text)

    def push(self):
        self._command('(push 1)')

    def pop(self):
        self._command('(pop 1)')

    def check(self, tactic: Optional[str] = None) -> bool:
        """True for sat, False for unsat; anything else is an error.

        A tactic (an SMT-LIB tactic s-expression, e.g. "(then qe smt)")
        switches to check-sat-using; quantified comparisons need qe, the
        quantifier-free pipeline never does.
        """
        if tactic is None:
            resp = self._query('(check-sat)')
        else:
            resp = self._query('(check-sat-using %s)' % tactic)
        if resp == 'sat':
            return True
        if resp == 'unsat':
            return False
        if resp == 'unknown':
            raise SolverError("solver returned unknown")
        raise SolverError("unexpected check-sat response: %s" % resp)

    def get_model(self, symbols: Mapping[str, Sort]) -> Model:
        names = list(symbols)
        if not names:
            return Model({})
        resp = self._query(
            '(get-value (%s))' % " ".join(smt_symbol(n) for n in names))
        if resp.startswith('(error'):
            raise SolverError("get-value failed: %s" % resp)
        sexp, _ = parse_sexp(tokenize_sexp(resp))
        values: Dict[str, QQ] = {}
        for entry in sexp:
            if not (isinstance(entry, list) and len(entry) == 2):
                raise SolverError("malformed model entry %r" % (entry,))
            sym, val = entry
            values[sym] = sexp_to_rational(val)
        return Model(values)

    def frame(self):
        return _SolverFrame(self)

    def kill(self):
        self._dead = True
        if self.process.poll() is None:
            self.process.kill()
            self.process.wait()

    def close(self):
        if not self._dead and self.process.poll() is None:
            try:
                self._send('(exit)')
                self.process.wait(timeout=5)
            except (SolverError, subprocess.TimeoutExpired):
                self.kill()
        self._dead = True

    def __enter__(self) -> 'SolverHandle':
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()
        return False


class _SolverFrame:
    def __init__(self, handle: SolverHandle):
        self.handle = handle

    def __enter__(self):
        self.handle.push()
        return self.handle

    def __exit__(self, exc_type, exc_val, exc_tb):
        if not self.handle._dead:
            self.handle.pop()
        return False


# ---------------------------------------------------------------------------
# Solver-backed operations


def declare_and_assert(h: SolverHandle, f: Formula) -> Dict[str, Sort]:
    """Skolemizes f, declares its free symbols, asserts it; returns symbols."""
    fs = skolemize_formula(f)
    syms = free_symbols(fs)
    for name, sort in syms.items():
        h.declare(name, sort)
    h.assert_formula(fs)
    return syms


def is_sat(h: SolverHandle, f: Formula) -> Optional[Model]:
    """A model of f, or None when certainly unsatisfiable.

    Timeouts and unknown verdicts raise SolverError; they are never
    reported as unsat.
    """
    with h.frame():
        syms = declare_and_assert(h, f)
        if not h.check():
            return None
        return h.get_model(syms)


def entails(h: SolverHandle, f: Formula, g: Formula) -> bool:
    """Validity of f => g, via unsatisfiability of f and the negation of g."""
    return is_sat(h, mk_and([f, negate(g)])) is None


def equivalent(h: SolverHandle, f: Formula, g: Formula) -> bool:
    return entails(h, f, g) and entails(h, g, f)


# ---------------------------------------------------------------------------
# Affine equalities (affine hull of a conjunctive formula)


@dataclass(frozen=True)
class EqualitySpace:
    """Basis of the entailed affine equalities of a formula over (x, x').

    Each row (c, c', b), with n leading x-coefficients, n primed
    coefficients and a trailing constant, encodes c.x + c'.x' = b.  Rows are
    kept in reduced row echelon form.
    """

    basis: RationalMatrix

    @property
    def dimension(self) -> int:
        return (self.basis.cols - 1) // 2

    def row_formula(self, i: int, vocabulary: Sequence[Var]) -> Formula:
        n = self.dimension
        row = self.basis.row(i)
        all_vars = [v for v in vocabulary] + [prime_var(v) for v in vocabulary]
        lhs = linear_term(list(row.entries[:2 * n]), all_vars)
        return Eq(lhs, Const(row[2 * n]))

    def formulas(self, vocabulary: Sequence[Var]) -> List[Formula]:
        return [self.row_formula(i, vocabulary) for i in range(self.basis.rows)]


def _hull_equalities(points: List[RationalVector]) -> RationalMatrix:
    """Equality basis (c | b) of the affine hull of the given points."""
    p0 = points[0]
    dim = len(p0)
    if len(points) == 1:
        rows = []
        for i in range(dim):
            row = [QQ(0)] * (dim + 1)
            row[i] = QQ(1)
            row[dim] = p0[i]
            rows.append(row)
        return RationalMatrix.from_rows(rows, cols=dim + 1)
    diffs = RationalMatrix.from_rows(
        [list((p - p0).entries) for p in points[1:]], cols=dim)
    normals = nullspace(diffs)
    rows = []
    for i in range(normals.rows):
        c = normals.row(i)
        rows.append(list(c.entries) + [c.dot(p0)])
    return RationalMatrix.from_rows(rows, cols=dim + 1)


def affine_equalities(h: SolverHandle, c: Formula,
                      vocabulary: Sequence[Var]) -> EqualitySpace:
    """All equalities over (x, x') entailed by c, by sampling the affine hull.

    Maintains the hull of the points sampled so far and asks the solver for
    a point of c violating one of its equalities; when none exists the hull
    is exactly c's.  Needs at most 2n+1 strict hull growths, hence at most
    2n+2 solver queries.
    """
    vocabulary = tuple(vocabulary)
    n = len(vocabulary)
    all_vars = [v for v in vocabulary] + [prime_var(v) for v in vocabulary]

    def model_point(m: Model) -> RationalVector:
        return RationalVector([m.value(v.name) for v in all_vars])

    with h.frame():
        syms = declare_and_assert(h, c)
        # Vocabulary symbols may be absent from c; declare the missing ones
        # so get-value can ask for them (they are unconstrained).
        for v in all_vars:
            if v.name not in syms:
                h.declare(v.name, v.sort)
                syms[v.name] = v.sort
        if not h.check():
            raise ValueError("affine_equalities requires a satisfiable formula")
        points = [model_point(h.get_model(syms))]
        for _ in range(2 * n + 2):
            hull = _hull_equalities(points)
            if hull.rows == 0:
                break
            space = EqualitySpace(hull)
            eqs = [space.row_formula(i, vocabulary) for i in range(hull.rows)]
            violation = mk_or(negate(e) for e in eqs)
            with h.frame():
                h.assert_formula(violation)
                if not h.check():
                    break
                points.append(model_point(h.get_model(syms)))
        else:
            raise SolverError("affine hull sampling failed to converge")
        final = _hull_equalities(points)
        return EqualitySpace(rref(final)[0])
