"""A small imperative language and its transition-formula semantics.

Programs manipulate integer variables with guarded assignments, loops and
asserts.  Every statement denotes a relation between a pre-state and a
post-state over the whole program vocabulary; loops go through a
transitive-closure operator supplied by the caller, so the choice of
abstraction is a configuration knob rather than part of the semantics.
"""

import random
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .logic import (
    Const,
    Eq,
    Formula,
    Lt,
    Model,
    Sort,
    SolverError,
    SolverHandle,
    Term,
    TransitionFormula,
    Var,
    compose,
    declare_and_assert,
    eval_term,
    identity_tf,
    mk_add,
    mk_and,
    mk_exists,
    mk_le,
    mk_mul,
    mk_or,
    negate,
    parse_sexp,
    prime_var,
    substitute,
    tokenize_sexp,
    TRUE,
)
from .vasrs import IterationArtifacts, iterate

Location = Tuple[int, int]


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__("%d:%d: %s" % (line, column, message))
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Tokens

_KEYWORDS = frozenset(('if', 'else', 'while', 'assume', 'assert', 'nondet'))
_PUNCT = (':=', '&&', '||', '<=', '>=', '==', '!=',
          '<', '>', '%', '+', '-', '*', '(', ')', '{', '}', ';')


@dataclass(frozen=True)
class Token:
    kind: str  # 'int' | 'id' | 'kw' | 'punct' | 'eof'
    text: str
    line: int
    column: int
    offset: int


def tokenize(src: str) -> List[Token]:
    tokens: List[Token] = []
    line, col = 1, 1
    i = 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == '\n':
            line += 1
            col = 1
            i += 1
            continue
        if c in ' \t\r':
            i += 1
            col += 1
            continue
        if c == '#':
            while i < n and src[i] != '\n':
                i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            tokens.append(Token('int', src[i:j], line, col, i))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == '_':
            j = i
            while j < n and (src[j].isalnum() or src[j] == '_'):
                j += 1
            text = src[i:j]
            kind = 'kw' if text in _KEYWORDS else 'id'
            tokens.append(Token(kind, text, line, col, i))
            col += j - i
            i = j
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                tokens.append(Token('punct', p, line, col, i))
                col += len(p)
                i += len(p)
                break
        else:
            raise ParseError("unexpected character %r" % c, line, col)
    tokens.append(Token('eof', '', line, col, n))
    return tokens


# ---------------------------------------------------------------------------
# Conditions

_MOD_WITNESS = Var('div!k', Sort.INTEGER)


class Cond:
    __slots__ = ()


@dataclass(frozen=True)
class Cmp(Cond):
    op: str  # < <= == != >= >
    lhs: Term
    rhs: Term


@dataclass(frozen=True)
class ModEq(Cond):
    expr: Term
    modulus: int
    residue: int


@dataclass(frozen=True)
class CAnd(Cond):
    items: Tuple[Cond, ...]


@dataclass(frozen=True)
class COr(Cond):
    items: Tuple[Cond, ...]


def _residue_formula(e: Term, c: int, r: int) -> Formula:
    return mk_exists(
        [_MOD_WITNESS],
        Eq(e, mk_add([mk_mul(c, _MOD_WITNESS), Const(r)])))


def cond_formula(c: Cond) -> Formula:
    if isinstance(c, Cmp):
        table = {
            '<': lambda a, b: Lt(a, b),
            '<=': mk_le,
            '==': Eq,
            '!=': lambda a, b: mk_or([Lt(a, b), Lt(b, a)]),
            '>=': lambda a, b: mk_le(b, a),
            '>': lambda a, b: Lt(b, a),
        }
        return table[c.op](c.lhs, c.rhs)
    if isinstance(c, ModEq):
        return _residue_formula(c.expr, c.modulus, c.residue)
    if isinstance(c, CAnd):
        return mk_and([cond_formula(i) for i in c.items])
    if isinstance(c, COr):
        return mk_or([cond_formula(i) for i in c.items])
    raise TypeError(type(c))


def cond_negation(c: Cond) -> Formula:
    """Negation-free complement, so summaries stay inside the fragment.

    A failed residue test means one of the other residues holds; that keeps
    the complement positive at the cost of modulus-1 disjuncts.
    """
    if isinstance(c, Cmp):
        flip = {'<': '>=', '<=': '>', '==': '!=',
                '!=': '==', '>=': '<', '>': '<='}
        return cond_formula(Cmp(flip[c.op], c.lhs, c.rhs))
    if isinstance(c, ModEq):
        return mk_or([_residue_formula(c.expr, c.modulus, s)
                      for s in range(c.modulus) if s != c.residue])
    if isinstance(c, CAnd):
        return mk_or([cond_negation(i) for i in c.items])
    if isinstance(c, COr):
        return mk_and([cond_negation(i) for i in c.items])
    raise TypeError(type(c))


def cond_eval(c: Cond, m: Model) -> bool:
    if isinstance(c, Cmp):
        a, b = eval_term(c.lhs, m), eval_term(c.rhs, m)
        return {'<': a < b, '<=': a <= b, '==': a == b,
                '!=': a != b, '>=': a >= b, '>': a > b}[c.op]
    if isinstance(c, ModEq):
        return eval_term(c.expr, m) % c.modulus == c.residue
    if isinstance(c, CAnd):
        return all(cond_eval(i, m) for i in c.items)
    if isinstance(c, COr):
        return any(cond_eval(i, m) for i in c.items)
    raise TypeError(type(c))


# ---------------------------------------------------------------------------
# Statements

class Stmt:
    __slots__ = ()


@dataclass(frozen=True)
class Assign(Stmt):
    name: str
    expr: Term


@dataclass(frozen=True)
class AssignNondet(Stmt):
    name: str


@dataclass(frozen=True)
class Assume(Stmt):
    cond: Cond


@dataclass(frozen=True)
class AssertStmt(Stmt):
    cond: Cond
    location: Location
    text: str


@dataclass(frozen=True)
class Ite(Stmt):
    cond: Cond
    then: Tuple[Stmt, ...]
    orelse: Tuple[Stmt, ...]


@dataclass(frozen=True)
class While(Stmt):
    cond: Optional[Cond]  # None is the nondeterministic guard `*`
    body: Tuple[Stmt, ...]
    location: Location


@dataclass(frozen=True)
class Program:
    body: Tuple[Stmt, ...]
    variables: Tuple[str, ...]

    @property
    def vocabulary(self) -> Tuple[Var, ...]:
        return tuple(Var(n, Sort.INTEGER) for n in self.variables)


def program_loops(p: Program) -> List[While]:
    """All loops in source order, outer before inner."""
    out: List[While] = []

    def walk(stmts: Sequence[Stmt]):
        for s in stmts:
            if isinstance(s, While):
                out.append(s)
                walk(s.body)
            elif isinstance(s, Ite):
                walk(s.then)
                walk(s.orelse)

    walk(p.body)
    return out


def program_asserts(p: Program) -> List[AssertStmt]:
    out: List[AssertStmt] = []

    def walk(stmts: Sequence[Stmt]):
        for s in stmts:
            if isinstance(s, AssertStmt):
                out.append(s)
            elif isinstance(s, While):
                walk(s.body)
            elif isinstance(s, Ite):
                walk(s.then)
                walk(s.orelse)

    walk(p.body)
    return out


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = tokenize(src)
        self.pos = 0
        self.seen: List[str] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def fail(self, message: str) -> 'ParseError':
        t = self.peek()
        return ParseError(message, t.line, t.column)

    def expect(self, text: str) -> Token:
        t = self.peek()
        if t.text != text or t.kind == 'eof':
            what = 'end of input' if t.kind == 'eof' else repr(t.text)
            raise self.fail("expected %r, found %s" % (text, what))
        return self.next()

    def variable(self, name: str) -> Var:
        if name not in self.seen:
            self.seen.append(name)
        return Var(name, Sort.INTEGER)

    # expressions ----------------------------------------------------------

    def parse_primary(self) -> Term:
        t = self.peek()
        if t.text == '-':
            self.next()
            return mk_mul(-1, self.parse_primary())
        if t.kind == 'int':
            self.next()
            value = int(t.text)
            if self.peek().text == '*':
                self.next()
                return mk_mul(value, self.parse_primary())
            return Const(value)
        if t.kind == 'id':
            self.next()
            return self.variable(t.text)
        raise self.fail("expected an expression")

    def parse_expr(self) -> Term:
        parts = [self.parse_primary()]
        while self.peek().text in ('+', '-'):
            op = self.next().text
            rhs = self.parse_primary()
            parts.append(rhs if op == '+' else mk_mul(-1, rhs))
        return mk_add(parts)

    # conditions -----------------------------------------------------------

    def parse_atom(self) -> Cond:
        if self.peek().text == '(':
            self.next()
            inner = self.parse_cond()
            self.expect(')')
            return inner
        lhs = self.parse_expr()
        t = self.peek()
        if t.text == '%':
            self.next()
            m = self.peek()
            if m.kind != 'int':
                raise self.fail("modulus must be an integer literal")
            self.next()
            modulus = int(m.text)
            if modulus <= 0:
                raise ParseError("modulus must be positive", m.line, m.column)
            self.expect('==')
            r = self.peek()
            if r.kind != 'int':
                raise self.fail("residue must be an integer literal")
            self.next()
            return ModEq(lhs, modulus, int(r.text) % modulus)
        if t.text in ('<', '<=', '==', '!=', '>=', '>'):
            self.next()
            return Cmp(t.text, lhs, self.parse_expr())
        raise self.fail("expected a comparison operator")

    def parse_conjunction(self) -> Cond:
        items = [self.parse_atom()]
        while self.peek().text == '&&':
            self.next()
            items.append(self.parse_atom())
        return items[0] if len(items) == 1 else CAnd(tuple(items))

    def parse_cond(self) -> Cond:
        items = [self.parse_conjunction()]
        while self.peek().text == '||':
            self.next()
            items.append(self.parse_conjunction())
        return items[0] if len(items) == 1 else COr(tuple(items))

    def parse_paren_cond(self) -> Tuple[Cond, str]:
        open_paren = self.expect('(')
        cond = self.parse_cond()
        close = self.expect(')')
        return cond, self.src[open_paren.offset + 1:close.offset].strip()

    # statements -----------------------------------------------------------

    def parse_block(self) -> Tuple[Stmt, ...]:
        self.expect('{')
        stmts: List[Stmt] = []
        while self.peek().text != '}':
            if self.peek().kind == 'eof':
                raise self.fail("unterminated block")
            stmts.append(self.parse_stmt())
        self.expect('}')
        return tuple(stmts)

    def parse_stmt(self) -> Stmt:
        t = self.peek()
        if t.kind == 'id':
            self.next()
            target = self.variable(t.text)
            self.expect(':=')
            if self.peek().text == 'nondet':
                self.next()
                self.expect('(')
                self.expect(')')
                self.expect(';')
                return AssignNondet(target.name)
            expr = self.parse_expr()
            self.expect(';')
            return Assign(target.name, expr)
        if t.text == 'if':
            self.next()
            cond, _ = self.parse_paren_cond()
            then = self.parse_block()
            orelse: Tuple[Stmt, ...] = ()
            if self.peek().text == 'else':
                self.next()
                orelse = self.parse_block()
            return Ite(cond, then, orelse)
        if t.text == 'while':
            self.next()
            location = (t.line, t.column)
            self.expect('(')
            if self.peek().text == '*':
                self.next()
                cond = None
            else:
                cond = self.parse_cond()
            self.expect(')')
            return While(cond, self.parse_block(), location)
        if t.text == 'assume':
            self.next()
            cond, _ = self.parse_paren_cond()
            self.expect(';')
            return Assume(cond)
        if t.text == 'assert':
            self.next()
            location = (t.line, t.column)
            cond, text = self.parse_paren_cond()
            self.expect(';')
            return AssertStmt(cond, location, text)
        what = 'end of input' if t.kind == 'eof' else repr(t.text)
        raise self.fail("expected a statement, found %s" % what)


def parse(src: str) -> Program:
    parser = _Parser(src)
    stmts: List[Stmt] = []
    while parser.peek().kind != 'eof':
        stmts.append(parser.parse_stmt())
    return Program(tuple(stmts), tuple(parser.seen))


# ---------------------------------------------------------------------------
# Transition-formula semantics

Star = Union[str, Callable[[SolverHandle, TransitionFormula],
                           TransitionFormula]]


def _frame(vocabulary: Sequence[Var], but: Optional[str] = None) -> Formula:
    return mk_and([Eq(prime_var(v), v) for v in vocabulary if v.name != but])


def _to_primed(vocabulary: Sequence[Var]) -> Dict[str, Term]:
    return {v.name: prime_var(v) for v in vocabulary}


def _apply_star(h: SolverHandle, f: TransitionFormula, star: Star
                ) -> Tuple[TransitionFormula, Optional[IterationArtifacts]]:
    if callable(star):
        return star(h, f), None
    art = iterate(h, f, star)
    return art.closure, art


@dataclass
class _LoopInfo:
    closure: TransitionFormula  # at the loop head, after any number of turns
    exit_tf: TransitionFormula  # closure plus the failed guard
    artifacts: Optional[IterationArtifacts]


def tf_of(h: SolverHandle, s: Union[Stmt, Sequence[Stmt]], star: Star,
          vocabulary: Sequence[Var],
          loops: Optional[Dict[int, _LoopInfo]] = None) -> TransitionFormula:
    """The relation between program states before and after s.

    star turns a loop's guarded body relation into its reflexive-transitive
    closure: a method name, or any callable with the same contract.  The
    loops table collects per-loop results keyed by statement identity and
    lets callers reuse a closure instead of re-deriving it.
    """
    vocabulary = tuple(vocabulary)
    if loops is None:
        loops = {}
    if isinstance(s, (list, tuple)):
        acc: Optional[TransitionFormula] = None
        for item in s:
            step = tf_of(h, item, star, vocabulary, loops)
            acc = step if acc is None else compose(h, acc, step)
        return acc if acc is not None else identity_tf(vocabulary)
    if isinstance(s, Assign):
        update = Eq(prime_var(Var(s.name, Sort.INTEGER)), s.expr)
        return TransitionFormula(
            mk_and([update, _frame(vocabulary, but=s.name)]), vocabulary)
    if isinstance(s, AssignNondet):
        # The target's post-value is unconstrained.
        return TransitionFormula(_frame(vocabulary, but=s.name), vocabulary)
    if isinstance(s, Assume):
        return TransitionFormula(
            mk_and([cond_formula(s.cond), _frame(vocabulary)]), vocabulary)
    if isinstance(s, AssertStmt):
        # Asserts are observations, not transitions.
        return identity_tf(vocabulary)
    if isinstance(s, Ite):
        then_tf = tf_of(h, s.then, star, vocabulary, loops)
        else_tf = tf_of(h, s.orelse, star, vocabulary, loops)
        return TransitionFormula(mk_or([
            mk_and([cond_formula(s.cond), then_tf.formula]),
            mk_and([cond_negation(s.cond), else_tf.formula]),
        ]), vocabulary)
    if isinstance(s, While):
        info = loops.get(id(s))
        if info is None:
            body = tf_of(h, s.body, star, vocabulary, loops)
            if s.cond is None:
                turn = body
            else:
                turn = TransitionFormula(
                    mk_and([cond_formula(s.cond), body.formula]), vocabulary)
            closure, artifacts = _apply_star(h, turn, star)
            if s.cond is None:
                exit_tf = closure
            else:
                stuck = substitute(cond_negation(s.cond),
                                   _to_primed(vocabulary))
                exit_tf = TransitionFormula(
                    mk_and([closure.formula, stuck]), vocabulary)
            info = _LoopInfo(closure, exit_tf, artifacts)
            loops[id(s)] = info
        return info.exit_tf
    raise TypeError(type(s))


# ---------------------------------------------------------------------------
# Verification

@dataclass(frozen=True)
class AssertVerdict:
    location: Location
    condition: str
    verdict: str  # 'proved' | 'unknown'
    solver_failed: bool = False


@dataclass(frozen=True)
class LoopReport:
    location: Location
    summary: TransitionFormula
    artifacts: Optional[IterationArtifacts]


@dataclass(frozen=True)
class VerificationResult:
    verdicts: Tuple[AssertVerdict, ...]
    loops: Tuple[LoopReport, ...]
    elapsed: float

    @property
    def all_proved(self) -> bool:
        return all(v.verdict == 'proved' for v in self.verdicts)

    @property
    def solver_failed(self) -> bool:
        return any(v.solver_failed for v in self.verdicts)


def verify(h: SolverHandle, p: Program, pre: Formula = TRUE,
           star: Star = 'vasrs') -> VerificationResult:
    """Check every assert along every path from program entry.

    Each assert is judged against the transition relation from entry to its
    own location; the condition must hold in the post-state.  A solver
    failure downgrades that assert to unknown, never to proved.
    """
    t0 = time.perf_counter()
    vocabulary = p.vocabulary
    to_primed = _to_primed(vocabulary)
    loops: Dict[int, _LoopInfo] = {}
    checks: List[Tuple[AssertStmt, TransitionFormula]] = []

    def walk(stmts: Sequence[Stmt], reached: TransitionFormula):
        acc = reached
        for s in stmts:
            if isinstance(s, AssertStmt):
                checks.append((s, acc))
                continue
            if isinstance(s, Ite):
                enter_then = TransitionFormula(
                    mk_and([cond_formula(s.cond), _frame(vocabulary)]),
                    vocabulary)
                enter_else = TransitionFormula(
                    mk_and([cond_negation(s.cond), _frame(vocabulary)]),
                    vocabulary)
                walk(s.then, compose(h, acc, enter_then))
                walk(s.orelse, compose(h, acc, enter_else))
            elif isinstance(s, While):
                tf_of(h, s, star, vocabulary, loops)
                at_head = compose(h, acc, loops[id(s)].closure)
                if s.cond is None:
                    in_body = at_head
                else:
                    taken = TransitionFormula(
                        mk_and([cond_formula(s.cond), _frame(vocabulary)]),
                        vocabulary)
                    in_body = compose(h, at_head, taken)
                walk(s.body, in_body)
            acc = compose(h, acc, tf_of(h, s, star, vocabulary, loops))

    walk(p.body, identity_tf(vocabulary))

    verdicts: List[AssertVerdict] = []
    for stmt, reached in checks:
        goal_failed = substitute(cond_negation(stmt.cond), to_primed)
        query = mk_and([pre, reached.formula, goal_failed])
        try:
            with h.frame():
                declare_and_assert(h, query)
                verdict = 'unknown' if h.check() else 'proved'
            failed = False
        except SolverError:
            verdict, failed = 'unknown', True
        verdicts.append(AssertVerdict(stmt.location, stmt.text, verdict,
                                      failed))

    reports = tuple(
        LoopReport(w.location, loops[id(w)].exit_tf, loops[id(w)].artifacts)
        for w in program_loops(p) if id(w) in loops)
    return VerificationResult(tuple(verdicts), reports,
                              time.perf_counter() - t0)


def summarize(h: SolverHandle, p: Program,
              star: Star = 'vasrs') -> Tuple[LoopReport, ...]:
    """Per-loop closures in source order, without checking any asserts."""
    loops: Dict[int, _LoopInfo] = {}
    tf_of(h, p.body, star, p.vocabulary, loops)
    return tuple(
        LoopReport(w.location, loops[id(w)].exit_tf, loops[id(w)].artifacts)
        for w in program_loops(p) if id(w) in loops)


# ---------------------------------------------------------------------------
# Concrete execution, for differential testing against the verifier

class _Halt(Exception):
    pass


def run_program(p: Program, rng: random.Random,
                initial: Dict[str, int], max_steps: int = 50
                ) -> List[Location]:
    """Execute one random path; returns the locations of failed asserts.

    Nondeterministic choices (nondet() and `*` guards) come from rng; a
    failing assume abandons the path.  Execution stops after max_steps
    statements, so the result covers a prefix of one feasible run.
    """
    env = {name: int(initial.get(name, 0)) for name in p.variables}
    failures: List[Location] = []
    budget = [max_steps]

    def model() -> Model:
        return Model(env)

    def run_block(stmts: Sequence[Stmt]):
        for s in stmts:
            budget[0] -= 1
            if budget[0] < 0:
                raise _Halt()
            if isinstance(s, Assign):
                env[s.name] = int(eval_term(s.expr, model()))
            elif isinstance(s, AssignNondet):
                env[s.name] = rng.randrange(-4, 5)
            elif isinstance(s, Assume):
                if not cond_eval(s.cond, model()):
                    raise _Halt()
            elif isinstance(s, AssertStmt):
                if not cond_eval(s.cond, model()):
                    failures.append(s.location)
            elif isinstance(s, Ite):
                branch = s.then if cond_eval(s.cond, model()) else s.orelse
                run_block(branch)
            elif isinstance(s, While):
                while (rng.random() < 0.75 if s.cond is None
                       else cond_eval(s.cond, model())):
                    run_block(s.body)
                    budget[0] -= 1
                    if budget[0] < 0:
                        raise _Halt()
            else:
                raise TypeError(type(s))

    try:
        run_block(p.body)
    except _Halt:
        pass
    return failures


# ---------------------------------------------------------------------------
# Precondition terms

def parse_precondition(text: str, vocabulary: Sequence[Var]) -> Formula:
    """An SMT-LIB2 boolean term over the program variables."""
    by_name = {v.name: v for v in vocabulary}
    try:
        sexp = parse_sexp(tokenize_sexp(text))[0]
    except (ValueError, IndexError) as e:
        raise ValueError("malformed precondition: %s" % e)

    def term(node) -> Term:
        if isinstance(node, str):
            if node in by_name:
                return by_name[node]
            try:
                return Const(int(node))
            except ValueError:
                raise ValueError("unknown variable %r" % node)
        if not node:
            raise ValueError("empty term")
        op, args = node[0], [term(a) for a in node[1:]]
        if op == '+':
            return mk_add(args)
        if op == '-':
            if len(args) == 1:
                return mk_mul(-1, args[0])
            return mk_add([args[0]] + [mk_mul(-1, a) for a in args[1:]])
        if op == '*':
            consts = [a for a in node[1:] if isinstance(a, str)
                      and _is_int(a)]
            if len(node) != 3 or len(consts) != 1:
                raise ValueError("only constant scaling is allowed")
            other = term(node[1] if _is_int_node(node[2]) else node[2])
            return mk_mul(int(consts[0]), other)
        raise ValueError("unknown term operator %r" % op)

    def _is_int(s) -> bool:
        try:
            int(s)
            return True
        except (TypeError, ValueError):
            return False

    def _is_int_node(node) -> bool:
        return isinstance(node, str) and _is_int(node)

    def formula(node) -> Formula:
        if isinstance(node, str):
            if node == 'true':
                return TRUE
            if node == 'false':
                return mk_or([])
            raise ValueError("expected a boolean term, got %r" % node)
        if not node:
            raise ValueError("empty formula")
        op = node[0]
        if op == 'and':
            return mk_and([formula(a) for a in node[1:]])
        if op == 'or':
            return mk_or([formula(a) for a in node[1:]])
        if op == 'not':
            if len(node) != 2:
                raise ValueError("not takes one argument")
            return negate(formula(node[1]))
        if op in ('<', '<=', '=', '>=', '>') and len(node) == 3:
            a, b = term(node[1]), term(node[2])
            return {'<': Lt(a, b), '<=': mk_le(a, b), '=': Eq(a, b),
                    '>=': mk_le(b, a), '>': Lt(b, a)}[op]
        raise ValueError("unknown operator %r" % op)

    return formula(sexp)
