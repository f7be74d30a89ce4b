"""Coefficient maps as a small closed expression language.

Grammar (whitespace-insensitive)::

    expr    := term (('+' | '-') term)*
    term    := unary ('*' unary)*
    unary   := '-' unary | primary
    primary := NUMBER | 'x' INT | 'abs(' expr ')' | 'exp(' expr ')'
             | 'pow(' expr ',' INT ',' INT ')' | '(' expr ')'

Trees are immutable and hashable.  ``render`` emits text that parses back to
an identical tree, so a model can be written to JSON and reloaded exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ComponentIndexError, ExprSyntaxError


class CoeffExpr:
    """Base node.  Subclasses are frozen dataclasses."""

    __slots__ = ()

    def __call__(self, x):
        return evaluate(self, x)

    def render(self) -> str:
        return render(self)

    def variables(self) -> frozenset:
        return variables(self)


@dataclass(frozen=True)
class Const(CoeffExpr):
    value: float


@dataclass(frozen=True)
class Var(CoeffExpr):
    index: int  # 1-based


@dataclass(frozen=True)
class Abs(CoeffExpr):
    arg: CoeffExpr


@dataclass(frozen=True)
class Pow(CoeffExpr):
    """``arg ** (p/q)`` with ``p >= 0``, ``q >= 1`` in lowest terms."""

    arg: CoeffExpr
    p: int
    q: int


@dataclass(frozen=True)
class Exp(CoeffExpr):
    arg: CoeffExpr


@dataclass(frozen=True)
class Sum(CoeffExpr):
    terms: tuple


@dataclass(frozen=True)
class Prod(CoeffExpr):
    factors: tuple


@dataclass(frozen=True)
class Scale(CoeffExpr):
    coef: float
    arg: CoeffExpr


ZERO = Const(0.0)


# -- smart constructors (shared by the parser and by programmatic builders) --

def const(value) -> Const:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite constant {value!r}")
    return Const(value)


def var(index: int) -> Var:
    if int(index) < 1:
        raise ComponentIndexError(f"component index must be >= 1, got x{index}")
    return Var(int(index))


def power(arg: CoeffExpr, p: int, q: int = 1) -> Pow:
    p, q = int(p), int(q)
    if q < 1 or p < 0:
        raise ValueError(f"pow exponent {p}/{q} must have p >= 0 and q >= 1")
    g = math.gcd(p, q) or 1
    p, q = p // g, q // g
    if q % 2 == 0 and not is_nonneg(arg):
        raise ValueError(
            f"even root pow(., {p}, {q}) needs a provably nonnegative argument")
    return Pow(arg, p, q)


def add(*terms: CoeffExpr) -> CoeffExpr:
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


def mul(*factors: CoeffExpr) -> CoeffExpr:
    if not factors:
        return Const(1.0)
    if len(factors) == 1:
        return factors[0]
    if len(factors) == 2 and isinstance(factors[0], Const):
        return Scale(factors[0].value, factors[1])
    return Prod(tuple(factors))


def neg(e: CoeffExpr) -> CoeffExpr:
    if isinstance(e, Const):
        return Const(-e.value)
    if isinstance(e, Scale):
        return Scale(-e.coef, e.arg)
    return Scale(-1.0, e)


# -- parsing ---------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<var>x(?P<idx>\d+))
  | (?P<func>abs|exp|pow)\b
  | (?P<op>[-+*(),])
""", re.VERBOSE)


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        if m.group("ws") is None:
            if m.group("num") is not None:
                out.append(("num", m.group("num"), pos))
            elif m.group("var") is not None:
                out.append(("var", m.group("idx"), pos))
            elif m.group("func") is not None:
                out.append(("func", m.group("func"), pos))
            else:
                out.append(("op", m.group("op"), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text, n_vars):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.n_vars = n_vars

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        tok = self.take()
        if tok[0] != "op" or tok[1] != value:
            what = tok[1] or "end of input"
            raise ExprSyntaxError(f"expected {value!r}, found {what!r}", tok[2], self.text)

    def fail(self, msg, tok):
        raise ExprSyntaxError(msg, tok[2], self.text)

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(f"unexpected {tok[1]!r}", tok)
        return e

    def expr(self):
        terms = [self.term()]
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            t = self.term()
            terms.append(t if op == "+" else neg(t))
        return add(*terms)

    def term(self):
        factors = [self.unary()]
        while self.peek()[:2] == ("op", "*"):
            self.take()
            factors.append(self.unary())
        return mul(*factors)

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        return self.primary()

    def integer(self):
        tok = self.take()
        neg_sign = False
        if tok[0] == "op" and tok[1] == "-":
            neg_sign = True
            tok = self.take()
        if tok[0] != "num" or not tok[1].isdigit():
            self.fail("expected an integer", tok)
        return (-1 if neg_sign else 1) * int(tok[1]), tok

    def primary(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return const(float(val))
        if kind == "var":
            k = int(val)
            if k < 1 or (self.n_vars is not None and k > self.n_vars):
                raise ComponentIndexError(
                    f"component x{k} at position {pos} outside 1..{self.n_vars}")
            return Var(k)
        if kind == "func":
            self.expect("(")
            arg = self.expr()
            if val == "pow":
                self.expect(",")
                p, ptok = self.integer()
                self.expect(",")
                q, _ = self.integer()
                self.expect(")")
                try:
                    return power(arg, p, q)
                except ValueError as exc:
                    raise ExprSyntaxError(str(exc), ptok[2], self.text) from None
            self.expect(")")
            return Abs(arg) if val == "abs" else Exp(arg)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"unexpected {val or 'end of input'!r}", tok)


def parse(text: str, n_vars: Optional[int] = None) -> CoeffExpr:
    """Parse ``text``; component indices are checked against ``n_vars``."""
    if not isinstance(text, str):
        raise ExprSyntaxError(f"expression must be a string, got {type(text).__name__}", 0)
    return _Parser(text, n_vars).parse()


# -- rendering -------------------------------------------------------------

def render(e: CoeffExpr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Abs):
        return f"abs({render(e.arg)})"
    if isinstance(e, Exp):
        return f"exp({render(e.arg)})"
    if isinstance(e, Pow):
        return f"pow({render(e.arg)}, {e.p}, {e.q})"
    if isinstance(e, Sum):
        return "(" + " + ".join(render(t) for t in e.terms) + ")"
    if isinstance(e, Prod):
        return "(" + " * ".join(render(f) for f in e.factors) + ")"
    if isinstance(e, Scale):
        return f"({e.coef!r} * {render(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


# -- evaluation ------------------------------------------------------------

def evaluate(e: CoeffExpr, x):
    """Value of ``e`` at ``x``.

    ``x`` has shape ``(N,)`` or ``(N, ...)``; trailing axes broadcast, so one
    call evaluates a batch of points.
    """
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return _eval(e, x)


def _eval(e, x):
    if isinstance(e, Const):
        return e.value if x.ndim <= 1 else np.full(x.shape[1:], e.value)
    if isinstance(e, Var):
        return x[e.index - 1]
    if isinstance(e, Abs):
        return np.abs(_eval(e.arg, x))
    if isinstance(e, Exp):
        return np.exp(_eval(e.arg, x))
    if isinstance(e, Pow):
        a = _eval(e.arg, x)
        if e.p == 0:
            return np.ones_like(a) if np.ndim(a) else 1.0
        # np.power rather than ``**``: scalar ``**`` uses libm pow, which can differ
        # by an ulp from the vectorised loop
        mag = np.power(np.abs(a), e.p / e.q if e.q > 1 else float(e.p))
        if e.p % 2 == 1 and e.q % 2 == 1:
            return np.sign(a) * mag
        return mag
    if isinstance(e, Sum):
        acc = _eval(e.terms[0], x)
        for t in e.terms[1:]:
            acc = acc + _eval(t, x)
        return acc
    if isinstance(e, Prod):
        acc = _eval(e.factors[0], x)
        for f in e.factors[1:]:
            acc = acc * _eval(f, x)
        return acc
    if isinstance(e, Scale):
        return e.coef * _eval(e.arg, x)
    raise TypeError(f"not an expression node: {e!r}")


# -- structural analysis ---------------------------------------------------

def children(e):
    if isinstance(e, (Abs, Exp, Pow, Scale)):
        return (e.arg,)
    if isinstance(e, Sum):
        return e.terms
    if isinstance(e, Prod):
        return e.factors
    return ()


def variables(e) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.index,))
    out = frozenset()
    for c in children(e):
        out |= variables(c)
    return out


def is_constant(e) -> bool:
    return not variables(e)


def constant_value(e) -> Optional[float]:
    """Exact value of a variable-free expression, else ``None``."""
    if variables(e):
        return None
    return float(evaluate(e, np.zeros(1)))


def is_nonneg(e, nonneg_domain: bool = False) -> bool:
    """Structural proof that ``e >= 0`` everywhere (sound, incomplete).

    With ``nonneg_domain`` every component ``xk`` is assumed ``>= 0``.
    """
    if isinstance(e, Const):
        return e.value >= 0
    if isinstance(e, Var):
        return nonneg_domain
    if isinstance(e, (Abs, Exp)):
        return True
    if isinstance(e, Pow):
        return e.p % 2 == 0 or e.q % 2 == 0 or is_nonneg(e.arg, nonneg_domain)
    if isinstance(e, Sum):
        return all(is_nonneg(t, nonneg_domain) for t in e.terms)
    if isinstance(e, Prod):
        signs = _factor_signs(e, nonneg_domain)
        if None in signs:
            return False
        return sum(1 for s in signs if s < 0) % 2 == 0
    if isinstance(e, Scale):
        if e.coef == 0:
            return True
        return is_nonneg(e.arg, nonneg_domain) if e.coef > 0 else is_nonpos(e.arg, nonneg_domain)
    return False


def is_nonpos(e, nonneg_domain: bool = False) -> bool:
    if isinstance(e, Const):
        return e.value <= 0
    if isinstance(e, Pow):
        return e.p % 2 == 1 and e.q % 2 == 1 and is_nonpos(e.arg, nonneg_domain)
    if isinstance(e, Sum):
        return all(is_nonpos(t, nonneg_domain) for t in e.terms)
    if isinstance(e, Prod):
        signs = _factor_signs(e, nonneg_domain)
        if None in signs:
            return False
        if 0 in signs:
            return True
        return sum(1 for s in signs if s < 0) % 2 == 1
    if isinstance(e, Scale):
        if e.coef == 0:
            return True
        return is_nonpos(e.arg, nonneg_domain) if e.coef > 0 else is_nonneg(e.arg, nonneg_domain)
    return False


def _factor_signs(e, nonneg_domain):
    """Signs of a product's factors; a factor repeated an even number of times counts as +1."""
    counts = {}
    for f in e.factors:
        counts[f] = counts.get(f, 0) + 1
    signs = []
    for f, n in counts.items():
        if n % 2 == 0:
            signs.append(0 if is_zero(f) else 1)
        else:
            signs.append(_sign(f, nonneg_domain))
    return signs


def _sign(e, nonneg_domain):
    if is_zero(e):
        return 0
    if is_nonneg(e, nonneg_domain):
        return 1
    if is_nonpos(e, nonneg_domain):
        return -1
    return None


def is_zero(e) -> bool:
    """Structurally identically zero."""
    if isinstance(e, Const):
        return e.value == 0
    if isinstance(e, Scale):
        return e.coef == 0 or is_zero(e.arg)
    if isinstance(e, (Abs,)):
        return is_zero(e.arg)
    if isinstance(e, Pow):
        return e.p > 0 and is_zero(e.arg)
    if isinstance(e, Sum):
        if all(is_zero(t) for t in e.terms):
            return True
        poly = polynomial(e)
        return poly is not None and not poly
    if isinstance(e, Prod):
        return any(is_zero(f) for f in e.factors)
    return False


def norm_degree(e) -> Optional[Fraction]:
    """Upper growth exponent ``d`` with ``|e(x)| <= K (1 + ||x||_N**d)``.

    Uses ``|x_k| <= ||x||_N**k``.  ``None`` means no polynomial bound could
    be established structurally.
    """
    if isinstance(e, Const):
        return Fraction(0)
    if isinstance(e, Var):
        return Fraction(e.index)
    if isinstance(e, Abs):
        return norm_degree(e.arg)
    if isinstance(e, Pow):
        d = norm_degree(e.arg)
        return None if d is None else d * Fraction(e.p, e.q)
    if isinstance(e, Exp):
        if is_constant(e.arg) or is_nonpos(e.arg):
            return Fraction(0)
        return None
    if isinstance(e, Scale):
        return Fraction(0) if e.coef == 0 else norm_degree(e.arg)
    if isinstance(e, Sum):
        ds = [norm_degree(t) for t in e.terms]
        return None if None in ds else max(ds)
    if isinstance(e, Prod):
        ds = [norm_degree(f) for f in e.factors]
        return None if None in ds else sum(ds, Fraction(0))
    return None


def additive_terms(e):
    """Flatten nested sums (and scalings of sums) into a list of terms."""
    if isinstance(e, Sum):
        out = []
        for t in e.terms:
            out.extend(additive_terms(t))
        return out
    if isinstance(e, Scale) and isinstance(e.arg, Sum):
        return [Scale(e.coef, t) for t in additive_terms(e.arg)]
    return [e]


def polynomial(e):
    """Expand into ``{exponent tuple: coefficient}`` when ``e`` is a polynomial.

    Exponent tuples are indexed by component (length = max index).  Returns
    ``None`` for non-polynomial shapes (abs, exp, fractional powers).
    """
    n = max(variables(e), default=0)
    return _poly(e, n)


def _poly(e, n):
    zero = (0,) * n
    if isinstance(e, Const):
        return {zero: e.value} if e.value != 0 else {}
    if isinstance(e, Var):
        m = [0] * n
        m[e.index - 1] = 1
        return {tuple(m): 1.0}
    if isinstance(e, Scale):
        inner = _poly(e.arg, n)
        if inner is None:
            return None
        return _clean({k: e.coef * v for k, v in inner.items()})
    if isinstance(e, Sum):
        acc = {}
        for t in e.terms:
            p = _poly(t, n)
            if p is None:
                return None
            for k, v in p.items():
                acc[k] = acc.get(k, 0.0) + v
        return _clean(acc)
    if isinstance(e, Prod):
        acc = {zero: 1.0}
        for f in e.factors:
            p = _poly(f, n)
            if p is None:
                return None
            acc = _poly_mul(acc, p)
        return _clean(acc)
    if isinstance(e, Pow) and e.q == 1:
        base = _poly(e.arg, n)
        if base is None:
            return None
        acc = {zero: 1.0}
        for _ in range(e.p):
            acc = _poly_mul(acc, base)
        return _clean(acc)
    if isinstance(e, Exp) and is_constant(e.arg):
        v = constant_value(e)
        return {zero: v}
    if isinstance(e, Abs) and is_constant(e.arg):
        return {zero: abs(constant_value(e.arg))} if constant_value(e.arg) else {}
    return None


def _poly_mul(a, b):
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(i + j for i, j in zip(ka, kb))
            out[k] = out.get(k, 0.0) + va * vb
    return out


def _clean(p):
    return {k: v for k, v in p.items() if v != 0}
