"""Expression trees for rate equations.

Expressions are immutable trees built from constants, symbols, sums,
products, powers and a closed set of unary functions.  Construction goes
through :func:`add`, :func:`mul`, :func:`pow_` and :func:`func`, which keep
trees in a light normal form: nested sums and products are flattened,
numeric constants are folded (a product carries at most one leading
coefficient), like terms and like factors are merged, and 0/1 identities are
removed.  Nothing heavier is attempted; symbolic equality is decided by
:func:`canonical_equal`, which expands both sides to sums of monomials.

Grammar accepted by :func:`parse`::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := primary (("^" | "**") unary)?
    primary := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    FUNC    := exp | log | sqrt | abs | Abs | sin | cos

Numeric literals are stored as exact rationals, so ``1.0/3.0`` and ``1/3``
are the same constant.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, NamedTuple, Sequence, Union

from .errors import DomainError, ExprSyntaxError, MissingBindingError, UnknownSymbolError

Number = Union[Fraction, float]

FUNCTIONS = ("exp", "log", "sqrt", "abs", "sin", "cos")
_FUNC_ALIASES = {"Abs": "abs", "ln": "log"}
TIME = "t"
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return pow_(self, as_expr(other))

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: Number

    def __repr__(self):
        return f"Const({self.value!s})"


@dataclass(frozen=True, eq=True, repr=False)
class Symbol(Expr):
    name: str

    def __repr__(self):
        return f"Symbol({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Add(Expr):
    args: tuple

    def __repr__(self):
        return f"Add{self.args!r}"


@dataclass(frozen=True, eq=True, repr=False)
class Mul(Expr):
    args: tuple

    def __repr__(self):
        return f"Mul{self.args!r}"


@dataclass(frozen=True, eq=True, repr=False)
class Pow(Expr):
    base: Expr
    exp: Expr

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exp!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Func(Expr):
    name: str
    arg: Expr

    def __repr__(self):
        return f"Func({self.name!r}, {self.arg!r})"


ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
MINUS_ONE = Const(Fraction(-1))
HALF = Const(Fraction(1, 2))


def _num(value) -> Number:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        return Fraction(int(value))
    if isinstance(value, int):
        return Fraction(value)
    return float(value)


def const(value) -> Const:
    return Const(_num(value))


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return Symbol(value)
    return const(value)


def is_const(e: Expr, value=None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _is_int(v: Number) -> bool:
    return isinstance(v, Fraction) and v.denominator == 1


# -- constructors ---------------------------------------------------------

def _split_coeff(e: Expr):
    """Return ``(coefficient, rest)`` with ``e == coefficient * rest``."""
    if isinstance(e, Const):
        return e.value, ONE
    if isinstance(e, Mul) and isinstance(e.args[0], Const):
        rest = e.args[1:]
        return e.args[0].value, rest[0] if len(rest) == 1 else Mul(rest)
    return Fraction(1), e


def add(*args: Expr) -> Expr:
    flat = []
    for a in args:
        if isinstance(a, Add):
            flat.extend(a.args)
        else:
            flat.append(a)
    terms: dict = {}
    constant = Fraction(0)
    has_const = False
    order = []
    for a in flat:
        if isinstance(a, Const):
            constant = constant + a.value
            if not has_const:
                order.append(None)
                has_const = True
            continue
        c, rest = _split_coeff(a)
        if rest in terms:
            terms[rest] = terms[rest] + c
        else:
            terms[rest] = c
            order.append(rest)
    out = []
    for key in order:
        if key is None:
            if constant != 0:
                out.append(Const(constant))
            continue
        c = terms[key]
        if c == 0:
            continue
        out.append(key if c == 1 else _mul_coeff(c, key))
    if not out:
        return Const(constant)
    if len(out) == 1:
        return out[0]
    return Add(tuple(out))


def _mul_coeff(c: Number, e: Expr) -> Expr:
    if c == 1:
        return e
    if isinstance(e, Mul):
        return Mul((Const(c),) + e.args)
    return Mul((Const(c), e))


def mul(*args: Expr) -> Expr:
    flat = []
    for a in args:
        if isinstance(a, Mul):
            flat.extend(a.args)
        else:
            flat.append(a)
    coeff: Number = Fraction(1)
    powers: dict = {}
    order = []
    for a in flat:
        if isinstance(a, Const):
            coeff = coeff * a.value
            continue
        if isinstance(a, Pow):
            base, exp = a.base, a.exp
        else:
            base, exp = a, ONE
        if base in powers:
            powers[base] = add(powers[base], exp)
        else:
            powers[base] = exp
            order.append(base)
    if coeff == 0:
        return Const(coeff * 0)
    factors = []
    for base in order:
        f = pow_(base, powers[base])
        if isinstance(f, Const):
            coeff = coeff * f.value
        elif isinstance(f, Mul):
            # integer power of a product distributed by pow_
            for g in f.args:
                if isinstance(g, Const):
                    coeff = coeff * g.value
                else:
                    factors.append(g)
        else:
            factors.append(f)
    if coeff == 0:
        return Const(coeff * 0)
    if not factors:
        return Const(coeff)
    if coeff == 1 and len(factors) == 1:
        return factors[0]
    if coeff == 1:
        return Mul(tuple(factors))
    return Mul((Const(coeff),) + tuple(factors))


def _const_pow(b: Number, e: Number) -> Expr | None:
    if _is_int(e) and isinstance(b, Fraction):
        if b == 0 and e < 0:
            raise DomainError("division by zero in constant expression")
        return Const(b ** int(e))
    if b < 0:
        return None
    if b == 0:
        if e < 0:
            raise DomainError("division by zero in constant expression")
        return Const(Fraction(0)) if e > 0 else Const(Fraction(1))
    if isinstance(b, Fraction) and isinstance(e, Fraction):
        # exact rational root when one exists, e.g. 4**(1/2)
        num = _exact_root(b.numerator, e.denominator)
        den = _exact_root(b.denominator, e.denominator)
        if num is not None and den is not None:
            return Const(Fraction(num, den) ** e.numerator)
    return Const(float(b) ** float(e))


def _exact_root(n: int, k: int):
    r = round(n ** (1.0 / k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand ** k == n:
            return cand
    return None


def pow_(base: Expr, exp: Expr) -> Expr:
    if isinstance(exp, Const):
        if exp.value == 0:
            return Const(Fraction(1))
        if exp.value == 1:
            return base
        if isinstance(base, Const):
            folded = _const_pow(base.value, exp.value)
            if folded is not None:
                return folded
        elif _is_int(exp.value):
            if isinstance(base, Pow) and isinstance(base.exp, Const):
                new = base.exp.value * exp.value
                return pow_(base.base, Const(new))
            if isinstance(base, Mul):
                return mul(*(pow_(f, exp) for f in base.args))
    if isinstance(base, Const) and base.value == 1:
        return base
    return Pow(base, exp)


def neg(e: Expr) -> Expr:
    return mul(MINUS_ONE, e)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def div(a: Expr, b: Expr) -> Expr:
    return mul(a, pow_(b, MINUS_ONE))


_FLOAT_FUNCS = {
    "exp": math.exp,
    "log": math.log,
    "abs": abs,
    "sin": math.sin,
    "cos": math.cos,
}


def func(name: str, arg: Expr) -> Expr:
    name = _FUNC_ALIASES.get(name, name)
    if name == "sqrt":
        return pow_(arg, HALF)
    if name not in _FLOAT_FUNCS:
        raise ValueError(f"unsupported function {name!r}")
    if isinstance(arg, Const):
        v = arg.value
        if name == "abs":
            return Const(abs(v))
        if name == "exp" and v == 0:
            return Const(Fraction(1))
        if name == "log":
            if v <= 0:
                raise DomainError(f"log of non-positive constant {v}")
            if v == 1:
                return Const(Fraction(0))
        if name in ("sin",) and v == 0:
            return Const(Fraction(0))
        if name == "cos" and v == 0:
            return Const(Fraction(1))
        return Const(_FLOAT_FUNCS[name](float(v)))
    if name == "abs" and isinstance(arg, Func) and arg.name == "abs":
        return arg
    return Func(name, arg)


# -- symbol table and parser ---------------------------------------------

class SymbolTable:
    """Ordered state and parameter names plus the reserved time symbol."""

    def __init__(self, states: Sequence[str], params: Sequence[str] = ()):
        self.states = tuple(states)
        self.params = tuple(params)
        seen = set()
        for name in self.states + self.params:
            if not isinstance(name, str) or not _NAME_RE.match(name):
                raise ValueError(f"invalid symbol name {name!r}")
            if name == TIME:
                raise ValueError(f"{TIME!r} is reserved for time")
            if name in FUNCTIONS or name in _FUNC_ALIASES:
                raise ValueError(f"{name!r} is a function name")
            if name in seen:
                raise ValueError(f"duplicate symbol name {name!r}")
            seen.add(name)
        self._names = seen | {TIME}

    def __contains__(self, name):
        return name in self._names

    def __repr__(self):
        return f"SymbolTable(states={list(self.states)}, params={list(self.params)})"

    def __eq__(self, other):
        return (isinstance(other, SymbolTable) and self.states == other.states
                and self.params == other.params)

    @property
    def names(self):
        return frozenset(self._names)

    def with_params(self, extra: Iterable[str]) -> "SymbolTable":
        return SymbolTable(self.states, self.params + tuple(p for p in extra if p not in self.params))


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\*\*|[-+*/^()])
""", re.VERBOSE)


class _Parser:
    def __init__(self, source: str, table: SymbolTable | None):
        self.source = source
        self.table = table
        self.tokens = []
        pos = 0
        while pos < len(source):
            m = _TOKEN_RE.match(source, pos)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
            kind = m.lastgroup
            if kind != "ws":
                text = m.group()
                if kind == "op" and text == "**":
                    text = "^"
                self.tokens.append((kind, text, pos))
            pos = m.end()
        self.tokens.append(("end", "", len(source)))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok[2], self.source)

    def expect(self, text):
        tok = self.take()
        if tok[1] != text:
            found = tok[1] or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}", tok)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        tok = self.peek()
        if tok[1] == "-":
            self.take()
            return neg(self.unary())
        if tok[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[1] == "^":
            self.take()
            return pow_(base, self.unary())
        return base

    def primary(self):
        tok = self.take()
        kind, text, pos = tok
        if kind == "num":
            return Const(Fraction(text))
        if kind == "name":
            if self.peek()[1] == "(":
                fname = _FUNC_ALIASES.get(text, text)
                if fname not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos, self.source)
                self.take()
                arg = self.expr()
                self.expect(")")
                return func(fname, arg)
            if text in FUNCTIONS or text in _FUNC_ALIASES:
                raise ExprSyntaxError(f"function {text!r} used without argument", pos, self.source)
            if self.table is not None and text not in self.table:
                raise UnknownSymbolError(text, f"unknown symbol {text!r} at position {pos} in {self.source!r}")
            return Symbol(text)
        if text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", pos, self.source)


def parse(source: str, table: SymbolTable | None = None) -> Expr:
    """Parse ``source`` into an expression.

    When ``table`` is given every identifier must be a declared state,
    parameter or the time symbol ``t``.
    """
    if not isinstance(source, str):
        return as_expr(source)
    return _Parser(source, table).parse()


# -- inspection ----------------------------------------------------------

def free_symbols(e: Expr) -> set:
    out = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Symbol):
            out.add(x.name)
        elif isinstance(x, (Add, Mul)):
            stack.extend(x.args)
        elif isinstance(x, Pow):
            stack.append(x.base)
            stack.append(x.exp)
        elif isinstance(x, Func):
            stack.append(x.arg)
    return out


def has_symbol(e: Expr, name: str) -> bool:
    if isinstance(e, Symbol):
        return e.name == name
    if isinstance(e, (Add, Mul)):
        return any(has_symbol(a, name) for a in e.args)
    if isinstance(e, Pow):
        return has_symbol(e.base, name) or has_symbol(e.exp, name)
    if isinstance(e, Func):
        return has_symbol(e.arg, name)
    return False


def substitute(e: Expr, mapping: Mapping[str, object]) -> Expr:
    """Replace symbols by expressions or numbers, re-normalising as it goes."""
    if isinstance(e, Symbol):
        if e.name in mapping:
            return as_expr(mapping[e.name])
        return e
    if isinstance(e, Const):
        return e
    if isinstance(e, Add):
        return add(*(substitute(a, mapping) for a in e.args))
    if isinstance(e, Mul):
        return mul(*(substitute(a, mapping) for a in e.args))
    if isinstance(e, Pow):
        return pow_(substitute(e.base, mapping), substitute(e.exp, mapping))
    return func(e.name, substitute(e.arg, mapping))


# -- evaluation ----------------------------------------------------------

def evaluate(e: Expr, bindings: Mapping[str, float] | None = None) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Raises :class:`DomainError` on division by zero, logarithms of
    non-positive numbers and other undefined operations instead of
    returning NaN.
    """
    bindings = bindings or {}
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Symbol):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise MissingBindingError(e.name) from None
    if isinstance(e, Add):
        return math.fsum(evaluate(a, bindings) for a in e.args)
    if isinstance(e, Mul):
        out = 1.0
        for a in e.args:
            out *= evaluate(a, bindings)
        return out
    if isinstance(e, Pow):
        b = evaluate(e.base, bindings)
        x = evaluate(e.exp, bindings)
        return _safe_pow(b, x)
    arg = evaluate(e.arg, bindings)
    try:
        return float(_FLOAT_FUNCS[e.name](arg))
    except (ValueError, OverflowError) as exc:
        raise DomainError(f"{e.name}({arg!r}): {exc}") from None


def _safe_pow(b: float, x: float) -> float:
    if b == 0.0 and x < 0:
        raise DomainError("division by zero")
    if b < 0 and not float(x).is_integer():
        raise DomainError(f"non-integer power {x!r} of negative number {b!r}")
    try:
        return b ** x
    except OverflowError as exc:
        raise DomainError(str(exc)) from None


# -- differentiation -----------------------------------------------------

def differentiate(e: Expr, wrt: str | Symbol) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to symbol ``wrt``."""
    name = wrt.name if isinstance(wrt, Symbol) else wrt
    return _diff(e, name)


def _diff(e: Expr, x: str) -> Expr:
    if not has_symbol(e, x):
        return ZERO
    if isinstance(e, Symbol):
        return ONE
    if isinstance(e, Add):
        return add(*(_diff(a, x) for a in e.args))
    if isinstance(e, Mul):
        terms = []
        args = e.args
        for i, a in enumerate(args):
            da = _diff(a, x)
            if is_const(da, 0):
                continue
            terms.append(mul(*args[:i], da, *args[i + 1:]))
        return add(*terms)
    if isinstance(e, Pow):
        b, n = e.base, e.exp
        if not has_symbol(n, x):
            return mul(n, pow_(b, add(n, MINUS_ONE)), _diff(b, x))
        if not has_symbol(b, x):
            return mul(e, func("log", b), _diff(n, x))
        return mul(e, add(mul(_diff(n, x), func("log", b)), mul(n, _diff(b, x), pow_(b, MINUS_ONE))))
    u = e.arg
    du = _diff(u, x)
    if e.name == "exp":
        return mul(e, du)
    if e.name == "log":
        return mul(du, pow_(u, MINUS_ONE))
    if e.name == "sin":
        return mul(func("cos", u), du)
    if e.name == "cos":
        return mul(MINUS_ONE, func("sin", u), du)
    # d|u| = u/|u| du
    return mul(u, pow_(e, MINUS_ONE), du)


# -- canonical form ------------------------------------------------------

class SignedTerm(NamedTuple):
    sign: int
    term: Expr

    def __str__(self):
        return f"{'+' if self.sign > 0 else '-'}{self.term}"


_MAX_EXPAND = 12


class _Canon:
    """Expansion into ``{monomial key: coefficient}``.

    A monomial key is a sorted tuple of ``(atom key, exponent)``.  Atoms are
    symbols, function applications and powers that cannot be expanded
    (sums raised to negative or fractional exponents).
    """

    def __init__(self, positive: bool = False):
        self.positive = positive
        self.atoms: dict = {}

    def run(self, e: Expr) -> dict:
        if isinstance(e, Const):
            return {(): e.value} if e.value != 0 else {}
        if isinstance(e, Symbol):
            key = ("s", e.name)
            self.atoms.setdefault(key, e)
            return {((key, Fraction(1)),): Fraction(1)}
        if isinstance(e, Add):
            out: dict = {}
            for a in e.args:
                _accumulate(out, self.run(a))
            return out
        if isinstance(e, Mul):
            out = {(): Fraction(1)}
            for a in e.args:
                out = _poly_mul(out, self.run(a))
                if not out:
                    return out
            return out
        if isinstance(e, Pow):
            return self._pow(e)
        return self._func(e)

    def _atom(self, key, expr, exponent=Fraction(1)) -> dict:
        self.atoms.setdefault(key, expr)
        return {((key, exponent),): Fraction(1)}

    def _pow(self, e: Pow) -> dict:
        if not isinstance(e.exp, Const):
            base = self.run(e.base)
            exp = self.run(e.exp)
            key = ("P", _poly_key(base), _poly_key(exp))
            return self._atom(key, Pow(self.rebuild(base), self.rebuild(exp)))
        k = e.exp.value
        base = self.run(e.base)
        if not base:
            if k < 0:
                raise DomainError("division by zero in canonical expansion")
            return {}
        if _is_int(k) and 0 < k <= _MAX_EXPAND:
            out = {(): Fraction(1)}
            for _ in range(int(k)):
                out = _poly_mul(out, base)
            return out
        if len(base) == 1:
            (mono, coeff), = base.items()
            if _is_int(k):
                return {_mono_pow(mono, k): _coeff_pow(coeff, k)}
            simple = coeff == 1 and len(mono) == 1 and mono[0][1] == 1
            if simple or (self.positive and coeff > 0):
                return {_mono_pow(mono, k): _coeff_pow(coeff, k)}
        key = ("p", _poly_key(base))
        return self._atom(key, self.rebuild(base), Fraction(k) if isinstance(k, Fraction) else k)

    def _func(self, e: Func) -> dict:
        arg = self.run(e.arg)
        if self.positive and e.name == "abs" and len(arg) == 1:
            (mono, coeff), = arg.items()
            if coeff > 0:
                return dict(arg)
        key = ("f", e.name, _poly_key(arg))
        return self._atom(key, Func(e.name, self.rebuild(arg)))

    def monomial(self, mono, coeff=Fraction(1)) -> Expr:
        factors = [pow_(self.atoms[a], Const(k)) for a, k in mono]
        return mul(Const(coeff), *factors)

    def rebuild(self, poly: dict) -> Expr:
        return add(*(self.monomial(m, c) for m, c in poly.items()))


def _coeff_pow(c: Number, k: Number) -> Number:
    if isinstance(c, Fraction) and _is_int(k):
        return c ** int(k)
    folded = _const_pow(c, k)
    return folded.value if folded is not None else float(c) ** float(k)


def _mono_pow(mono, k):
    return tuple((a, e * k) for a, e in mono)


def _mono_mul(m1, m2):
    if not m1:
        return m2
    if not m2:
        return m1
    exps = dict(m1)
    for a, k in m2:
        exps[a] = exps.get(a, 0) + k
    return tuple(sorted(((a, k) for a, k in exps.items() if k != 0), key=lambda p: repr(p[0])))


def _poly_mul(p1: dict, p2: dict) -> dict:
    out: dict = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            m = _mono_mul(m1, m2)
            c = out.get(m, 0) + c1 * c2
            out[m] = c
    return {m: c for m, c in out.items() if c != 0}


def _accumulate(out: dict, poly: dict):
    for m, c in poly.items():
        v = out.get(m, 0) + c
        if v == 0:
            out.pop(m, None)
        else:
            out[m] = v


def _poly_key(poly: dict):
    return tuple(sorted(poly.items(), key=repr))


def canonical_form(e: Expr, positive: bool = False) -> dict:
    """Expanded form of ``e`` as a mapping monomial key -> coefficient.

    With ``positive=True`` every symbol is assumed positive, which allows
    fractional powers to be distributed over products and ``abs`` of a
    positive monomial to be dropped.
    """
    return _Canon(positive).run(e)


def canonical_equal(a: Expr, b: Expr, positive: bool = False) -> bool:
    """True when ``a`` and ``b`` expand to the same multiset of monomials."""
    c = _Canon(positive)
    return c.run(as_expr(a)) == c.run(as_expr(b))


def term_key(e: Expr, positive: bool = False):
    """Hashable key of the canonical form, for matching terms."""
    return _poly_key(canonical_form(as_expr(e), positive))


def is_zero(e: Expr, positive: bool = False) -> bool:
    return not canonical_form(as_expr(e), positive)


def expand_to_terms(e: Expr) -> list:
    """Expand ``e`` into signed monomials whose sum equals ``e``."""
    c = _Canon()
    poly = c.run(e)
    out = []
    for mono, coeff in poly.items():
        sign = 1 if coeff > 0 else -1
        out.append(SignedTerm(sign, c.monomial(mono, abs(coeff))))
    return out


def from_terms(terms: Iterable[SignedTerm]) -> Expr:
    return add(*(t.term if t.sign > 0 else neg(t.term) for t in terms))


def simplify(e: Expr, positive: bool = False) -> Expr:
    """Rebuild ``e`` from its canonical expansion."""
    c = _Canon(positive)
    return c.rebuild(c.run(e))


def polynomial_degree(e: Expr, names: Iterable[str]) -> dict:
    """Highest exponent of each named symbol over the monomials of ``e``.

    Symbols hidden inside non-expandable atoms count as degree 1.
    """
    names = set(names)
    c = _Canon()
    poly = c.run(e)
    deg = {}
    for mono in poly:
        for atom, k in mono:
            if atom[0] == "s" and atom[1] in names:
                deg[atom[1]] = max(deg.get(atom[1], 0), k)
            else:
                for n in free_symbols(c.atoms[atom]) & names:
                    deg[n] = max(deg.get(n, 0), 1)
    return deg


# -- printing ------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _const_str(v: Number) -> str:
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return str(v.numerator)
        return f"{v.numerator}/{v.denominator}"
    return repr(v)


def _const_prec(v: Number) -> int:
    if v < 0:
        return _PREC_NEG
    if isinstance(v, Fraction) and v.denominator != 1:
        return _PREC_MUL
    if isinstance(v, float) and ("e" in repr(v) or "inf" in repr(v)):
        return _PREC_MUL
    return _PREC_ATOM


def _split_fraction(e: Mul):
    coeff = Fraction(1)
    num, den = [], []
    for a in e.args:
        if isinstance(a, Const):
            coeff = a.value
        elif isinstance(a, Pow) and isinstance(a.exp, Const) and a.exp.value < 0:
            den.append(pow_(a.base, Const(-a.exp.value)))
        else:
            num.append(a)
    return coeff, num, den


def _fmt(e: Expr):
    """Return ``(text, precedence)``."""
    if isinstance(e, Const):
        return _const_str(e.value), _const_prec(e.value)
    if isinstance(e, Symbol):
        return e.name, _PREC_ATOM
    if isinstance(e, Add):
        parts = []
        for i, a in enumerate(e.args):
            c, rest = _split_coeff(a)
            if c < 0:
                body = _paren(_mul_coeff(-c, rest) if rest != ONE else Const(-c), _PREC_MUL)
                parts.append(f"-{body}" if i == 0 else f" - {body}")
            else:
                body = _paren(a, _PREC_ADD)
                parts.append(body if i == 0 else f" + {body}")
        return "".join(parts), _PREC_ADD
    if isinstance(e, Mul):
        coeff, num, den = _split_fraction(e)
        sign = ""
        if coeff < 0:
            sign, coeff = "-", -coeff
        items = []
        if coeff != 1 or not num:
            if isinstance(coeff, Fraction) and coeff.denominator != 1 and num:
                items.append(str(coeff.numerator))
                den.insert(0, Const(Fraction(coeff.denominator)))
            else:
                items.append(_paren(Const(coeff), _PREC_MUL + 1))
        items.extend(_paren(a, _PREC_MUL + 1) for a in num)
        text = "*".join(items)
        if den:
            if len(den) == 1:
                text += "/" + _paren(den[0], _PREC_POW)
            else:
                text += "/(" + "*".join(_paren(d, _PREC_MUL + 1) for d in den) + ")"
        if sign:
            return sign + text, _PREC_NEG
        return text, _PREC_MUL
    if isinstance(e, Pow):
        if is_const(e.exp, Fraction(1, 2)):
            return f"sqrt({_fmt(e.base)[0]})", _PREC_ATOM
        if isinstance(e.exp, Const) and e.exp.value < 0:
            inv = pow_(e.base, Const(-e.exp.value))
            return f"1/{_paren(inv, _PREC_POW)}", _PREC_MUL
        return f"{_paren(e.base, _PREC_POW + 1)}**{_paren(e.exp, _PREC_POW + 1)}", _PREC_POW
    return f"{e.name}({_fmt(e.arg)[0]})", _PREC_ATOM


def _paren(e: Expr, min_prec: int) -> str:
    text, prec = _fmt(e)
    return text if prec >= min_prec else f"({text})"


def to_string(e: Expr) -> str:
    return _fmt(e)[0]


_GREEK = {
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota",
    "kappa", "lambda", "mu", "nu", "xi", "pi", "rho", "sigma", "tau", "upsilon",
    "phi", "chi", "psi", "omega", "Gamma", "Delta", "Theta", "Lambda", "Xi", "Pi",
    "Sigma", "Phi", "Psi", "Omega",
}


def latex_symbol(name: str) -> str:
    head, _, tail = name.partition("_")
    head = f"\\{head}" if head in _GREEK else head
    if tail:
        return f"{head}_{{{latex_symbol(tail) if tail in _GREEK else tail}}}"
    return head


def _latex(e: Expr):
    if isinstance(e, Const):
        v = e.value
        if isinstance(v, Fraction) and v.denominator != 1:
            body = f"\\frac{{{abs(v.numerator)}}}{{{v.denominator}}}"
            return ("- " + body if v < 0 else body), (_PREC_NEG if v < 0 else _PREC_ATOM)
        return _const_str(v), _const_prec(v)
    if isinstance(e, Symbol):
        return latex_symbol(e.name), _PREC_ATOM
    if isinstance(e, Add):
        parts = []
        for i, a in enumerate(e.args):
            c, rest = _split_coeff(a)
            if c < 0:
                body = _lparen(_mul_coeff(-c, rest) if rest != ONE else Const(-c), _PREC_MUL)
                parts.append(f"- {body}" if i == 0 else f" - {body}")
            else:
                body = _lparen(a, _PREC_ADD)
                parts.append(body if i == 0 else f" + {body}")
        return "".join(parts), _PREC_ADD
    if isinstance(e, Mul):
        coeff, num, den = _split_fraction(e)
        sign = ""
        if coeff < 0:
            sign, coeff = "- ", -coeff
        if isinstance(coeff, Fraction) and coeff.denominator != 1:
            den.insert(0, Const(Fraction(coeff.denominator)))
            coeff = Fraction(coeff.numerator)
        items = []
        if coeff != 1 or not num:
            items.append(_const_str(coeff))
        items.extend(_lparen(a, _PREC_MUL + 1) for a in num)
        text = " ".join(items)
        if den:
            text = f"\\frac{{{text}}}{{{' '.join(_lparen(d, _PREC_MUL + 1) for d in den)}}}"
        return sign + text, (_PREC_NEG if sign else _PREC_MUL)
    if isinstance(e, Pow):
        if is_const(e.exp, Fraction(1, 2)):
            return f"\\sqrt{{{_latex(e.base)[0]}}}", _PREC_ATOM
        if isinstance(e.exp, Const) and e.exp.value < 0:
            inv = pow_(e.base, Const(-e.exp.value))
            return f"\\frac{{1}}{{{_latex(inv)[0]}}}", _PREC_ATOM
        return f"{_lparen(e.base, _PREC_POW + 1)}^{{{_latex(e.exp)[0]}}}", _PREC_POW
    if e.name == "abs":
        return f"\\left|{_latex(e.arg)[0]}\\right|", _PREC_ATOM
    return f"\\{e.name}{{\\left({_latex(e.arg)[0]}\\right)}}", _PREC_ATOM


def _lparen(e: Expr, min_prec: int) -> str:
    text, prec = _latex(e)
    return text if prec >= min_prec else f"\\left({text}\\right)"


def to_latex(e: Expr) -> str:
    return _latex(e)[0]


# -- compilation to Python callables -------------------------------------

def _code(e: Expr, names: Mapping[str, str]) -> str:
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Symbol):
        try:
            return names[e.name]
        except KeyError:
            raise MissingBindingError(e.name) from None
    if isinstance(e, Add):
        return "(" + " + ".join(_code(a, names) for a in e.args) + ")"
    if isinstance(e, Mul):
        num, den = [], []
        for a in e.args:
            if isinstance(a, Pow) and isinstance(a.exp, Const) and a.exp.value < 0:
                den.append(_code(pow_(a.base, Const(-a.exp.value)), names))
            else:
                num.append(_code(a, names))
        text = " * ".join(num) if num else "1.0"
        for d in den:
            text += f" / {d}"
        return f"({text})"
    if isinstance(e, Pow):
        b = _code(e.base, names)
        if isinstance(e.exp, Const):
            k = e.exp.value
            if k == Fraction(1, 2):
                return f"_sqrt({b})"
            if _is_int(k):
                if k == 2:
                    return f"({b} * {b})"
                return f"({b} ** {int(k)})"
            return f"_rpow({b}, {float(k)!r})"
        return f"_rpow({b}, {_code(e.exp, names)})"
    return f"_{e.name}({_code(e.arg, names)})"


def _rpow(b, x):
    return _safe_pow(b, x)


_NAMESPACE = {
    "_sqrt": math.sqrt,
    "_exp": math.exp,
    "_log": math.log,
    "_sin": math.sin,
    "_cos": math.cos,
    "_abs": abs,
    "_rpow": _rpow,
}


def compile_factory(exprs: Sequence[Expr], bound: Sequence[str], args: Sequence[str]) -> Callable:
    """Generate a two-level Python closure evaluating ``exprs``.

    ``compile_factory(exprs, bound, args)(*bound_values)`` returns a
    function ``f(*arg_values) -> list[float]``.  Arithmetic runs on Python
    floats so that division by zero raises instead of producing inf; callers
    translate those exceptions into :class:`DomainError`.
    """
    names = {}
    for i, n in enumerate(bound):
        names[n] = f"_b{i}"
    for i, n in enumerate(args):
        names[n] = f"_a{i}"
    body = ", ".join(_code(e, names) for e in exprs)
    bound_sig = ", ".join(f"_b{i}" for i in range(len(bound)))
    arg_sig = ", ".join(f"_a{i}" for i in range(len(args)))
    src = (
        f"def _factory({bound_sig}):\n"
        f"    def _f({arg_sig}):\n"
        f"        return [{body}]\n"
        f"    return _f\n"
    )
    ns = dict(_NAMESPACE)
    exec(compile(src, "<odekit-generated>", "exec"), ns)
    return ns["_factory"]


def lambdify(exprs: Sequence[Expr], args: Sequence[str]) -> Callable:
    """Return ``f(*values) -> list[float]`` for the given expressions."""
    return compile_factory(exprs, (), args)()
