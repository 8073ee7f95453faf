"""Sparse multivariate polynomials with exact rational coefficients.

A :class:`Poly` lives in a fixed ambient space of ``D`` variables and maps
exponent tuples (length ``D``) to nonzero coefficients. Coefficients are
kept canonical: ``int`` when integral, otherwise a reduced ``Fraction``.

Monomials are ordered graded-lexicographically with ``t1 > t2 > ...``;
:func:`monomial_key` gives the ascending sort key.
"""

from __future__ import annotations

import re
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Iterable, Iterator, Mapping, Sequence

from .exactalg import canon

DEFAULT_DEGREE_CAP = 16

Monomial = tuple[int, ...]

__all__ = [
    "Poly",
    "Monomial",
    "DegreeCapError",
    "PolySyntaxError",
    "DEFAULT_DEGREE_CAP",
    "monomial_key",
    "monomials_of_degree",
    "parse",
    "render",
]


class DegreeCapError(ArithmeticError):
    """Raised when an operation would exceed the configured degree cap."""


class PolySyntaxError(ValueError):
    def __init__(self, message: str, pos: int, text: str = ""):
        self.pos = pos
        self.text = text
        super().__init__(f"{message} at position {pos}")


def monomial_key(m: Monomial) -> tuple:
    """Ascending graded-lex key (total degree, then lex with t1 > t2 > ...)."""
    return (sum(m), m)


def monomials_of_degree(dim: int, degree: int) -> list[Monomial]:
    """All monomials of exact total ``degree`` in ``dim`` variables, grlex descending."""
    out = []
    for combo in combinations_with_replacement(range(dim), degree):
        e = [0] * dim
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    out.sort(key=monomial_key, reverse=True)
    return out


def _add_exp(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class Poly:
    """Immutable sparse polynomial in ``ambient_dim`` variables."""

    __slots__ = ("ambient_dim", "terms", "_hash")

    def __init__(self, ambient_dim: int, terms: Mapping[Monomial, object] | None = None):
        self.ambient_dim = ambient_dim
        clean: dict[Monomial, int | Fraction] = {}
        if terms:
            for m, c in terms.items():
                m = tuple(m)
                if len(m) != ambient_dim:
                    raise ValueError(
                        f"monomial {m} has length {len(m)}, expected {ambient_dim}"
                    )
                if any(e < 0 for e in m):
                    raise ValueError(f"negative exponent in {m}")
                c = canon(c)
                if c != 0:
                    clean[m] = c
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, ambient_dim: int, terms: dict) -> "Poly":
        # trusted constructor: canonical coefficients, no zeros
        p = cls.__new__(cls)
        p.ambient_dim = ambient_dim
        p.terms = terms
        p._hash = None
        return p

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, dim: int) -> "Poly":
        return cls._raw(dim, {})

    @classmethod
    def constant(cls, dim: int, c) -> "Poly":
        c = canon(c)
        return cls._raw(dim, {(0,) * dim: c} if c != 0 else {})

    @classmethod
    def var(cls, dim: int, i: int) -> "Poly":
        if not 0 <= i < dim:
            raise IndexError(f"variable index {i} out of range for dimension {dim}")
        e = [0] * dim
        e[i] = 1
        return cls._raw(dim, {tuple(e): 1})

    @classmethod
    def monomial(cls, m: Monomial, c=1) -> "Poly":
        return cls(len(m), {tuple(m): c})

    # -- basic queries ----------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=-1)

    def constant_term(self):
        return self.terms.get((0,) * self.ambient_dim, 0)

    def variables(self) -> set[int]:
        out = set()
        for m in self.terms:
            out.update(i for i, e in enumerate(m) if e)
        return out

    def sorted_terms(self) -> list[tuple[Monomial, int | Fraction]]:
        """Terms in grlex descending order."""
        return sorted(self.terms.items(), key=lambda t: monomial_key(t[0]), reverse=True)

    def __eq__(self, other) -> bool:
        if isinstance(other, Poly):
            return self.ambient_dim == other.ambient_dim and self.terms == other.terms
        if isinstance(other, (int, Fraction)):
            return self == Poly.constant(self.ambient_dim, other)
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.ambient_dim, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Poly({render(self)!r}, D={self.ambient_dim})"

    def __str__(self) -> str:
        return render(self)

    # -- arithmetic -------------------------------------------------------

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            if other.ambient_dim != self.ambient_dim:
                raise ValueError(
                    f"ambient dimension mismatch: {self.ambient_dim} vs {other.ambient_dim}"
                )
            return other
        return Poly.constant(self.ambient_dim, other)

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        if len(other.terms) > len(self.terms):
            big, small = other.terms, self.terms
        else:
            big, small = self.terms, other.terms
        out = dict(big)
        for m, c in small.items():
            v = out.get(m, 0) + c
            if v:
                out[m] = canon(v)
            else:
                out.pop(m, None)
        return Poly._raw(self.ambient_dim, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw(self.ambient_dim, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def scale(self, c) -> "Poly":
        c = canon(c)
        if c == 0:
            return Poly.zero(self.ambient_dim)
        if c == 1:
            return self
        return Poly._raw(self.ambient_dim, {m: canon(v * c) for m, v in self.terms.items()})

    def mul(self, other, degree_cap: int | None = DEFAULT_DEGREE_CAP) -> "Poly":
        if not isinstance(other, Poly):
            return self.scale(other)
        other = self._coerce(other)
        if not self.terms or not other.terms:
            return Poly.zero(self.ambient_dim)
        if degree_cap is not None and self.degree() + other.degree() > degree_cap:
            raise DegreeCapError(
                f"product degree {self.degree() + other.degree()} exceeds cap {degree_cap}"
            )
        out: dict[Monomial, int | Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _add_exp(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Poly._raw(self.ambient_dim, {m: canon(c) for m, c in out.items() if c != 0})

    def __mul__(self, other) -> "Poly":
        return self.mul(other)

    def __rmul__(self, other) -> "Poly":
        return self.scale(other)

    def __pow__(self, k: int) -> "Poly":
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a nonnegative integer")
        out = Poly.constant(self.ambient_dim, 1)
        for _ in range(k):
            out = out * self
        return out

    # -- calculus and evaluation ------------------------------------------

    def partial(self, i: int) -> "Poly":
        """Exact partial derivative with respect to variable ``i`` (0-based)."""
        if not 0 <= i < self.ambient_dim:
            raise IndexError(f"variable index {i} out of range for dimension {self.ambient_dim}")
        out = {}
        for m, c in self.terms.items():
            e = m[i]
            if e:
                out[m[:i] + (e - 1,) + m[i + 1:]] = canon(c * e)
        return Poly._raw(self.ambient_dim, out)

    def gradient(self) -> list["Poly"]:
        return [self.partial(i) for i in range(self.ambient_dim)]

    def eval(self, point: Sequence):
        """Exact value at a rational point."""
        if len(point) != self.ambient_dim:
            raise ValueError(f"point has length {len(point)}, expected {self.ambient_dim}")
        pt = [canon(x) for x in point]
        total = 0
        for m, c in self.terms.items():
            acc = c
            for x, e in zip(pt, m):
                if e:
                    acc = acc * (x if e == 1 else x ** e)
            total += acc
        return canon(total)

    __call__ = eval

    def coefficient(self, m: Monomial):
        return self.terms.get(tuple(m), 0)


# -- text grammar ---------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<var>[A-Za-z_][A-Za-z_]*\d+)|(?P<op>\*\*|[-+*/^()]))"
)


def _tokenize(text: str, prefix: str) -> list[tuple[str, object, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolySyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        start = m.start(m.lastgroup)
        if m.group("num") is not None:
            tokens.append(("num", int(m.group("num")), start))
        elif m.group("var") is not None:
            name = m.group("var")
            if not name.startswith(prefix) or not name[len(prefix):].isdigit():
                raise PolySyntaxError(f"unknown variable {name!r}", start, text)
            idx = int(name[len(prefix):])
            if idx < 1:
                raise PolySyntaxError(f"unknown variable {name!r}", start, text)
            tokens.append(("var", idx - 1, start))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op, start))
        pos = m.end()
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    # expr   := ['+'|'-'] term (('+'|'-') term)*
    # term   := factor (('*'|'/') factor)*
    # factor := atom ['^' exponent]
    # atom   := num | var | '(' expr ')' | '-' factor

    def __init__(self, text: str, dim: int, prefix: str):
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text, prefix)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok=None):
        tok = tok or self.peek()
        raise PolySyntaxError(msg, tok[2], self.text)

    def parse(self) -> Poly:
        p = self.expr()
        if self.peek()[0] != "end":
            self.error("unexpected token")
        return p

    def expr(self) -> Poly:
        sign = 1
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        acc = self.term().scale(sign)
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                t = self.term()
                acc = acc + t if tok[1] == "+" else acc - t
            else:
                return acc

    def term(self) -> Poly:
        acc = self.factor()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "*/":
                self.take()
                f = self.factor()
                if tok[1] == "*":
                    acc = acc.mul(f, degree_cap=None)
                else:
                    if f.degree() > 0:
                        self.error("division by a non-constant", tok)
                    c = f.constant_term()
                    if c == 0:
                        self.error("division by zero", tok)
                    acc = acc.scale(Fraction(1) / c)
            else:
                return acc

    def factor(self) -> Poly:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            etok = self.peek()
            e = self.atom()
            if e.degree() > 0:
                self.error("exponent must be a constant", etok)
            k = e.constant_term()
            if isinstance(k, Fraction):
                self.error("exponent must be an integer", etok)
            if k < 0:
                self.error("negative exponent", etok)
            return base ** int(k)
        return base

    def atom(self) -> Poly:
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Poly.constant(self.dim, val)
        if kind == "var":
            if val >= self.dim:
                self.error(f"variable index {val + 1} exceeds dimension {self.dim}", tok)
            return Poly.var(self.dim, val)
        if kind == "op" and val == "(":
            p = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return p
        if kind == "op" and val == "-":
            return -self.factor()
        self.error("unexpected token", tok)


def parse(text: str, ambient_dim: int | None = None, prefix: str = "t") -> Poly:
    """Parse polynomial text such as ``"t1^2 - 3/2*t1*t2"``.

    When ``ambient_dim`` is None it is the largest variable index used
    (0 for a constant).
    """
    if ambient_dim is None:
        ambient_dim = max((v + 1 for k, v, _ in _tokenize(text, prefix) if k == "var"), default=0)
    return _Parser(text, ambient_dim, prefix).parse()


def _render_coeff(c) -> str:
    return str(c) if isinstance(c, int) else f"{c.numerator}/{c.denominator}"


def render(p: Poly, prefix: str = "t") -> str:
    """Canonical text: grlex descending terms, explicit ``*`` and ``^``."""
    if not p.terms:
        return "0"
    parts = []
    for idx, (m, c) in enumerate(p.sorted_terms()):
        neg = c < 0
        a = -c if neg else c
        factors = []
        for i, e in enumerate(m):
            if e == 1:
                factors.append(f"{prefix}{i + 1}")
            elif e > 1:
                factors.append(f"{prefix}{i + 1}^{e}")
        if not factors:
            body = _render_coeff(a)
        elif a == 1:
            body = "*".join(factors)
        else:
            body = _render_coeff(a) + "*" + "*".join(factors)
        if idx == 0:
            parts.append(("-" if neg else "") + body)
        else:
            parts.append((" - " if neg else " + ") + body)
    return "".join(parts)


def linear_combination(polys: Iterable[Poly], coeffs: Iterable, dim: int) -> Poly:
    acc: dict[Monomial, object] = {}
    for p, c in zip(polys, coeffs):
        if c == 0:
            continue
        for m, v in p.terms.items():
            acc[m] = acc.get(m, 0) + v * c
    return Poly(dim, acc)


def iter_monomials(dim: int, min_degree: int, max_degree: int) -> Iterator[Monomial]:
    for deg in range(min_degree, max_degree + 1):
        yield from monomials_of_degree(dim, deg)
