"""Exact sparse multivariate polynomial arithmetic over Q and Q(sqrt(d)).

All values are immutable after construction and every operation is a pure
function, so they can be shared freely across threads.  Coefficients live in
the quadratic extension Q(sqrt(d)) for a single square-free radicand d; plain
rationals are the d = 0 case.  Nothing here ever rounds.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

#: Degree assigned to the identically-zero polynomial.
INF_DEGREE = math.inf

RationalLike = Union[int, Fraction]


class FieldMismatchError(ValueError):
    """Combining scalars from two different quadratic extensions."""


def _is_square_free(n: int) -> bool:
    if n < 0:
        return False
    k = 2
    while k * k <= n:
        if n % (k * k) == 0:
            return False
        k += 1
    return True


class Scalar:
    """Exact number a + b*sqrt(d), with a, b rational and d square-free >= 0.

    When b = 0 the radicand is normalised to 0, so plain rationals from
    different sources always combine.  Two scalars with b != 0 may only be
    combined when their radicands agree.
    """

    __slots__ = ("a", "b", "d")

    def __init__(self, a: RationalLike = 0, b: RationalLike = 0, d: int = 0):
        a = a if isinstance(a, Fraction) else Fraction(a)
        b = b if isinstance(b, Fraction) else Fraction(b)
        if d < 0 or not isinstance(d, int):
            raise ValueError(f"radicand must be a nonnegative integer, got {d!r}")
        if not _is_square_free(d):
            raise ValueError(f"radicand must be square-free, got {d}")
        if d == 0:
            b = Fraction(0)
        elif d == 1:
            a, b, d = a + b, Fraction(0), 0
        if b == 0:
            d = 0
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", d)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("Scalar is immutable")

    # -- coercion helpers -------------------------------------------------

    @staticmethod
    def coerce(value: "Scalar | RationalLike") -> "Scalar":
        if isinstance(value, Scalar):
            return value
        if isinstance(value, (int, Fraction)):
            return Scalar(value)
        raise TypeError(f"cannot interpret {value!r} as an exact scalar")

    def _join_d(self, other: "Scalar") -> int:
        if self.d == other.d:
            return self.d
        if self.b == 0:
            return other.d
        if other.b == 0:
            return self.d
        raise FieldMismatchError(
            f"cannot mix sqrt({self.d}) and sqrt({other.d}) coefficients"
        )

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        try:
            other = Scalar.coerce(other)
        except TypeError:
            return NotImplemented
        d = self._join_d(other)
        return Scalar(self.a + other.a, self.b + other.b, d)

    __radd__ = __add__

    def __neg__(self):
        return Scalar(-self.a, -self.b, self.d)

    def __sub__(self, other):
        try:
            other = Scalar.coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        try:
            other = Scalar.coerce(other)
        except TypeError:
            return NotImplemented
        d = self._join_d(other)
        return Scalar(
            self.a * other.a + self.b * other.b * d,
            self.a * other.b + self.b * other.a,
            d,
        )

    __rmul__ = __mul__

    def conjugate(self) -> "Scalar":
        return Scalar(self.a, -self.b, self.d)

    def __truediv__(self, other):
        try:
            other = Scalar.coerce(other)
        except TypeError:
            return NotImplemented
        if other.is_zero():
            raise ZeroDivisionError("division by zero scalar")
        d = self._join_d(other)
        # norm a^2 - d b^2 is nonzero for nonzero elements (sqrt(d) irrational)
        norm = other.a * other.a - other.b * other.b * d
        conj = Scalar(other.a, -other.b, d)
        num = self * conj
        return Scalar(num.a / norm, num.b / norm, d)

    def __rtruediv__(self, other):
        return Scalar.coerce(other) / self

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("scalar powers must be nonnegative integers")
        out = Scalar(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return self.a == 0 and self.b == 0

    def is_rational(self) -> bool:
        return self.b == 0

    def sign(self) -> int:
        """Exact sign of a + b*sqrt(d): -1, 0 or +1."""
        if self.b == 0:
            return -1 if self.a < 0 else (1 if self.a > 0 else 0)
        if self.a == 0:
            return -1 if self.b < 0 else 1
        if self.a > 0 and self.b > 0:
            return 1
        if self.a < 0 and self.b < 0:
            return -1
        # opposite signs: compare a^2 against d b^2
        lhs, rhs = self.a * self.a, self.b * self.b * self.d
        if self.a > 0:  # b < 0
            return 1 if lhs > rhs else -1
        return 1 if lhs < rhs else -1  # a < 0, b > 0; ties impossible

    def __bool__(self) -> bool:
        return not self.is_zero()

    def __eq__(self, other) -> bool:
        try:
            other = Scalar.coerce(other)
        except TypeError:
            return NotImplemented
        return self.a == other.a and self.b == other.b and self.d == other.d

    def __hash__(self) -> int:
        return hash((self.a, self.b, self.d))

    def __lt__(self, other) -> bool:
        other = Scalar.coerce(other)
        return (self - other).sign() < 0

    def __le__(self, other) -> bool:
        other = Scalar.coerce(other)
        return (self - other).sign() <= 0

    def __gt__(self, other) -> bool:
        return not self <= other

    def __ge__(self, other) -> bool:
        return not self < other

    def __float__(self) -> float:
        return float(self.a) + float(self.b) * math.sqrt(self.d)

    # -- rendering ---------------------------------------------------------

    def to_text(self) -> str:
        """Render in the scalar grammar, e.g. ``7/10*sqrt(2)`` or ``-1/3``."""
        if self.b == 0:
            return _fraction_text(self.a)
        surd = f"{_fraction_text(self.b)}*sqrt({self.d})"
        if self.a == 0:
            return surd
        sep = "+" if self.b > 0 else ""
        return f"{_fraction_text(self.a)}{sep}{surd}"

    def __str__(self) -> str:
        return self.to_text()

    def __repr__(self) -> str:
        if self.b == 0:
            return f"Scalar({self.a})"
        return f"Scalar({self.a}, {self.b}, d={self.d})"


def _fraction_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


ONE = Scalar(1)
ZERO = Scalar(0)

#: A monomial is the tuple of variable exponents (j_1, ..., j_p).
Monomial = tuple  # tuple[int, ...]


def monomial_degree(mono: Monomial) -> int:
    return sum(mono)


def _grlex_key(mono: Monomial):
    return (sum(mono), mono)


@dataclass(frozen=True)
class HomogeneousDecomposition:
    """Split p = low + rest where low is the minimal-degree homogeneous part."""

    low: "MultiPoly"
    rest: "MultiPoly"
    low_degree: int | float  # INF_DEGREE for the zero polynomial


class MultiPoly:
    """Sparse multivariate polynomial with exact Scalar coefficients.

    Canonical form: zero coefficients are never stored, so equality is
    term-map equality.  Instances are immutable; all operations return new
    polynomials.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict | None = None):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        clean: dict[Monomial, Scalar] = {}
        for mono, coeff in (terms or {}).items():
            mono = tuple(mono)
            if len(mono) != nvars or any(e < 0 or not isinstance(e, int) for e in mono):
                raise ValueError(f"bad monomial {mono!r} for {nvars} variables")
            coeff = Scalar.coerce(coeff)
            if not coeff.is_zero():
                clean[mono] = clean[mono] + coeff if mono in clean else coeff
        clean = {m: c for m, c in clean.items() if not c.is_zero()}
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):  # pragma: no cover - defensive
        raise AttributeError("MultiPoly is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "MultiPoly":
        return cls(nvars, {})

    @classmethod
    def constant(cls, value, nvars: int) -> "MultiPoly":
        return cls(nvars, {(0,) * nvars: Scalar.coerce(value)})

    @classmethod
    def variable(cls, index: int, nvars: int) -> "MultiPoly":
        if not 0 <= index < nvars:
            raise IndexError(f"variable index {index} out of range for {nvars} variables")
        mono = tuple(1 if i == index else 0 for i in range(nvars))
        return cls(nvars, {mono: ONE})

    # -- ring operations ----------------------------------------------------

    def _check_compatible(self, other: "MultiPoly") -> None:
        if self.nvars != other.nvars:
            raise ValueError(
                f"variable-count mismatch: {self.nvars} vs {other.nvars}"
            )
        d1, d2 = self.field_d(), other.field_d()
        if d1 and d2 and d1 != d2:
            raise FieldMismatchError(
                f"cannot mix sqrt({d1}) and sqrt({d2}) polynomials"
            )

    def __add__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            other = MultiPoly.constant(other, self.nvars)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        self._check_compatible(other)
        out = dict(self.terms)
        for mono, coeff in other.terms.items():
            out[mono] = out[mono] + coeff if mono in out else coeff
        return MultiPoly(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            other = MultiPoly.constant(other, self.nvars)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, Scalar)):
            return self.scale(other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        self._check_compatible(other)
        out: dict[Monomial, Scalar] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = tuple(e1 + e2 for e1, e2 in zip(m1, m2))
                prod = c1 * c2
                out[mono] = out[mono] + prod if mono in out else prod
        return MultiPoly(self.nvars, out)

    __rmul__ = __mul__

    def scale(self, value) -> "MultiPoly":
        value = Scalar.coerce(value)
        if value.is_zero():
            return MultiPoly.zero(self.nvars)
        return MultiPoly(self.nvars, {m: c * value for m, c in self.terms.items()})

    def __pow__(self, n: int):
        if not isinstance(n, int) or n < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        out = MultiPoly.constant(1, self.nvars)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction, Scalar)):
            other = MultiPoly.constant(other, self.nvars)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    __hash__ = None  # mutable-dict backed; use equality only

    # -- degree and structure queries ----------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def total_degree(self) -> int | float:
        """Maximal total degree; -inf for the zero polynomial."""
        if not self.terms:
            return -math.inf
        return max(sum(m) for m in self.terms)

    def lowest_degree(self) -> int | float:
        """Minimal total degree among stored terms; INF_DEGREE when zero."""
        if not self.terms:
            return INF_DEGREE
        return min(sum(m) for m in self.terms)

    def sorted_terms(self) -> list[tuple[Monomial, Scalar]]:
        """Terms in graded lexicographic order (degree, then exponents)."""
        return sorted(self.terms.items(), key=lambda kv: _grlex_key(kv[0]))

    def field_d(self) -> int:
        """The radicand shared by surd coefficients (0 if all rational)."""
        for coeff in self.terms.values():
            if coeff.d:
                return coeff.d
        return 0

    # -- calculus and rewriting ----------------------------------------------

    def partial_derivative(self, var: int) -> "MultiPoly":
        if not 0 <= var < self.nvars:
            raise IndexError(f"variable index {var} out of range")
        out: dict[Monomial, Scalar] = {}
        for mono, coeff in self.terms.items():
            e = mono[var]
            if e == 0:
                continue
            new = list(mono)
            new[var] = e - 1
            out[tuple(new)] = coeff * e
        return MultiPoly(self.nvars, out)

    def shift_origin(self, theta_bar: Sequence) -> "MultiPoly":
        """Return q(u) = p(theta_bar + u), expanded exactly."""
        if len(theta_bar) != self.nvars:
            raise ValueError(
                f"shift point has {len(theta_bar)} entries, expected {self.nvars}"
            )
        shift = [Scalar.coerce(t) for t in theta_bar]
        out = MultiPoly.zero(self.nvars)
        for mono, coeff in self.sorted_terms():
            term = MultiPoly.constant(coeff, self.nvars)
            for k, e in enumerate(mono):
                if e == 0:
                    continue
                factor = MultiPoly.variable(k, self.nvars) + shift[k]
                term = term * factor**e
            out = out + term
        return out

    def homogeneous_component(self, degree: int) -> "MultiPoly":
        """Sum of all terms of exactly the given total degree."""
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        return MultiPoly(
            self.nvars, {m: c for m, c in self.terms.items() if sum(m) == degree}
        )

    def lowest_homogeneous_part(self) -> HomogeneousDecomposition:
        if not self.terms:
            return HomogeneousDecomposition(self, self, INF_DEGREE)
        deg = int(self.lowest_degree())
        low = self.homogeneous_component(deg)
        return HomogeneousDecomposition(low, self - low, deg)

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, point: Sequence):
        """Evaluate at a point.

        Exact Scalar result when every entry is an int/Fraction/Scalar;
        otherwise a float, summing terms in graded lexicographic order.
        """
        if len(point) != self.nvars:
            raise ValueError(f"point has {len(point)} entries, expected {self.nvars}")
        exact = all(isinstance(x, (int, Fraction, Scalar)) for x in point)
        if exact:
            pt = [Scalar.coerce(x) for x in point]
            total = Scalar(0)
            for mono, coeff in self.sorted_terms():
                val = coeff
                for x, e in zip(pt, mono):
                    if e:
                        val = val * x**e
                total = total + val
            return total
        pt_f = [float(x) for x in point]
        acc = 0.0
        for mono, coeff in self.sorted_terms():
            val = float(coeff)
            for x, e in zip(pt_f, mono):
                if e:
                    val *= x**e
            acc += val
        return acc

    # -- rendering ---------------------------------------------------------------

    def to_text(self, var_names: Sequence[str]) -> str:
        """Render in the polynomial grammar using the given variable names."""
        if len(var_names) != self.nvars:
            raise ValueError("var_names length must equal nvars")
        if not self.terms:
            return "0"
        pieces: list[str] = []
        for mono, coeff in self.sorted_terms():
            # a + b*sqrt(d) splits into a rational term and a surd term
            parts = [Scalar(coeff.a)] if coeff.a else []
            if coeff.b:
                parts.append(Scalar(0, coeff.b, coeff.d))
            for part in parts:
                pieces.append(_term_text(part, mono, var_names))
        text = pieces[0]
        for piece in pieces[1:]:
            if piece.startswith("-"):
                text += " - " + piece[1:]
            else:
                text += " + " + piece
        return text

    def __str__(self) -> str:
        return self.to_text([f"x{i}" for i in range(self.nvars)])

    def __repr__(self) -> str:
        return f"MultiPoly({self.nvars}, {dict(self.sorted_terms())!r})"


def _term_text(coeff: Scalar, mono: Monomial, var_names: Sequence[str]) -> str:
    vars_part = "*".join(
        name if e == 1 else f"{name}^{e}"
        for name, e in zip(var_names, mono)
        if e > 0
    )
    if not vars_part:
        return coeff.to_text()
    if coeff == ONE:
        return vars_part
    if coeff == Scalar(-1):
        return "-" + vars_part
    return f"{coeff.to_text()}*{vars_part}"


# ---------------------------------------------------------------------------
# Text grammar
#
#   poly   ::= [sign] term (('+'|'-') term)*
#   term   ::= factor ('*' factor)*
#   factor ::= number ['/' uint] | 'sqrt' '(' uint ')' | ident ['^' uint]
#   number ::= digits ['.' digits]
#
# Whitespace is insignificant.  Decimal literals parse to exact rationals.
# ---------------------------------------------------------------------------


class PolyParseError(ValueError):
    """Parse failure with a 1-based line/column location."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<number>\d+(?:\.\d+)?)
      | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
      | (?P<op>[-+*/^()−])
    """,
    re.VERBOSE,
)


def _tokenize(text: str, line: int) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolyParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
        if m.lastgroup != "ws":
            value = m.group()
            if m.lastgroup == "op" and value == "−":
                value = "-"
            tokens.append((m.lastgroup, value, pos + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, line: int):
        self.tokens = tokens
        self.line = line
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise PolyParseError("unexpected end of input", self.line, 0)
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.next()
        if tok[1] != value:
            raise PolyParseError(f"expected {value!r}, got {tok[1]!r}", self.line, tok[2])
        return tok

    def error(self, message: str):
        tok = self.peek()
        col = tok[2] if tok else 0
        raise PolyParseError(message, self.line, col)


def _parse_number(parser: _Parser) -> Fraction:
    kind, value, col = parser.next()
    if kind != "number":
        raise PolyParseError(f"expected a number, got {value!r}", parser.line, col)
    num = Fraction(value)
    tok = parser.peek()
    if tok is not None and tok[1] == "/":
        parser.next()
        kind2, value2, col2 = parser.next()
        if kind2 != "number" or "." in value2:
            raise PolyParseError("denominator must be an integer", parser.line, col2)
        num /= Fraction(value2)
    return num


def _parse_term(parser: _Parser, var_names: Sequence[str]) -> tuple[Scalar, Monomial]:
    coeff = Scalar(1)
    exponents = [0] * len(var_names)
    while True:
        tok = parser.peek()
        if tok is None:
            parser.error("empty term")
        kind, value, col = tok
        if kind == "number":
            coeff = coeff * Scalar(_parse_number(parser))
        elif kind == "ident" and value == "sqrt":
            parser.next()
            parser.expect("(")
            kind2, value2, col2 = parser.next()
            if kind2 != "number" or "." in value2:
                raise PolyParseError("sqrt radicand must be an integer", parser.line, col2)
            parser.expect(")")
            try:
                surd = Scalar(0, 1, int(value2))
            except ValueError as exc:
                raise PolyParseError(str(exc), parser.line, col2) from exc
            coeff = coeff * surd
        elif kind == "ident":
            parser.next()
            if value not in var_names:
                raise PolyParseError(f"unknown variable {value!r}", parser.line, col)
            power = 1
            nxt = parser.peek()
            if nxt is not None and nxt[1] == "^":
                parser.next()
                kind2, value2, col2 = parser.next()
                if kind2 != "number" or "." in value2:
                    raise PolyParseError("exponent must be an integer", parser.line, col2)
                power = int(value2)
            exponents[var_names.index(value)] += power
        else:
            parser.error(f"unexpected token {value!r} in term")
        nxt = parser.peek()
        if nxt is not None and nxt[1] == "*":
            parser.next()
            continue
        break
    return coeff, tuple(exponents)


def parse_polynomial(text: str, var_names: Sequence[str], line: int = 1) -> MultiPoly:
    """Parse the polynomial grammar into a MultiPoly over the named variables."""
    tokens = _tokenize(text, line)
    if not tokens:
        raise PolyParseError("empty polynomial", line, 1)
    parser = _Parser(tokens, line)
    poly = MultiPoly.zero(len(var_names))
    sign = 1
    tok = parser.peek()
    if tok is not None and tok[1] in "+-":
        parser.next()
        sign = -1 if tok[1] == "-" else 1
    while True:
        coeff, mono = _parse_term(parser, var_names)
        poly = poly + MultiPoly(len(var_names), {mono: coeff * sign})
        tok = parser.peek()
        if tok is None:
            return poly
        if tok[1] not in "+-":
            raise PolyParseError(f"expected '+' or '-', got {tok[1]!r}", line, tok[2])
        parser.next()
        sign = -1 if tok[1] == "-" else 1


def parse_scalar(text: str, line: int = 1) -> Scalar:
    """Parse a single scalar entry, e.g. ``-7/10*sqrt(2)``, ``0.98`` or ``3``."""
    poly = parse_polynomial(text, [], line=line)
    return poly.terms.get((), Scalar(0))
