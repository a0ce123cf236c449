"""Real polynomials in the classical position and momentum operators.

Observables of the classical sector are polynomials in ``q`` and ``p`` with
real coefficients.  They are stored as a canonical mapping from the exponent
pair ``(a, b)`` to the coefficient of ``q^a p^b``.

Text grammar (whitespace-insensitive)::

    poly    := ['+' | '-'] term (('+' | '-') term)*
    term    := number ['*' factors] | factors
    factors := factor ('*' factor)*
    factor  := ('q' | 'p') ['^' integer]

e.g. ``"0.5*p^2 + 0.5*q^2"`` or ``"0.5*q^2 + p"``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<var>[qp])|(?P<op>[-+*^]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = len(text) - len(text[pos:].lstrip()) + 1
            raise DomainError(f"unexpected character {text[col - 1]!r} at column {col}")
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text) + 1)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def fail(self, msg):
        col = self.peek()[2]
        raise DomainError(f"{msg} at column {col} in polynomial {self.text!r}")

    def parse(self):
        if not self.tokens:
            raise DomainError("empty polynomial")
        terms = {}
        sign = 1.0
        kind, val, _ = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            sign = -1.0 if val == "-" else 1.0
        while True:
            coef, a, b = self.term()
            terms[(a, b)] = terms.get((a, b), 0.0) + sign * coef
            kind, val, _ = self.peek()
            if kind is None:
                break
            if kind == "op" and val in "+-":
                self.take()
                sign = -1.0 if val == "-" else 1.0
                continue
            self.fail(f"expected '+' or '-', got {val!r}")
        return terms

    def term(self):
        coef, a, b = 1.0, 0, 0
        kind, val, _ = self.peek()
        if kind == "num":
            self.take()
            coef = float(val)
            kind, val, _ = self.peek()
            if not (kind == "op" and val == "*"):
                return coef, 0, 0
            self.take()
        elif kind != "var":
            self.fail("expected a number or 'q'/'p'")
        while True:
            var, power = self.factor()
            if var == "q":
                a += power
            else:
                b += power
            kind, val, _ = self.peek()
            if kind == "op" and val == "*":
                self.take()
                continue
            return coef, a, b

    def factor(self):
        kind, val, _ = self.take()
        if kind != "var":
            self.i -= 1
            self.fail("expected 'q' or 'p'")
        power = 1
        nkind, nval, _ = self.peek()
        if nkind == "op" and nval == "^":
            self.take()
            kind, num, _ = self.take()
            if kind != "num" or not num.isdigit():
                self.i -= 1
                self.fail("expected a nonnegative integer exponent")
            power = int(num)
        return val, power


@dataclass(frozen=True)
class PolynomialObservable:
    """A real polynomial ``sum c * q^a * p^b``.

    Parameters
    ----------
    terms : iterable of (coefficient, q_power, p_power)
        Like powers are merged and zero coefficients dropped.
    """

    terms: tuple = field(default=())

    def __post_init__(self):
        merged = {}
        for coef, a, b in self.terms:
            a, b = int(a), int(b)
            if a < 0 or b < 0:
                raise DomainError("polynomial exponents must be nonnegative")
            merged[(a, b)] = merged.get((a, b), 0.0) + float(coef)
        canon = tuple((c, a, b) for (a, b), c in sorted(merged.items()) if c != 0.0)
        object.__setattr__(self, "terms", canon)

    @classmethod
    def parse(cls, text):
        """Parse the textual grammar; raises `DomainError` with a column."""
        terms = _Parser(str(text)).parse()
        return cls(tuple((c, a, b) for (a, b), c in terms.items()))

    @classmethod
    def constant(cls, value):
        return cls(((value, 0, 0),))

    @property
    def degree(self):
        return max((a + b for _, a, b in self.terms), default=0)

    @property
    def is_zero(self):
        return not self.terms

    def __call__(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        out = np.zeros(np.broadcast(q, p).shape)
        for c, a, b in self.terms:
            out = out + c * q**a * p**b
        return out if out.ndim else float(out)

    def dq(self):
        """Partial derivative with respect to q."""
        return PolynomialObservable(tuple((c * a, a - 1, b) for c, a, b in self.terms if a > 0))

    def dp(self):
        """Partial derivative with respect to p."""
        return PolynomialObservable(tuple((c * b, a, b - 1) for c, a, b in self.terms if b > 0))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = PolynomialObservable.constant(other)
        return PolynomialObservable(self.terms + other.terms)

    __radd__ = __add__

    def __mul__(self, scalar):
        return PolynomialObservable(tuple((c * float(scalar), a, b) for c, a, b in self.terms))

    __rmul__ = __mul__

    def depends_on_p(self):
        return any(b > 0 for _, _, b in self.terms)

    def depends_on_q(self):
        return any(a > 0 for _, a, _ in self.terms)

    def quadratic_form(self):
        """Return ``(a, b, c)`` with the polynomial's degree-2 part ``a q^2 + b q p + c p^2``."""
        coefs = {(a, b): c for c, a, b in self.terms}
        return coefs.get((2, 0), 0.0), coefs.get((1, 1), 0.0), coefs.get((0, 2), 0.0)

    def to_operator(self, grid):
        """Diagonal classical operator sampling the polynomial on the grid nodes."""
        from .phasespace import ClassicalOperator

        q, p = grid.mesh()
        return ClassicalOperator(grid, np.asarray(self(q, p), dtype=float))

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for c, a, b in self.terms:
            factors = [repr(abs(c))]
            if a:
                factors.append("q" if a == 1 else f"q^{a}")
            if b:
                factors.append("p" if b == 1 else f"p^{b}")
            body = "*".join(factors)
            if not parts:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append(("- " if c < 0 else "+ ") + body)
        return " ".join(parts)
