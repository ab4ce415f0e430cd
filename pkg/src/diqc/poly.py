"""Exact multivariate polynomial arithmetic over a fixed variable registry.

A polynomial is a sparse map from exponent vectors to float coefficients.
Exponent vectors always have one entry per registered variable, so two
polynomials over the same registry can be combined without re-indexing.
Term order everywhere is graded lexicographic over the registry order,
which makes printing, hashing and coefficient extraction deterministic.

This module also provides polynomial matrices (used for Jacobian blocks and
metric parametrizations) and the text grammar used by model files:

    poly     := [+-]? term ([+-] term)*
    term     := coeff | coeff '*'? factors | factors
    factors  := var ('^' int)? ('*'? var ('^' int)?)*

e.g. ``-psi - 1.5*phi^2 - 0.5 phi^3`` with whitespace insignificant and the
'*' between a coefficient and a variable optional.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Monomial = tuple  # exponent vector, one non-negative int per registry variable


class PolyError(ValueError):
    """Raised on registry mismatches, parse errors and bad dimensions."""


@dataclass(frozen=True)
class VarRegistry:
    """Ordered, immutable set of indeterminate names."""

    names: tuple

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise PolyError(f"duplicate variable names in {names}")
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise PolyError(f"unknown variable {name!r}; registry has {self.names}") from None

    def extended(self, extra: Iterable[str]) -> "VarRegistry":
        """New registry with `extra` names appended."""
        return VarRegistry(self.names + tuple(extra))


def _grlex_key(mono: Monomial):
    return (sum(mono), tuple(-e for e in mono))


class Polynomial:
    """Sparse multivariate polynomial with float coefficients.

    Zero-coefficient terms are never stored; the zero polynomial has an
    empty term map. Instances are immutable by convention (no mutating API).
    """

    __slots__ = ("registry", "terms")

    def __init__(self, registry: VarRegistry, terms: dict | None = None):
        self.registry = registry
        clean = {}
        n = len(registry)
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n:
                raise PolyError(f"exponent vector {mono} does not match registry size {n}")
            if any(e < 0 for e in mono):
                raise PolyError(f"negative exponent in {mono}")
            c = float(c)
            if c != 0.0:
                clean[mono] = clean.get(mono, 0.0) + c
        self.terms = {m: c for m, c in clean.items() if c != 0.0}

    # ---------------- constructors ----------------

    @classmethod
    def zero(cls, registry: VarRegistry) -> "Polynomial":
        return cls(registry, {})

    @classmethod
    def constant(cls, registry: VarRegistry, value: float) -> "Polynomial":
        return cls(registry, {(0,) * len(registry): value})

    @classmethod
    def variable(cls, registry: VarRegistry, var: int | str) -> "Polynomial":
        idx = registry.index(var) if isinstance(var, str) else int(var)
        mono = [0] * len(registry)
        mono[idx] = 1
        return cls(registry, {tuple(mono): 1.0})

    @classmethod
    def monomial(cls, registry: VarRegistry, mono: Sequence[int], coeff: float = 1.0) -> "Polynomial":
        return cls(registry, {tuple(mono): coeff})

    # ---------------- queries ----------------

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def degree(self) -> int:
        """Max total degree over stored terms; the zero polynomial has degree 0."""
        return max((sum(m) for m in self.terms), default=0)

    def degree_in(self, var: int) -> int:
        return max((m[var] for m in self.terms), default=0)

    def variables(self) -> set:
        """Indices of variables that actually appear."""
        out = set()
        for m in self.terms:
            out.update(i for i, e in enumerate(m) if e > 0)
        return out

    def sorted_terms(self):
        """Terms in graded-lex order, ascending."""
        return sorted(self.terms.items(), key=lambda kv: _grlex_key(kv[0]))

    # ---------------- arithmetic ----------------

    def _check(self, other: "Polynomial"):
        if self.registry != other.registry:
            raise PolyError("polynomials over different registries")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.registry, other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Polynomial(self.registry, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.registry, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.registry, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.registry, {m: c * other for m, c in self.terms.items()})
        self._check(other)
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                out[m] = out.get(m, 0.0) + c1 * c2
        return Polynomial(self.registry, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise PolyError("negative power")
        out = Polynomial.constant(self.registry, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and self.registry == other.registry
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash((self.registry, tuple(self.sorted_terms())))

    # ---------------- calculus / evaluation ----------------

    def eval(self, point: Sequence[float]) -> float:
        """Evaluate at `point` with Kahan-compensated term summation."""
        point = np.asarray(point, dtype=float)
        if point.shape != (len(self.registry),):
            raise PolyError(
                f"point of length {point.shape} does not match registry size {len(self.registry)}"
            )
        total = 0.0
        comp = 0.0
        for mono, c in self.sorted_terms():
            v = c
            for i, e in enumerate(mono):
                if e:
                    v *= point[i] ** e
            y = v - comp
            t = total + y
            comp = (t - total) - y
            total = t
        return total

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation; `points` has shape (N, n_vars)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[0])
        for mono, c in self.sorted_terms():
            v = np.full(points.shape[0], c)
            for i, e in enumerate(mono):
                if e:
                    v = v * points[:, i] ** e
            out += v
        return out

    def diff(self, var: int | str) -> "Polynomial":
        """Exact partial derivative; differentiating an absent variable gives 0."""
        idx = self.registry.index(var) if isinstance(var, str) else int(var)
        out: dict = {}
        for mono, c in self.terms.items():
            e = mono[idx]
            if e == 0:
                continue
            m = list(mono)
            m[idx] = e - 1
            out[tuple(m)] = out.get(tuple(m), 0.0) + c * e
        return Polynomial(self.registry, out)

    def reindex(self, new_registry: VarRegistry) -> "Polynomial":
        """Embed into a larger registry (every current name must exist there)."""
        pos = [new_registry.index(nm) for nm in self.registry.names]
        out: dict = {}
        for mono, c in self.terms.items():
            m = [0] * len(new_registry)
            for i, e in enumerate(mono):
                m[pos[i]] = e
            out[tuple(m)] = out.get(tuple(m), 0.0) + c
        return Polynomial(new_registry, out)

    # ---------------- formatting ----------------

    def __repr__(self):
        return f"Polynomial({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for mono, c in self.sorted_terms():
            factors = []
            for i, e in enumerate(mono):
                if e == 1:
                    factors.append(self.registry.names[i])
                elif e > 1:
                    factors.append(f"{self.registry.names[i]}^{e}")
            if not factors:
                body = f"{c:.12g}"
            elif c == 1.0:
                body = "*".join(factors)
            elif c == -1.0:
                body = "-" + "*".join(factors)
            else:
                body = f"{c:.12g}*" + "*".join(factors)
            parts.append(body)
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out


def poly_eval(p: Polynomial, point: Sequence[float]) -> float:
    return p.eval(point)


def poly_diff(p: Polynomial, var: int | str) -> Polynomial:
    return p.diff(var)


# ---------------------------------------------------------------------------
# polynomial matrices
# ---------------------------------------------------------------------------


class PolyMatrix:
    """Dense matrix of polynomials over a shared registry."""

    __slots__ = ("registry", "rows", "cols", "entries", "symmetric")

    def __init__(self, registry: VarRegistry, rows: int, cols: int,
                 entries: Sequence[Polynomial] | None = None, symmetric: bool = False):
        if rows <= 0 or cols <= 0:
            raise PolyError("matrix dimensions must be positive")
        self.registry = registry
        self.rows = rows
        self.cols = cols
        if entries is None:
            entries = [Polynomial.zero(registry) for _ in range(rows * cols)]
        entries = list(entries)
        if len(entries) != rows * cols:
            raise PolyError("entry count does not match dimensions")
        for e in entries:
            if e.registry != registry:
                raise PolyError("matrix entry over a different registry")
        self.entries = entries
        self.symmetric = symmetric
        if symmetric:
            if rows != cols:
                raise PolyError("symmetric matrix must be square")
            for i in range(rows):
                for j in range(i + 1, cols):
                    if not (self.entry(i, j) - self.entry(j, i)).is_zero():
                        raise PolyError(f"symmetry violated at ({i},{j})")

    @classmethod
    def from_rows(cls, registry: VarRegistry, rows_of_entries, symmetric: bool = False) -> "PolyMatrix":
        r = len(rows_of_entries)
        c = len(rows_of_entries[0])
        flat = []
        for row in rows_of_entries:
            if len(row) != c:
                raise PolyError("ragged rows")
            flat.extend(row)
        return cls(registry, r, c, flat, symmetric=symmetric)

    @classmethod
    def from_array(cls, registry: VarRegistry, arr, symmetric: bool = False) -> "PolyMatrix":
        """Constant matrix from a numeric array."""
        arr = np.atleast_2d(np.asarray(arr, dtype=float))
        flat = [Polynomial.constant(registry, v) for v in arr.ravel()]
        return cls(registry, arr.shape[0], arr.shape[1], flat, symmetric=symmetric)

    def entry(self, i: int, j: int) -> Polynomial:
        return self.entries[i * self.cols + j]

    def transpose(self) -> "PolyMatrix":
        flat = [self.entry(j, i) for i in range(self.cols) for j in range(self.rows)]
        return PolyMatrix(self.registry, self.cols, self.rows, flat)

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise PolyError("dimension mismatch in matrix add")
        flat = [a + b for a, b in zip(self.entries, other.entries)]
        return PolyMatrix(self.registry, self.rows, self.cols, flat)

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.cols != other.rows:
            raise PolyError("dimension mismatch in matrix product")
        flat = []
        for i in range(self.rows):
            for j in range(other.cols):
                acc = Polynomial.zero(self.registry)
                for t in range(self.cols):
                    acc = acc + self.entry(i, t) * other.entry(t, j)
                flat.append(acc)
        return PolyMatrix(self.registry, self.rows, other.cols, flat)

    def scale(self, s: float) -> "PolyMatrix":
        return PolyMatrix(self.registry, self.rows, self.cols, [e * s for e in self.entries])

    def eval(self, point: Sequence[float]) -> np.ndarray:
        out = np.empty((self.rows, self.cols))
        for i in range(self.rows):
            for j in range(self.cols):
                out[i, j] = self.entry(i, j).eval(point)
        return out

    def max_degree(self) -> int:
        return max((e.degree() for e in self.entries), default=0)

    def reindex(self, new_registry: VarRegistry) -> "PolyMatrix":
        return PolyMatrix(new_registry, self.rows, self.cols,
                          [e.reindex(new_registry) for e in self.entries],
                          symmetric=self.symmetric)

    def __repr__(self):
        body = "; ".join(
            ", ".join(str(self.entry(i, j)) for j in range(self.cols)) for i in range(self.rows)
        )
        return f"PolyMatrix[{self.rows}x{self.cols}]({body})"


def jacobian(field_polys: Sequence[Polynomial], vars_idx: Sequence[int]) -> PolyMatrix:
    """Jacobian matrix: entry (i, j) = d field_i / d vars_j."""
    field_polys = list(field_polys)
    vars_idx = list(vars_idx)
    if not field_polys or not vars_idx:
        raise PolyError("jacobian needs a nonempty field and variable list")
    reg = field_polys[0].registry
    for p in field_polys:
        if p.registry != reg:
            raise PolyError("jacobian field over mixed registries")
    flat = [p.diff(v) for p in field_polys for v in vars_idx]
    return PolyMatrix(reg, len(field_polys), len(vars_idx), flat)


def scalarize_quadratic(M: PolyMatrix, yvars: Sequence[int]) -> Polynomial:
    """Return y' M y as a polynomial, quadratic in the scalarization variables.

    M must be symmetric and must not involve any of the y variables.
    """
    yvars = list(yvars)
    if not M.symmetric:
        raise PolyError("scalarize_quadratic needs a symmetric matrix")
    if len(yvars) != M.rows:
        raise PolyError("scalarization variable count must match matrix dimension")
    used = set()
    for e in M.entries:
        used |= e.variables()
    if used & set(yvars):
        raise PolyError("matrix entries must not involve the scalarization variables")
    reg = M.registry
    out = Polynomial.zero(reg)
    for i in range(M.rows):
        for j in range(M.cols):
            yi = Polynomial.variable(reg, yvars[i])
            yj = Polynomial.variable(reg, yvars[j])
            out = out + yi * yj * M.entry(i, j)
    return out


# ---------------------------------------------------------------------------
# text grammar
# ---------------------------------------------------------------------------

_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(
    rf"\s*(?:(?P<num>{_NUM})|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^()]))"
)


def parse_poly(text: str, registry: VarRegistry) -> Polynomial:
    """Parse the model-file expression grammar into a Polynomial.

    Supports +/- separated terms, optional '*' between factors, integer
    exponents via '^', and parentheses-free expressions only (the grammar is
    deliberately flat). Raises PolyError with a character position on bad
    input.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip() == "":
                break
            raise PolyError(f"cannot tokenize polynomial at position {pos}: {text[pos:]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
    tokens.append(("end", ""))

    result = Polynomial.zero(registry)
    i = 0
    sign = 1.0
    # leading sign
    while tokens[i] == ("op", "+") or tokens[i] == ("op", "-"):
        if tokens[i] == ("op", "-"):
            sign = -sign
        i += 1

    def parse_term(i, sign):
        coeff = sign
        mono = [0] * len(registry)
        saw_factor = False
        expect_factor = True
        while True:
            kind, val = tokens[i]
            if kind == "num":
                if not expect_factor:
                    raise PolyError(f"unexpected number {val}; missing '+' or '-'?")
                coeff *= val
                i += 1
                saw_factor = True
                expect_factor = False
            elif kind == "name":
                idx = registry.index(val)
                exp = 1
                i += 1
                if tokens[i] == ("op", "^"):
                    kind2, val2 = tokens[i + 1]
                    if kind2 != "num" or val2 != int(val2):
                        raise PolyError(f"exponent must be a non-negative integer near {val!r}")
                    exp = int(val2)
                    i += 2
                mono[idx] += exp
                saw_factor = True
                expect_factor = False
            elif (kind, val) == ("op", "*"):
                if expect_factor:
                    raise PolyError("unexpected '*'")
                i += 1
                expect_factor = True
            else:
                break
        if not saw_factor:
            raise PolyError("empty term in polynomial")
        if expect_factor:
            raise PolyError("dangling '*' in polynomial")
        return i, Polynomial.monomial(registry, mono, coeff)

    i, term = parse_term(i, sign)
    result = result + term
    while tokens[i][0] == "op" and tokens[i][1] in "+-":
        sign = 1.0
        while tokens[i][0] == "op" and tokens[i][1] in "+-":
            if tokens[i][1] == "-":
                sign = -sign
            i += 1
        i, term = parse_term(i, sign)
        result = result + term
    if tokens[i][0] != "end":
        raise PolyError(f"unexpected token {tokens[i][1]!r} in polynomial {text!r}")
    return result
