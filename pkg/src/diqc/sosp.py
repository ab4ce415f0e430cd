"""Compile polynomial matrix inequalities over semialgebraic regions into
standard-form semidefinite programs.

The pipeline is the classical Gram-matrix reduction. A scalar constraint
"p is a sum of squares" becomes: find G >= 0 with p = m' G m for a monomial
basis m, matching coefficients monomial by monomial. A matrix constraint
"M(rho) < 0 for all rho in the region {g_i(rho) >= 0}" is scalarized with an
auxiliary vector y:

    -y' M(rho) y - sum_i sigma_i(rho, y) g_i(rho) - eps |y|^2  is SOS,

with each S-procedure multiplier sigma_i itself SOS and quadratic in y.
Because every term is homogeneous quadratic in y, all Gram bases are
restricted to monomials linear in y, which keeps the blocks small.

Decision variables (metric coefficients, multiplier weights, the gain) enter
affinely; the assembled SdpProblem is a plain data object solved by `conic`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .poly import Monomial, Polynomial, PolyError, PolyMatrix, VarRegistry

EPS_LMI = 1e-6  # strict "< 0" margin: M <= -EPS_LMI * I


class SosError(ValueError):
    pass


def monomial_basis(n_vars: int, vars_idx, max_deg: int):
    """All monomials of total degree <= max_deg in the given variables,
    graded-lex ordered, as exponent tuples over the full registry."""
    vars_idx = list(vars_idx)
    if max_deg < 0:
        raise SosError("max_deg must be nonnegative")
    out = []
    for deg in range(max_deg + 1):
        for combo in itertools.combinations_with_replacement(vars_idx, deg):
            mono = [0] * n_vars
            for v in combo:
                mono[v] += 1
            out.append(tuple(mono))
    seen = set()
    uniq = []
    for m in out:
        if m not in seen:
            seen.add(m)
            uniq.append(m)
    uniq.sort(key=lambda m: (sum(m), tuple(-e for e in m)))
    return uniq


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# decision-affine polynomials
# ---------------------------------------------------------------------------

CONST = -1


class AffinePoly:
    """Polynomial whose coefficients are affine in scalar decision variables.

    Stored as {decision_index: Polynomial}; the key CONST carries the
    decision-free part. Products are only defined against decision-free
    polynomials, which keeps everything affine by construction.
    """

    __slots__ = ("registry", "parts")

    def __init__(self, registry: VarRegistry, parts=None):
        self.registry = registry
        self.parts = {}
        for k, p in (parts or {}).items():
            if p.registry != registry:
                raise SosError("affine part over a different registry")
            if not p.is_zero():
                self.parts[k] = p

    @classmethod
    def const(cls, p: Polynomial) -> "AffinePoly":
        return cls(p.registry, {CONST: p})

    @classmethod
    def decision(cls, registry: VarRegistry, dec: int, coeff: Polynomial | float = 1.0) -> "AffinePoly":
        if not isinstance(coeff, Polynomial):
            coeff = Polynomial.constant(registry, coeff)
        return cls(registry, {dec: coeff})

    @classmethod
    def zero(cls, registry: VarRegistry) -> "AffinePoly":
        return cls(registry, {})

    def __add__(self, other):
        if isinstance(other, Polynomial):
            other = AffinePoly.const(other)
        out = dict(self.parts)
        for k, p in other.parts.items():
            out[k] = out[k] + p if k in out else p
        return AffinePoly(self.registry, out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s: float) -> "AffinePoly":
        return AffinePoly(self.registry, {k: p * s for k, p in self.parts.items()})

    def mul_poly(self, q: Polynomial) -> "AffinePoly":
        return AffinePoly(self.registry, {k: p * q for k, p in self.parts.items()})

    def diff(self, var: int) -> "AffinePoly":
        return AffinePoly(self.registry, {k: p.diff(var) for k, p in self.parts.items()})

    def degree(self) -> int:
        return max((p.degree() for p in self.parts.values()), default=0)

    def coefficient_map(self):
        """{monomial: ({dec: coef}, const_coef)} over all appearing monomials."""
        out = {}
        for k, p in self.parts.items():
            for mono, c in p.terms.items():
                dec_map, const = out.setdefault(mono, ({}, 0.0))
                if k == CONST:
                    out[mono] = (dec_map, const + c)
                else:
                    dec_map[k] = dec_map.get(k, 0.0) + c
        return out

    def eval_with(self, decisions, point) -> float:
        """Numeric value given decision values and a variable point."""
        total = 0.0
        for k, p in self.parts.items():
            v = p.eval(point)
            total += v if k == CONST else v * decisions[k]
        return total

    def is_zero(self) -> bool:
        return not self.parts


class AffinePolyMatrix:
    """Symmetric matrix of AffinePoly entries."""

    def __init__(self, registry: VarRegistry, dim: int):
        self.registry = registry
        self.dim = dim
        self.entries = [[AffinePoly.zero(registry) for _ in range(dim)] for _ in range(dim)]

    def add(self, i: int, j: int, val: AffinePoly | Polynomial):
        if isinstance(val, Polynomial):
            val = AffinePoly.const(val)
        self.entries[i][j] = self.entries[i][j] + val
        if i != j:
            self.entries[j][i] = self.entries[j][i] + val

    def entry(self, i: int, j: int) -> AffinePoly:
        return self.entries[i][j]

    def eval_with(self, decisions, point) -> np.ndarray:
        out = np.empty((self.dim, self.dim))
        for i in range(self.dim):
            for j in range(self.dim):
                out[i, j] = self.entries[i][j].eval_with(decisions, point)
        return 0.5 * (out + out.T)

    def max_degree(self) -> int:
        return max(
            (self.entries[i][j].degree() for i in range(self.dim) for j in range(self.dim)),
            default=0,
        )


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Semialgebraic set {rho : g_i(rho) >= 0} with a sampling box per variable.

    `box` maps variable index to (lo, hi) and is used only for Monte-Carlo
    verification sampling (rejection against the generators); variables
    without an explicit box default to [-1, 1].
    """

    generators: tuple = ()
    box: tuple = ()   # ((var_idx, lo, hi), ...)

    @classmethod
    def make(cls, generators=(), box=None) -> "Region":
        box_t = tuple((int(i), float(lo), float(hi)) for i, (lo, hi) in (box or {}).items())
        return cls(tuple(generators), box_t)

    def sample(self, rng, n_samples: int, n_vars: int, active_vars=None) -> np.ndarray:
        """Uniform points in the box hull, rejection-filtered by the generators."""
        boxes = {i: (lo, hi) for i, lo, hi in self.box}
        active = set(active_vars) if active_vars is not None else set(range(n_vars))
        for g in self.generators:
            active |= g.variables()
        out = []
        attempts = 0
        while len(out) < n_samples and attempts < 200 * max(n_samples, 1):
            attempts += 1
            pt = np.zeros(n_vars)
            for i in range(n_vars):
                if i in active:
                    lo, hi = boxes.get(i, (-1.0, 1.0))
                    pt[i] = rng.uniform(lo, hi)
            if all(g.eval(pt) >= 0.0 for g in self.generators):
                out.append(pt)
        if len(out) < n_samples:
            raise SosError("region sampling failed: generators reject the box hull")
        return np.array(out)


# ---------------------------------------------------------------------------
# SDP problem container and builder
# ---------------------------------------------------------------------------


@dataclass
class SdpProblem:
    """Standard-form SDP: minimize c'u over scalars u and PSD blocks X_b
    subject to affine rows  sum_s a_s u_s + sum_b <A_b, X_b> = rhs.

    Block coefficients address upper-triangle entries (b, i, j) with i <= j;
    the coefficient multiplies the stored entry X_b[i, j] of the symmetric
    block.
    """

    n_scalars: int = 0
    scalar_names: list = field(default_factory=list)
    block_dims: list = field(default_factory=list)
    rows: list = field(default_factory=list)   # (scalar_terms, block_terms, rhs)
    objective: dict = field(default_factory=dict)


class SdpBuilder:
    """Incrementally assemble an SdpProblem."""

    def __init__(self, registry: VarRegistry | None = None):
        self.registry = registry
        self.problem = SdpProblem()

    def new_scalar(self, name: str) -> int:
        idx = self.problem.n_scalars
        self.problem.n_scalars += 1
        self.problem.scalar_names.append(name)
        return idx

    def new_block(self, dim: int) -> int:
        if dim <= 0:
            raise SosError("PSD block dimension must be positive")
        self.problem.block_dims.append(dim)
        return len(self.problem.block_dims) - 1

    def add_row(self, scalar_terms: dict, block_terms: dict, rhs: float):
        self.problem.rows.append((dict(scalar_terms), dict(block_terms), float(rhs)))

    def set_objective(self, terms: dict):
        self.problem.objective = dict(terms)

    def scalar_bound(self, idx: int, lower: float = None, upper: float = None):
        """Encode lower <= u_idx and/or u_idx <= upper via 1x1 PSD slacks."""
        if lower is not None:
            b = self.new_block(1)
            self.add_row({idx: 1.0}, {(b, 0, 0): -1.0}, lower)
        if upper is not None:
            b = self.new_block(1)
            self.add_row({idx: -1.0}, {(b, 0, 0): -1.0}, -upper)

    # ------------------------------------------------------------------
    # SOS constraints
    # ------------------------------------------------------------------

    def sos_constraint(self, p: AffinePoly, basis) -> int:
        """Constrain p to be a sum of squares over the given monomial basis.

        Adds one Gram block G >= 0 of size len(basis) plus the coefficient
        matching rows p = m' G m. Returns the block index.
        """
        basis = list(basis)
        if not basis:
            raise SosError("empty SOS basis")
        deg_basis = 2 * max(sum(m) for m in basis)
        if p.degree() > deg_basis:
            raise SosError(
                f"basis too small: polynomial degree {p.degree()} > 2*basis degree"
            )
        block = self.new_block(len(basis))
        # map each target monomial to the Gram entries producing it
        gram_targets = {}
        for a in range(len(basis)):
            for b in range(a, len(basis)):
                mono = _mono_mul(basis[a], basis[b])
                gram_targets.setdefault(mono, []).append(
                    ((block, a, b), 1.0 if a == b else 2.0)
                )
        coeffs = p.coefficient_map()
        for mono in set(gram_targets) | set(coeffs):
            dec_map, const = coeffs.get(mono, ({}, 0.0))
            block_terms = dict(gram_targets.get(mono, []))
            if not block_terms and not dec_map:
                if abs(const) > 0.0:
                    raise SosError(
                        f"monomial {mono} with coefficient {const} is outside the basis span"
                    )
                continue
            # m'Gm - p = 0, i.e. gram terms - decision terms = const part
            self.add_row({k: -v for k, v in dec_map.items()}, block_terms, const)
        return block

    def negdef_direct(self, M: AffinePolyMatrix, eps: float) -> int:
        """Encode M <= -eps I for a constant (variable-free) affine matrix."""
        dim = M.dim
        block = self.new_block(dim)
        zero_mono = (0,) * len(self.registry)
        for i in range(dim):
            for j in range(i, dim):
                ent = M.entry(i, j)
                dec_map, const = {}, 0.0
                for mono, (dm, c) in ent.coefficient_map().items():
                    if mono != zero_mono:
                        raise SosError("matrix is not constant in the variables")
                    dec_map, const = dm, c
                rhs = -const - (eps if i == j else 0.0)
                # X_ij + M_ij = -eps delta_ij  ->  X_ij + sum dec = rhs
                self.add_row(dict(dec_map), {(block, i, j): 1.0}, rhs)
        return block

    def pmi_constraint(self, M: AffinePolyMatrix, region: Region, yvars,
                       mult_deg: int = 2, eps: float = EPS_LMI,
                       basis_deg: int | None = None):
        """Constrain M(rho) <= -eps I on the region via scalarized SOS.

        `yvars` are registry indices of fresh scalarization variables, one per
        matrix row. `mult_deg` bounds the rho-degree of the S-procedure
        multipliers (their Gram bases use rho-degree mult_deg // 2).
        """
        dim = M.dim
        yvars = list(yvars)
        if len(yvars) != dim:
            raise SosError("need one scalarization variable per matrix dimension")
        n_vars = len(self.registry)

        rho_vars = set()
        for i in range(dim):
            for j in range(dim):
                for part in M.entry(i, j).parts.values():
                    rho_vars |= part.variables()
        if rho_vars & set(yvars):
            raise SosError("matrix entries involve scalarization variables")
        for g in region.generators:
            rho_vars |= g.variables()
        rho_vars = sorted(rho_vars)

        if not rho_vars and not region.generators:
            return self.negdef_direct(M, eps)

        # p = -y'My - eps|y|^2 - sum sigma_i g_i, required SOS
        p = AffinePoly.zero(self.registry)
        for i in range(dim):
            yi = Polynomial.variable(self.registry, yvars[i])
            for j in range(dim):
                yj = Polynomial.variable(self.registry, yvars[j])
                p = p - M.entry(i, j).mul_poly(yi * yj)
            p = p + Polynomial.variable(self.registry, yvars[i]) ** 2 * (-eps)

        deg_m = M.max_degree()
        deg_sig = [mult_deg + g.degree() for g in region.generators]
        target_deg = max([deg_m] + deg_sig)
        dx = (target_deg + 1) // 2 if basis_deg is None else basis_deg

        # sigma_i Gram blocks: basis y (x) rho-monomials of degree <= mult_deg//2
        sig_basis_x = monomial_basis(n_vars, rho_vars, mult_deg // 2)
        sigma_items = []
        for gi, g in enumerate(region.generators):
            basis = [_mono_mul(ym, xm)
                     for ym in (tuple(int(v == yy) for v in range(n_vars)) for yy in yvars)
                     for xm in sig_basis_x]
            block = self.new_block(len(basis))
            sigma_items.append((block, basis, g))

        main_basis_x = monomial_basis(n_vars, rho_vars, dx)
        main_basis = [_mono_mul(ym, xm)
                      for ym in (tuple(int(v == yy) for v in range(n_vars)) for yy in yvars)
                      for xm in main_basis_x]
        main_block = self.new_block(len(main_basis))

        # coefficient matching: main + sum_i sigma_i * g_i + (y'My + eps|y|^2) = 0
        rows = {}

        def bump(mono):
            return rows.setdefault(mono, ({}, {}, 0.0))

        def add_block_term(mono, key, v):
            sc, bl, rhs = bump(mono)
            bl[key] = bl.get(key, 0.0) + v

        for a in range(len(main_basis)):
            for b in range(a, len(main_basis)):
                mono = _mono_mul(main_basis[a], main_basis[b])
                add_block_term(mono, (main_block, a, b), 1.0 if a == b else 2.0)
        for block, basis, g in sigma_items:
            for a in range(len(basis)):
                for b in range(a, len(basis)):
                    base = _mono_mul(basis[a], basis[b])
                    w0 = 1.0 if a == b else 2.0
                    for gm, gc in g.terms.items():
                        add_block_term(_mono_mul(base, gm), (block, a, b), w0 * gc)
        # main + sum_i sigma_i g_i + q = 0 for q = y'My + eps|y|^2 = -p
        for mono, (dec_map, const) in (p.scale(-1.0)).coefficient_map().items():
            sc, bl, rhs = bump(mono)
            for k, v in dec_map.items():
                sc[k] = sc.get(k, 0.0) + v
            rows[mono] = (sc, bl, rhs - const)

        for mono, (sc, bl, rhs) in sorted(rows.items()):
            if not sc and not bl:
                if abs(rhs) > 0.0:
                    raise SosError(f"unmatchable monomial {mono} in PMI reduction")
                continue
            self.add_row(sc, bl, rhs)
        return main_block
