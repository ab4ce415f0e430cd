"""Gain-bound certification: LMI assembly, joint minimization over the
metric, multiplier weights and gain, certificate verification, path energies
and a minimal constant-metric controller synthesis.

The central object is the pointwise matrix inequality in the extended state
chi = col(x, psi), the uncertainty input w and the disturbance d:

    [ P A + A'P + Pdot   P B_w   P B_d ]
    [      B_w'P           0       0   ]   +  (e-rows)'(e-rows)
    [      B_d'P           0    -g I   ]

       + sum_k lambda_k (z_k-rows)' M_k (z_k-rows)   <   0   on the region,

affine in the metric coefficients P(x), the weights lambda and the squared
gain g. Feasibility yields a differential L2-gain bound alpha = sqrt(g);
hardness of the combined multiplier (through its J-spectral factorization)
and positivity of Ptilde = P - blockdiag(0, X) upgrade the differential
bound to incremental / global gain bounds with bias b equal to a squared
path length under the certified metric.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import conic, iqc, linalg, lti, sosp
from .diffsys import DiffSystem, ExtendedSystem, extend
from .poly import Polynomial, PolyMatrix, VarRegistry, jacobian
from .sosp import AffinePoly, AffinePolyMatrix, Region, SdpBuilder


class AnalysisError(RuntimeError):
    pass


class InfeasibleError(AnalysisError):
    """The SOS relaxation is infeasible at the configured degrees."""


@dataclass
class AnalysisConfig:
    p_degree: int = 0
    mult_degree: int = 2
    eps_lmi: float = sosp.EPS_LMI
    lambda_min: float = iqc.LAMBDA_MIN
    # relative floor lambda_1 >= lambda_min + ratio * sum_k>=2 lambda_k:
    # keeps R = D'MD well conditioned for the hard factorization when the
    # optimizer pushes the other weights large (sound: only shrinks Lambda)
    lambda_ratio_min: float = 1e-4
    sdp_tol: float = 1e-6
    seed: int = 20260809
    n_verify_samples: int = 500


# ---------------------------------------------------------------------------
# decision bookkeeping and LMI assembly
# ---------------------------------------------------------------------------


@dataclass
class GainDecisions:
    builder: SdpBuilder
    registry: VarRegistry
    p_index: dict            # (i, j, mono) -> scalar index, i <= j
    p_monos: list
    n_chi: int
    lam_index: list
    gamma_index: int

    def p_affine(self, i: int, j: int) -> AffinePoly:
        i, j = min(i, j), max(i, j)
        parts = {}
        for mono in self.p_monos:
            parts[self.p_index[(i, j, mono)]] = Polynomial.monomial(self.registry, mono)
        return AffinePoly(self.registry, parts)

    def p_matrix_value(self, scalars) -> PolyMatrix:
        """Numeric P(x) as a PolyMatrix from solved scalar values."""
        flat = []
        for i in range(self.n_chi):
            for j in range(self.n_chi):
                a, b = min(i, j), max(i, j)
                terms = {}
                for mono in self.p_monos:
                    c = float(scalars[self.p_index[(a, b, mono)]])
                    if c != 0.0:
                        terms[mono] = c
                flat.append(Polynomial(self.registry, terms))
        return PolyMatrix(self.registry, self.n_chi, self.n_chi, flat)


def make_decisions(builder: SdpBuilder, ext: ExtendedSystem, n_entries: int,
                   p_degree: int) -> GainDecisions:
    reg = builder.registry
    n_chi = ext.n_chi
    monos = sosp.monomial_basis(len(reg), [reg.index(ext.registry.names[i]) for i in ext.x_idx], p_degree)
    p_index = {}
    for i in range(n_chi):
        for j in range(i, n_chi):
            for mono in monos:
                p_index[(i, j, mono)] = builder.new_scalar(f"P[{i},{j}]:{mono}")
    lam_index = [builder.new_scalar(f"lambda{k+1}") for k in range(n_entries)]
    gamma_index = builder.new_scalar("gamma")
    return GainDecisions(builder, reg, p_index, monos, n_chi, lam_index, gamma_index)


def assemble_lmi(ext: ExtendedSystem, ms: iqc.MultiplierSet | None,
                 dec: GainDecisions) -> AffinePolyMatrix:
    """The gain LMI as a symmetric decision-affine polynomial matrix.

    Dimension n_chi + n_w + n_d; affine in (P coefficients, lambda, gamma).
    Pdot uses the plant vector field and is rejected if a state-dependent P
    is requested without one.
    """
    reg = dec.registry
    n_chi, n_w, n_d = ext.n_chi, ext.n_w, ext.n_d
    m = n_chi + n_w + n_d
    L = AffinePolyMatrix(reg, m)

    A = ext.A.reindex(reg)
    Bw = ext.B_w.reindex(reg) if ext.B_w is not None else None
    Bd = ext.B_d.reindex(reg) if ext.B_d is not None else None

    # P A + A'P (+ Pdot)
    state_dependent = len(dec.p_monos) > 1
    if state_dependent and ext.xdot is None:
        raise AnalysisError(
            "state-dependent P requires the plant vector field (xdot); "
            "supply polynomial dynamics or use p_degree = 0"
        )
    for i in range(n_chi):
        for j in range(i, n_chi):
            acc = AffinePoly.zero(reg)
            for t in range(n_chi):
                acc = acc + dec.p_affine(i, t).mul_poly(A.entry(t, j))
                acc = acc + dec.p_affine(j, t).mul_poly(A.entry(t, i))
            if state_dependent:
                x_names = [ext.registry.names[k] for k in ext.x_idx]
                pij = dec.p_affine(i, j)
                for xv, fpoly in zip(x_names, ext.xdot):
                    acc = acc + pij.diff(reg.index(xv)).mul_poly(fpoly.reindex(reg))
            L.entries[i][j] = L.entries[i][j] + acc
            if i != j:
                L.entries[j][i] = L.entries[j][i] + acc

    # P B_w and P B_d columns
    for jw in range(n_w):
        for i in range(n_chi):
            acc = AffinePoly.zero(reg)
            for t in range(n_chi):
                acc = acc + dec.p_affine(i, t).mul_poly(Bw.entry(t, jw))
            L.entries[i][n_chi + jw] = L.entries[i][n_chi + jw] + acc
            L.entries[n_chi + jw][i] = L.entries[n_chi + jw][i] + acc
    for jd in range(n_d):
        col = n_chi + n_w + jd
        for i in range(n_chi):
            acc = AffinePoly.zero(reg)
            for t in range(n_chi):
                acc = acc + dec.p_affine(i, t).mul_poly(Bd.entry(t, jd))
            L.entries[i][col] = L.entries[i][col] + acc
            L.entries[col][i] = L.entries[col][i] + acc
        L.entries[col][col] = L.entries[col][col] + AffinePoly.decision(reg, dec.gamma_index, -1.0)

    # (e-rows)'(e-rows)
    if ext.n_e:
        erow = _stack_row(ext, ext.C_e, ext.D_ew, ext.D_ed, reg)
        for i in range(m):
            for j in range(i, m):
                acc = Polynomial.zero(reg)
                for k in range(ext.n_e):
                    acc = acc + erow[k][i] * erow[k][j]
                if not acc.is_zero():
                    L.entries[i][j] = L.entries[i][j] + AffinePoly.const(acc)
                    if i != j:
                        L.entries[j][i] = L.entries[j][i] + AffinePoly.const(acc)

    # multiplier rows
    if ms is not None:
        if len(ms) != len(ext.z_blocks):
            raise AnalysisError("multiplier set does not match the extended system")
        for k, (entry, zb) in enumerate(zip(ms.entries, ext.z_blocks)):
            zrow = _stack_row(ext, zb.C_z.reindex(reg),
                              zb.D_zw.reindex(reg) if zb.D_zw is not None else None,
                              zb.D_zd.reindex(reg) if zb.D_zd is not None else None,
                              reg, already_reindexed=True)
            Mk = np.atleast_2d(entry.M)
            p_k = len(zrow)
            for i in range(m):
                for j in range(i, m):
                    acc = Polynomial.zero(reg)
                    for r in range(p_k):
                        for s in range(p_k):
                            if Mk[r, s] != 0.0:
                                acc = acc + zrow[r][i] * zrow[s][j] * Mk[r, s]
                    if not acc.is_zero():
                        term = AffinePoly.decision(reg, dec.lam_index[k], acc)
                        L.entries[i][j] = L.entries[i][j] + term
                        if i != j:
                            L.entries[j][i] = L.entries[j][i] + term
    return L


def _stack_row(ext, Cpart, Dw, Dd, reg, already_reindexed=False):
    """Rows [C | D_w | D_d] as lists of polynomials over the full registry."""
    if not already_reindexed:
        Cpart = Cpart.reindex(reg)
        Dw = Dw.reindex(reg) if Dw is not None else None
        Dd = Dd.reindex(reg) if Dd is not None else None
    rows = []
    for k in range(Cpart.rows):
        row = [Cpart.entry(k, j) for j in range(Cpart.cols)]
        for j in range(ext.n_w):
            row.append(Dw.entry(k, j) if Dw is not None else Polynomial.zero(reg))
        for j in range(ext.n_d):
            row.append(Dd.entry(k, j) if Dd is not None else Polynomial.zero(reg))
        rows.append(row)
    return rows


def evaluate_lmi(ext: ExtendedSystem, ms: iqc.MultiplierSet | None,
                 P: PolyMatrix, lam, gamma: float, point) -> np.ndarray:
    """Numeric LMI left-hand side at one rho point (P given as polynomials)."""
    blocks = ext.eval_lti(point)
    n_chi, n_w, n_d = ext.n_chi, ext.n_w, ext.n_d
    m = n_chi + n_w + n_d
    Pv = P.eval(point)
    out = np.zeros((m, m))
    Av = blocks["A"]
    core = Pv @ Av + Av.T @ Pv
    if ext.xdot is not None and P.max_degree() > 0:
        x_names = [ext.registry.names[k] for k in ext.x_idx]
        Pd = np.zeros_like(Pv)
        for xv, fpoly in zip(x_names, ext.xdot):
            idx = P.registry.index(xv)
            dP = np.array([[P.entry(i, j).diff(idx).eval(point)
                            for j in range(P.cols)] for i in range(P.rows)])
            Pd += dP * fpoly.reindex(P.registry).eval(point)
        core = core + Pd
    out[:n_chi, :n_chi] = core
    if n_w:
        PB = Pv @ blocks["B_w"]
        out[:n_chi, n_chi:n_chi + n_w] = PB
        out[n_chi:n_chi + n_w, :n_chi] = PB.T
    if n_d:
        PB = Pv @ blocks["B_d"]
        out[:n_chi, n_chi + n_w:] = PB
        out[n_chi + n_w:, :n_chi] = PB.T
        out[n_chi + n_w:, n_chi + n_w:] -= gamma * np.eye(n_d)
    if ext.n_e:
        er = np.hstack([blocks["C_e"], blocks["D_ew"], blocks["D_ed"]])
        out += er.T @ er
    if ms is not None:
        for lk, (entry, znum) in zip(np.atleast_1d(lam), zip(ms.entries, blocks["z"])):
            zr = np.hstack(znum)
            out += lk * zr.T @ np.atleast_2d(entry.M) @ zr
    return 0.5 * (out + out.T)


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


@dataclass
class Certificate:
    alpha: float
    gamma: float
    lam: np.ndarray | None
    P: PolyMatrix                  # over the analysis registry, n_chi x n_chi
    X: np.ndarray | None           # ARE solution at lam (n_psi x n_psi)
    epsilon: float
    eps_lmi: float
    region: Region
    n_x: int
    n_psi: int
    n_w: int
    n_d: int
    multiplier_id: str
    seed: int
    residual_report: dict = field(default_factory=dict)
    solver_info: dict = field(default_factory=dict)

    def p_tilde(self) -> PolyMatrix:
        """Ptilde = P - blockdiag(0, X)."""
        if self.X is None or self.X.size == 0:
            return self.P
        reg = self.P.registry
        shift = np.zeros((self.P.rows, self.P.cols))
        shift[self.n_x:, self.n_x:] = self.X
        return self.P + PolyMatrix.from_array(reg, -shift)

    def metric(self) -> PolyMatrix:
        """Certified Riemannian metric Ptilde + epsilon I on the extended state."""
        reg = self.P.registry
        return self.p_tilde() + PolyMatrix.from_array(
            reg, self.epsilon * np.eye(self.P.rows)
        )

    def to_json_dict(self) -> dict:
        names = self.P.registry.names
        entries = []
        for i in range(self.P.rows):
            for j in range(i, self.P.cols):
                terms = [
                    {"exps": list(mono), "coeff": c}
                    for mono, c in self.P.entry(i, j).sorted_terms()
                ]
                entries.append({"i": i, "j": j, "terms": terms})
        return {
            "format": "diqc-certificate-1",
            "alpha": self.alpha,
            "gamma": self.gamma,
            "lambda": None if self.lam is None else [float(v) for v in self.lam],
            "epsilon": self.epsilon,
            "eps_lmi": self.eps_lmi,
            "dims": {"n_x": self.n_x, "n_psi": self.n_psi,
                     "n_w": self.n_w, "n_d": self.n_d},
            "vars": list(names),
            "P": entries,
            "X": None if self.X is None else [[float(v) for v in row] for row in np.atleast_2d(self.X)],
            "region": {
                "generators": [str(g) for g in self.region.generators],
                "box": {names[i]: [lo, hi] for i, lo, hi in self.region.box},
            },
            "multiplier_id": self.multiplier_id,
            "seed": self.seed,
            "residuals": self.residual_report,
            "solver": self.solver_info,
        }

    @classmethod
    def from_json_dict(cls, d: dict, registry: VarRegistry, region: Region) -> "Certificate":
        n_chi = d["dims"]["n_x"] + d["dims"]["n_psi"]
        flat = [Polynomial.zero(registry) for _ in range(n_chi * n_chi)]
        for ent in d["P"]:
            terms = {tuple(t["exps"]): t["coeff"] for t in ent["terms"]}
            p = Polynomial(registry, terms)
            flat[ent["i"] * n_chi + ent["j"]] = p
            flat[ent["j"] * n_chi + ent["i"]] = p
        P = PolyMatrix(registry, n_chi, n_chi, flat)
        X = None if d["X"] is None else np.array(d["X"], dtype=float)
        return cls(
            alpha=d["alpha"], gamma=d["gamma"],
            lam=None if d["lambda"] is None else np.array(d["lambda"]),
            P=P, X=X, epsilon=d["epsilon"], eps_lmi=d["eps_lmi"],
            region=region, n_x=d["dims"]["n_x"], n_psi=d["dims"]["n_psi"],
            n_w=d["dims"]["n_w"], n_d=d["dims"]["n_d"],
            multiplier_id=d["multiplier_id"], seed=d["seed"],
            residual_report=d.get("residuals", {}), solver_info=d.get("solver", {}),
        )


def _solve_ladder(problem, tol):
    ladder = [tol] + [t for t in (1e-6, 1e-5) if t > tol]
    last = None
    for t in ladder:
        sol = conic.solve_sdp(problem, tol=t)
        last = sol
        if sol.status in ("optimal", "primal_infeasible", "dual_infeasible"):
            return sol
    return last


def min_gain(ext: ExtendedSystem, ms: iqc.MultiplierSet | None, region: Region,
             cfg: AnalysisConfig | None = None) -> Certificate:
    """Minimize the certified squared gain over (P, lambda, gamma).

    Runs the SOS-relaxed LMI feasibility problem, then the J-spectral
    factorization at the optimal weights, verifies Ptilde >= 0 by sampling
    (with one constrained re-solve as fallback) and returns a Certificate.
    Raises InfeasibleError when the relaxation is infeasible at these
    degrees and AnalysisError on solver breakdowns or inadmissible weights.
    """
    cfg = cfg or AnalysisConfig()
    if ms is not None:
        rep = iqc.check_assumption1(ms)
        if not rep.all_passed:
            raise AnalysisError(f"multiplier set violates the sign conditions: {rep}")

    cert, dec, sol = _solve_gain_sdp(ext, ms, region, cfg, extra_psd_shift=None)

    # hard-factorization side conditions
    if ms is not None:
        psi_st, Mlam = iqc.combine(ms, cert.lam, lambda_min=cfg.lambda_min / 2)
        try:
            jf = lti.j_spectral_factorize(psi_st, Mlam, (ms.n_v, ms.n_w))
        except lti.LtiError as exc:
            raise AnalysisError(f"optimal weights are inadmissible: {exc}") from exc
        cert.X = jf.X
        cert.residual_report["are_residual"] = jf.are_residual
        cert.residual_report["jfactor_grid_residual"] = jf.grid_residual

        if not _ptilde_ok(cert, ext, cfg):
            # one constrained re-solve: P - blockdiag(0, X) >= 0 on the region
            cert2, dec, sol = _solve_gain_sdp(ext, ms, region, cfg, extra_psd_shift=jf.X)
            psi_st, Mlam = iqc.combine(ms, cert2.lam, lambda_min=cfg.lambda_min / 2)
            try:
                jf = lti.j_spectral_factorize(psi_st, Mlam, (ms.n_v, ms.n_w))
            except lti.LtiError as exc:
                raise AnalysisError(f"optimal weights are inadmissible: {exc}") from exc
            cert2.X = jf.X
            cert2.residual_report["are_residual"] = jf.are_residual
            cert2.residual_report["jfactor_grid_residual"] = jf.grid_residual
            cert = cert2
            if not _ptilde_ok(cert, ext, cfg):
                raise AnalysisError(
                    "Ptilde = P - blockdiag(0, X) is not positive semidefinite "
                    "after the constrained re-solve"
                )

    # storage margin and verification report
    rng = np.random.default_rng(cert.seed)
    pts = region.sample(rng, 200, len(cert.P.registry),
                        active_vars=_active_vars(ext))
    pnorm = max((np.linalg.norm(cert.P.eval(pt), 2) for pt in pts), default=0.0)
    cert.epsilon = 1e-6 * (1.0 + pnorm)
    report = verify_certificate(cert, ext, ms, n_samples=cfg.n_verify_samples)
    cert.residual_report.update(report)
    if not report["all_passed"]:
        raise AnalysisError(f"freshly issued certificate failed verification: {report}")
    return cert


def _active_vars(ext: ExtendedSystem):
    active = set()
    for M in (ext.A, ext.B_w, ext.B_d, ext.C_e, ext.D_ew, ext.D_ed):
        if M is not None:
            for e in M.entries:
                active |= e.variables()
    for zb in ext.z_blocks:
        for M in (zb.C_z, zb.D_zw, zb.D_zd):
            if M is not None:
                for e in M.entries:
                    active |= e.variables()
    if ext.xdot:
        for p in ext.xdot:
            active |= p.variables()
    return active


def _solve_gain_sdp(ext, ms, region, cfg, extra_psd_shift=None,
                    gamma_cap=None, maximize_lambda1=False):
    n_chi, n_w, n_d = ext.n_chi, ext.n_w, ext.n_d
    m = n_chi + n_w + n_d
    yn = [f"_y{i}" for i in range(max(m, n_chi))]
    reg_full = ext.registry.extended(yn)
    builder = SdpBuilder(reg_full)

    ext_r = _reindex_ext(ext, reg_full)
    region_r = Region(tuple(g.reindex(reg_full) for g in region.generators), region.box)
    dec = make_decisions(builder, ext_r, len(ms) if ms is not None else 0, cfg.p_degree)
    L = assemble_lmi(ext_r, ms, dec)

    yvars = [reg_full.index(nm) for nm in yn[:m]]
    builder.pmi_constraint(L, region_r, yvars, mult_deg=cfg.mult_degree, eps=cfg.eps_lmi)

    if ms is not None:
        for k in dec.lam_index[1:]:
            builder.scalar_bound(k, lower=0.0)
        # lambda_1 - ratio * sum_{k>=2} lambda_k >= lambda_min
        terms = {dec.lam_index[0]: 1.0}
        for k in dec.lam_index[1:]:
            terms[k] = -cfg.lambda_ratio_min
        slack = builder.new_block(1)
        builder.add_row(terms, {(slack, 0, 0): -1.0}, cfg.lambda_min)
    builder.scalar_bound(dec.gamma_index, lower=0.0, upper=gamma_cap)

    if extra_psd_shift is not None:
        # P - blockdiag(0, X_prev) >= 0 on the region
        shift = np.zeros((n_chi, n_chi))
        shift[ext.n_x:, ext.n_x:] = extra_psd_shift
        Mc = AffinePolyMatrix(reg_full, n_chi)
        for i in range(n_chi):
            for j in range(i, n_chi):
                val = dec.p_affine(i, j).scale(-1.0) + Polynomial.constant(reg_full, shift[i, j])
                Mc.entries[i][j] = Mc.entries[i][j] + val
                if i != j:
                    Mc.entries[j][i] = Mc.entries[j][i] + val
        builder.pmi_constraint(Mc, region_r, [reg_full.index(nm) for nm in yn[:n_chi]],
                               mult_deg=cfg.mult_degree, eps=0.0)

    if maximize_lambda1 and ms is not None:
        builder.set_objective({dec.lam_index[0]: -1.0})
    else:
        builder.set_objective({dec.gamma_index: 1.0})
    sol = _solve_ladder(builder.problem, cfg.sdp_tol)
    if sol.status == "primal_infeasible":
        raise InfeasibleError(
            "no gain certificate at these degrees (SOS relaxation infeasible)"
        )
    if sol.status != "optimal":
        raise AnalysisError(f"SDP solver failed: {sol.status}; {sol.diagnostics}")

    gamma = float(max(sol.scalars[dec.gamma_index], 0.0))
    lam = None
    if ms is not None:
        lam = np.array([max(float(sol.scalars[k]), 0.0) for k in dec.lam_index])
        lam[0] = max(lam[0], cfg.lambda_min)
    P = _strip_registry(dec.p_matrix_value(sol.scalars), ext.registry)
    cert = Certificate(
        alpha=math.sqrt(gamma), gamma=gamma, lam=lam, P=P, X=None,
        epsilon=0.0, eps_lmi=cfg.eps_lmi, region=region,
        n_x=ext.n_x, n_psi=ext.n_psi, n_w=n_w, n_d=n_d,
        multiplier_id="none" if ms is None else ";".join(e.name for e in ms.entries),
        seed=cfg.seed,
        solver_info={
            "iterations": sol.iterations,
            "rel_gap": sol.rel_gap,
            "primal_residual": sol.primal_residual,
            "tol": sol.tol,
        },
    )
    return cert, dec, sol


def _reindex_ext(ext: ExtendedSystem, reg_full: VarRegistry) -> ExtendedSystem:
    from .diffsys import ZBlock

    def rx(M):
        return M.reindex(reg_full) if M is not None else None

    return ExtendedSystem(
        registry=reg_full,
        x_idx=tuple(reg_full.index(ext.registry.names[i]) for i in ext.x_idx),
        n_psi=ext.n_psi, n_w=ext.n_w, n_d=ext.n_d,
        A=rx(ext.A), B_w=rx(ext.B_w), B_d=rx(ext.B_d),
        z_blocks=[ZBlock(rx(z.C_z), rx(z.D_zw), rx(z.D_zd)) for z in ext.z_blocks],
        C_e=rx(ext.C_e), D_ew=rx(ext.D_ew), D_ed=rx(ext.D_ed),
        filter_A=ext.filter_A, filter_B=ext.filter_B,
        xdot=tuple(p.reindex(reg_full) for p in ext.xdot) if ext.xdot else None,
    )


def _ptilde_ok(cert: Certificate, ext: ExtendedSystem, cfg: AnalysisConfig,
               tol: float = 1e-9) -> bool:
    rng = np.random.default_rng(cert.seed + 1)
    pts = cert.region.sample(rng, 200, len(cert.P.registry), active_vars=_active_vars(ext))
    pt_mat = cert.p_tilde()
    for pt in pts:
        if float(np.min(np.linalg.eigvalsh(pt_mat.eval(pt)))) < -tol:
            return False
    return True


def verify_certificate(cert: Certificate, ext: ExtendedSystem,
                       ms: iqc.MultiplierSet | None, n_samples: int = 500) -> dict:
    """Re-check a certificate by sampling: LMI negativity, metric positivity,
    Riccati and J-factor residuals. Report-only; the caller decides."""
    reg = cert.P.registry
    ext_r = _reindex_ext(ext, reg) if ext.registry != reg else ext
    rng = np.random.default_rng(cert.seed + 2)
    pts = cert.region.sample(rng, n_samples, len(reg), active_vars=_active_vars(ext_r))

    lam = cert.lam if cert.lam is not None else []
    max_eig = -np.inf
    for pt in pts:
        Lv = evaluate_lmi(ext_r, ms, cert.P, lam, cert.gamma, pt)
        max_eig = max(max_eig, float(np.max(np.linalg.eigvalsh(Lv))))
    lmi_ok = max_eig <= -cert.eps_lmi / 2

    metric = cert.metric()
    min_metric = np.inf
    for pt in pts:
        min_metric = min(min_metric, float(np.min(np.linalg.eigvalsh(metric.eval(pt)))))
    metric_ok = min_metric >= (cert.epsilon / 2 if cert.epsilon > 0 else -1e-9)

    are_res = cert.residual_report.get("are_residual", 0.0)
    jfac_res = cert.residual_report.get("jfactor_grid_residual", 0.0)
    are_ok = are_res <= 1e-8
    jfac_ok = jfac_res <= 1e-6

    return {
        "lmi_max_eig": max_eig,
        "lmi_ok": bool(lmi_ok),
        "metric_min_eig": min_metric,
        "metric_ok": bool(metric_ok),
        "are_residual": are_res,
        "are_ok": bool(are_ok),
        "jfactor_grid_residual": jfac_res,
        "jfactor_ok": bool(jfac_ok),
        "n_samples": int(n_samples),
        "all_passed": bool(lmi_ok and metric_ok and are_ok and jfac_ok),
    }


# ---------------------------------------------------------------------------
# path energy
# ---------------------------------------------------------------------------


def path_energy(points: np.ndarray, metric) -> float:
    """Squared curve length of a sampled path under a Riemannian metric.

    `points` has shape (N, n) sampling c(s) on a uniform grid over [0, 1];
    `metric` is a PolyMatrix in the state (or a constant matrix). Composite
    Simpson quadrature of sqrt(c_s' M(c) c_s); the metric must be positive
    definite at every sample.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    N = points.shape[0]
    if N < 2:
        return 0.0
    ds = 1.0 / (N - 1)
    tangents = np.gradient(points, ds, axis=0)
    vals = np.empty(N)
    for k in range(N):
        M = metric.eval(points[k]) if isinstance(metric, PolyMatrix) else np.asarray(metric, dtype=float)
        if float(np.min(np.linalg.eigvalsh(M))) <= 0.0:
            raise AnalysisError("indefinite metric along the path")
        q = float(tangents[k] @ M @ tangents[k])
        vals[k] = math.sqrt(max(q, 0.0))
    # composite Simpson; trapezoid on a trailing odd interval
    length = 0.0
    k = 0
    while k + 2 < N:
        length += ds / 3.0 * (vals[k] + 4.0 * vals[k + 1] + vals[k + 2])
        k += 2
    if k + 1 < N:
        length += 0.5 * ds * (vals[k] + vals[k + 1])
    return length**2


# ---------------------------------------------------------------------------
# constant-metric controller synthesis
# ---------------------------------------------------------------------------


@dataclass
class SynthesisResult:
    W: np.ndarray
    K: PolyMatrix            # m x n polynomial gain, delta_u = K(x) delta_x
    Y: PolyMatrix
    gamma: float
    alpha: float
    effort: float


def ccm_synthesize(f, B, region: Region, target_alpha: float,
                   E=None, Ce=None, Du: float = 0.1,
                   y_degree: int = 2, y_vars=None, w_min: float = 1e-2,
                   mult_degree: int = 2, sdp_tol: float = 1e-7,
                   eps_lmi: float = sosp.EPS_LMI) -> SynthesisResult:
    """Constant metric W and polynomial differential gain K = Y W^{-1} such
    that the closed loop certifies a differential L2 gain <= target_alpha
    from d to e = Ce x + Du u.

    The gain target enters as a hard constraint; the objective minimizes a
    controller-effort bound t with [[t I, Y],[Y', W]] >= 0 pointwise, which
    keeps K moderate (unconstrained gain minimization produces extreme
    feedback that destroys the robustness analysis downstream).
    """
    f = list(f)
    reg = f[0].registry
    n = len(f)
    B = np.atleast_2d(np.asarray(B, dtype=float)).reshape(n, -1)
    m_u = B.shape[1]
    if E is None:
        E = np.zeros((n, 1))
    E = np.atleast_2d(np.asarray(E, dtype=float)).reshape(n, -1)
    n_d = E.shape[1]
    if Ce is None:
        Ce = np.eye(1, n)
    Ce = np.atleast_2d(np.asarray(Ce, dtype=float)).reshape(-1, n)
    n_e = Ce.shape[0]

    x_idx = list(range(n))  # states occupy the first registry slots
    A = jacobian(f, x_idx)
    if y_vars is None:
        y_vars = [reg.names[i] for i in x_idx]
    yv_idx = [reg.index(v) for v in y_vars]

    dim = n + n_d + n_e
    yn = [f"_y{i}" for i in range(max(dim, m_u + n))]
    reg_full = reg.extended(yn)
    A = A.reindex(reg_full)
    region_r = Region(tuple(g.reindex(reg_full) for g in region.generators), region.box)
    builder = SdpBuilder(reg_full)

    iW = {}
    for i in range(n):
        for j in range(i, n):
            iW[(i, j)] = builder.new_scalar(f"W[{i},{j}]")
    y_monos = sosp.monomial_basis(len(reg_full), [reg_full.index(v) for v in y_vars], y_degree)
    iY = {}
    for r in range(m_u):
        for cidx in range(n):
            for mono in y_monos:
                iY[(r, cidx, mono)] = builder.new_scalar(f"Y[{r},{cidx}]:{mono}")
    ig = builder.new_scalar("gamma")
    it = builder.new_scalar("effort")

    def Wd(i, j):
        i, j = min(i, j), max(i, j)
        return AffinePoly.decision(reg_full, iW[(i, j)])

    def Yd(r, cidx):
        parts = {iY[(r, cidx, mono)]: Polynomial.monomial(reg_full, mono) for mono in y_monos}
        return AffinePoly(reg_full, parts)

    # LMI [[AW + WA' + BY + Y'B', E, (Ce W + Du Y)'], [E', -g I, 0], [*, 0, -I]]
    L = AffinePolyMatrix(reg_full, dim)
    for i in range(n):
        for j in range(i, n):
            acc = AffinePoly.zero(reg_full)
            for t in range(n):
                acc = acc + Wd(t, j).mul_poly(A.entry(i, t))
                acc = acc + Wd(i, t).mul_poly(A.entry(j, t))
            for r in range(m_u):
                if B[i, r]:
                    acc = acc + Yd(r, j).scale(B[i, r])
                if B[j, r]:
                    acc = acc + Yd(r, i).scale(B[j, r])
            L.entries[i][j] = L.entries[i][j] + acc
            if i != j:
                L.entries[j][i] = L.entries[j][i] + acc
    for jd in range(n_d):
        col = n + jd
        for i in range(n):
            L.entries[i][col] = L.entries[i][col] + AffinePoly.const(
                Polynomial.constant(reg_full, E[i, jd])
            )
            L.entries[col][i] = L.entries[i][col]
        L.entries[col][col] = AffinePoly.decision(reg_full, ig, -1.0)
    for ke in range(n_e):
        col = n + n_d + ke
        for j in range(n):
            acc = AffinePoly.zero(reg_full)
            for t in range(n):
                if Ce[ke, t]:
                    acc = acc + Wd(t, j).scale(Ce[ke, t])
            for r in range(m_u):
                acc = acc + Yd(r, j).scale(Du if m_u == 1 else Du)
            L.entries[j][col] = L.entries[j][col] + acc
            L.entries[col][j] = L.entries[j][col]
        L.entries[col][col] = L.entries[col][col] + AffinePoly.const(
            Polynomial.constant(reg_full, -1.0)
        )

    yvars_idx = [reg_full.index(nm) for nm in yn[:dim]]
    builder.pmi_constraint(L, region_r, yvars_idx, mult_deg=mult_degree, eps=eps_lmi)

    # effort bound: [[t I_mu, Y],[Y', W]] >= 0 on the region
    edim = m_u + n
    Leff = AffinePolyMatrix(reg_full, edim)
    for r in range(m_u):
        Leff.entries[r][r] = AffinePoly.decision(reg_full, it, -1.0)
        for cidx in range(n):
            v = Yd(r, cidx).scale(-1.0)
            Leff.entries[r][m_u + cidx] = v
            Leff.entries[m_u + cidx][r] = v
    for i in range(n):
        for j in range(i, n):
            v = Wd(i, j).scale(-1.0)
            Leff.entries[m_u + i][m_u + j] = Leff.entries[m_u + i][m_u + j] + v
            if i != j:
                Leff.entries[m_u + j][m_u + i] = Leff.entries[m_u + j][m_u + i] + v
    builder.pmi_constraint(Leff, region_r, [reg_full.index(nm) for nm in yn[:edim]],
                           mult_deg=mult_degree, eps=0.0)

    # W >= w_min I
    Wm = AffinePolyMatrix(reg_full, n)
    for i in range(n):
        for j in range(i, n):
            v = Wd(i, j).scale(-1.0)
            if i == j:
                v = v + Polynomial.constant(reg_full, w_min)
            Wm.entries[i][j] = v
            Wm.entries[j][i] = v
    builder.negdef_direct(Wm, 0.0)

    builder.scalar_bound(ig, lower=0.0, upper=float(target_alpha) ** 2)
    builder.scalar_bound(it, lower=0.0)
    builder.set_objective({it: 1.0})

    sol = _solve_ladder(builder.problem, sdp_tol)
    if sol.status == "primal_infeasible":
        raise InfeasibleError(
            f"no constant-metric controller with gain <= {target_alpha} at these degrees"
        )
    if sol.status != "optimal":
        raise AnalysisError(f"synthesis SDP failed: {sol.status}; {sol.diagnostics}")

    W = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            W[i, j] = W[j, i] = sol.scalars[iW[(i, j)]]
    Winv = np.linalg.inv(W)
    Yflat = []
    for r in range(m_u):
        for cidx in range(n):
            terms = {}
            for mono in y_monos:
                c = float(sol.scalars[iY[(r, cidx, mono)]])
                if c != 0.0:
                    terms[mono] = c
            Yflat.append(Polynomial(reg_full, terms))
    Ymat = PolyMatrix(reg_full, m_u, n, Yflat)
    Kflat = []
    for r in range(m_u):
        for j in range(n):
            acc = Polynomial.zero(reg_full)
            for t in range(n):
                acc = acc + Ymat.entry(r, t) * Winv[t, j]
            Kflat.append(acc)
    # drop the scalarization variables from the returned polynomials
    Kmat = PolyMatrix(reg_full, m_u, n, Kflat).reindex(reg_full)
    Kmat = _strip_registry(Kmat, reg)
    Ymat = _strip_registry(Ymat, reg)
    gamma = float(sol.scalars[ig])
    return SynthesisResult(W=W, K=Kmat, Y=Ymat, gamma=gamma,
                           alpha=math.sqrt(max(gamma, 0.0)),
                           effort=float(sol.scalars[it]))


def _strip_registry(M: PolyMatrix, reg: VarRegistry) -> PolyMatrix:
    flat = []
    for e in M.entries:
        terms = {}
        for mono, c in e.terms.items():
            terms[tuple(mono[: len(reg)])] = c
            if any(mono[len(reg):]):
                raise AnalysisError("polynomial unexpectedly involves helper variables")
        flat.append(Polynomial(reg, terms))
    return PolyMatrix(reg, M.rows, M.cols, flat)


def controlled_diffsystem(f, B, E, Ce, Deu, K: PolyMatrix) -> DiffSystem:
    """Differential closed loop for u_applied = v + w with v the controller
    output (delta_v = K delta_x): the structure of the delayed-input plant.

        delta_xdot = (A + B K) delta_x + B delta_w + E delta_d
        delta_v    = K delta_x
        delta_e    = (Ce + Deu K) delta_x + Deu delta_w

    States must occupy the first n registry slots. The geodesic controller
    has no polynomial closed form, so xdot is left unset; analysis therefore
    needs a constant metric (p_degree = 0) on these systems.
    """
    f = list(f)
    reg = f[0].registry
    n = len(f)
    B = np.atleast_2d(np.asarray(B, dtype=float)).reshape(n, -1)
    E = np.atleast_2d(np.asarray(E, dtype=float)).reshape(n, -1)
    Ce = np.atleast_2d(np.asarray(Ce, dtype=float)).reshape(-1, n)
    Deu = np.atleast_2d(np.asarray(Deu, dtype=float)).reshape(Ce.shape[0], B.shape[1])
    x_idx = list(range(n))
    A_cl = jacobian(f, x_idx) + PolyMatrix.from_array(reg, B) @ K
    C_e = PolyMatrix.from_array(reg, Ce) + PolyMatrix.from_array(reg, Deu) @ K
    return DiffSystem(
        registry=reg,
        x_idx=tuple(x_idx),
        n_w=B.shape[1],
        n_d=E.shape[1],
        A_x=A_cl,
        B_xw=PolyMatrix.from_array(reg, B),
        B_xd=PolyMatrix.from_array(reg, E),
        C_v=K,
        D_vw=None,
        D_vd=None,
        C_e=C_e,
        D_ew=PolyMatrix.from_array(reg, Deu),
        D_ed=None,
        xdot=None,
    )
