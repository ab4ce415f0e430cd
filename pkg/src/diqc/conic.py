"""Solve standard-form semidefinite programs with verified solutions.

The engine is cvxopt's conelp interior-point method (primal-dual path
following with Nesterov-Todd scaling and built-in infeasibility
certificates), driven through the SdpProblem interface of `sosp`. Every
returned solution is re-verified here from scratch — KKT residuals, cone
feasibility, duality gap — and the reported status reflects only what the
recomputed residuals support, never the solver's say-so alone.

Variable layout handed to conelp: the scalar decisions first, then the
upper-triangle entries of each PSD block; the cone constraint is expressed
through an identity-like G mapping block entries onto full symmetric
matrices. Equality rows are normalized and compressed to full row rank
before the solve (coefficient-matching rows are naturally redundant).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .sosp import SdpProblem

_ENV_TOL = "DIQC_SOLVER_TOL"


class ConicError(RuntimeError):
    pass


def default_tol() -> float:
    """Solver tolerance, overridable through the environment for CI checks."""
    val = os.environ.get(_ENV_TOL)
    return float(val) if val else 1e-8


@dataclass
class SdpSolution:
    status: str                      # optimal | primal_infeasible | dual_infeasible | max_iter
    scalars: np.ndarray | None
    blocks: list | None              # symmetric PSD matrices
    dual_eq: np.ndarray | None
    dual_blocks: list | None
    objective: float | None
    gap: float
    rel_gap: float
    primal_residual: float
    dual_residual: float
    min_block_eig: float
    iterations: int
    tol: float
    certificate: dict | None = None
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _layout(p: SdpProblem):
    offs = [p.n_scalars]
    for d in p.block_dims:
        offs.append(offs[-1] + d * (d + 1) // 2)
    return offs


def _tri_index(offs, b, i, j):
    return offs[b] + j * (j + 1) // 2 + i


def _assemble(p: SdpProblem):
    import cvxopt

    offs = _layout(p)
    nvar = offs[-1]

    A = np.zeros((len(p.rows), nvar))
    b = np.zeros(len(p.rows))
    for r, (sc, bl, rhs) in enumerate(p.rows):
        for k, v in sc.items():
            if not 0 <= k < p.n_scalars:
                raise ConicError(f"row {r} references unknown scalar {k}")
            A[r, k] += v
        for (bi, i, j), v in bl.items():
            if i > j:
                i, j = j, i
            A[r, _tri_index(offs, bi, i, j)] += v
        b[r] = rhs

    Gi, Gj, Gv = [], [], []
    row0 = 0
    for bi, d in enumerate(p.block_dims):
        for j in range(d):
            for i in range(d):
                Gi.append(row0 + j * d + i)
                Gj.append(_tri_index(offs, bi, min(i, j), max(i, j)))
                Gv.append(-1.0)
        row0 += d * d
    G = cvxopt.spmatrix(Gv, Gi, Gj, (row0, nvar))

    c = np.zeros(nvar)
    for k, v in p.objective.items():
        c[k] = v
    return A, b, G, c, offs


def _reduce_rows(A: np.ndarray, b: np.ndarray):
    """Row-normalize and compress to full row rank; detect inconsistency."""
    if A.shape[0] == 0:
        return A, b, False
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 0.0
    if np.any(~keep & (np.abs(b) > 1e-12)):
        return None, None, True  # 0 = nonzero: trivially infeasible
    A, b, norms = A[keep], b[keep], norms[keep]
    A = A / norms[:, None]
    b = b / norms
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)
    rank = int(np.sum(s > tol))
    Ar = u[:, :rank].T @ A
    br = u[:, :rank].T @ b
    if np.linalg.norm(b - u[:, :rank] @ br) > 1e-9 * max(1.0, np.linalg.norm(b)):
        return None, None, True
    return Ar, br, False


def _unpack(p: SdpProblem, x: np.ndarray, offs):
    scalars = x[: p.n_scalars].copy()
    blocks = []
    for bi, d in enumerate(p.block_dims):
        M = np.zeros((d, d))
        for j in range(d):
            for i in range(j + 1):
                v = x[_tri_index(offs, bi, i, j)]
                M[i, j] = v
                M[j, i] = v
        blocks.append(M)
    return scalars, blocks


def _unpack_duals(p: SdpProblem, z: np.ndarray):
    out = []
    row0 = 0
    for d in p.block_dims:
        out.append(z[row0 : row0 + d * d].reshape(d, d, order="F"))
        row0 += d * d
    return out


def solve_sdp(p: SdpProblem, tol: float | None = None, max_iter: int = 200) -> SdpSolution:
    """Solve the SDP; statuses carry independently recomputed residuals.

    optimal          - KKT residuals and relative gap within tol
    primal_infeasible- verified improving dual ray returned as certificate
    dual_infeasible  - verified improving primal ray (unbounded objective)
    max_iter         - no certified conclusion; diagnostics attached
    """
    import cvxopt
    import cvxopt.solvers

    if tol is None:
        tol = default_tol()
    if not p.block_dims:
        raise ConicError("a problem needs at least one PSD block")

    A0, b0, G, c, offs = _assemble(p)
    Ar, br, trivially_infeasible = _reduce_rows(A0, b0)
    if trivially_infeasible:
        return SdpSolution(
            status="primal_infeasible", scalars=None, blocks=None, dual_eq=None,
            dual_blocks=None, objective=None, gap=np.inf, rel_gap=np.inf,
            primal_residual=np.inf, dual_residual=np.inf, min_block_eig=0.0,
            iterations=0, tol=tol, certificate={"reason": "inconsistent equality rows"},
        )

    opts = {
        "show_progress": False,
        "maxiters": int(max_iter),
        "abstol": tol,
        "reltol": tol,
        "feastol": tol,
        "refinement": 2,
    }
    h = cvxopt.matrix(np.zeros(G.size[0]))
    dims = {"l": 0, "q": [], "s": list(p.block_dims)}
    try:
        sol = cvxopt.solvers.conelp(
            cvxopt.matrix(c), G, h, dims=dims,
            A=cvxopt.matrix(Ar), b=cvxopt.matrix(br),
            kktsolver="ldl", options=opts,
        )
    except (ZeroDivisionError, ValueError, ArithmeticError) as exc:
        return SdpSolution(
            status="max_iter", scalars=None, blocks=None, dual_eq=None,
            dual_blocks=None, objective=None, gap=np.inf, rel_gap=np.inf,
            primal_residual=np.inf, dual_residual=np.inf, min_block_eig=-np.inf,
            iterations=0, tol=tol, diagnostics=f"solver breakdown: {exc}",
        )

    iters = int(sol.get("iterations", 0))
    status = sol["status"]
    Gd = np.asarray(cvxopt.matrix(G))

    def finish_optimal():
        x = np.asarray(sol["x"]).ravel()
        y = np.asarray(sol["y"]).ravel() if sol["y"] is not None else np.zeros(0)
        z = np.asarray(sol["z"]).ravel()
        scalars, blocks = _unpack(p, x, offs)
        zblocks = _unpack_duals(p, z)

        scale_b = max(1.0, float(np.linalg.norm(br))) if br.size else 1.0
        pres = float(np.linalg.norm(Ar @ x - br)) / scale_b if br.size else 0.0
        min_eig = min(
            (float(np.min(np.linalg.eigvalsh(B))) for B in blocks), default=0.0
        )
        dres_vec = c + (Ar.T @ y if y.size else 0.0) + Gd.T @ z
        dres = float(np.linalg.norm(dres_vec)) / max(1.0, float(np.linalg.norm(c)))
        pobj = float(c @ x)
        dobj = float(-(br @ y)) if y.size else 0.0
        gap = abs(pobj - dobj)
        rel_gap = gap / max(1.0, abs(pobj))
        block_scale = max(
            (float(np.max(np.abs(B))) for B in blocks if B.size), default=1.0
        )
        okay = (
            pres <= 10 * tol
            and dres <= 10 * tol
            and rel_gap <= 10 * tol
            and min_eig >= -10 * tol * max(1.0, block_scale)
        )
        st = "optimal" if okay else "max_iter"
        diag = "" if okay else (
            f"claimed optimal but residuals exceed tolerance: pres={pres:.2e} "
            f"dres={dres:.2e} relgap={rel_gap:.2e} mineig={min_eig:.2e}"
        )
        return SdpSolution(
            status=st, scalars=scalars, blocks=blocks, dual_eq=y,
            dual_blocks=zblocks, objective=pobj, gap=gap, rel_gap=rel_gap,
            primal_residual=pres, dual_residual=dres, min_block_eig=min_eig,
            iterations=iters, tol=tol, diagnostics=diag,
        )

    if status == "optimal":
        return finish_optimal()

    if status == "primal infeasible":
        y = np.asarray(sol["y"]).ravel() if sol["y"] is not None else np.zeros(0)
        z = np.asarray(sol["z"]).ravel()
        ray = float(-(br @ y)) if y.size else 0.0  # normalized to 1 by conelp
        res = float(np.linalg.norm((Ar.T @ y if y.size else 0.0) + Gd.T @ z))
        zeigs = min(
            (float(np.min(np.linalg.eigvalsh(B))) for B in _unpack_duals(p, z)),
            default=0.0,
        )
        if ray >= tol and res <= 1e-6 * max(1.0, float(np.linalg.norm(y))) and zeigs >= -1e-8:
            return SdpSolution(
                status="primal_infeasible", scalars=None, blocks=None, dual_eq=y,
                dual_blocks=_unpack_duals(p, z), objective=None, gap=np.inf,
                rel_gap=np.inf, primal_residual=np.inf, dual_residual=res,
                min_block_eig=zeigs, iterations=iters, tol=tol,
                certificate={"improvement": ray, "ray_residual": res},
            )
        status = "unknown"

    if status == "dual infeasible":
        x = np.asarray(sol["x"]).ravel() if sol["x"] is not None else None
        if x is not None:
            scalars, blocks = _unpack(p, x, offs)
            drop = float(c @ x)  # normalized to -1 by conelp
            eqres = float(np.linalg.norm(Ar @ x)) if br.size else 0.0
            min_eig = min(
                (float(np.min(np.linalg.eigvalsh(B))) for B in blocks), default=0.0
            )
            if drop <= -tol and eqres <= 1e-6 and min_eig >= -1e-8:
                return SdpSolution(
                    status="dual_infeasible", scalars=scalars, blocks=blocks,
                    dual_eq=None, dual_blocks=None, objective=None, gap=np.inf,
                    rel_gap=np.inf, primal_residual=eqres, dual_residual=np.inf,
                    min_block_eig=min_eig, iterations=iters, tol=tol,
                    certificate={"improvement": -drop, "eq_residual": eqres},
                )
        status = "unknown"

    # 'unknown': try to salvage a verified optimal from the final iterate
    if sol.get("x") is not None and sol.get("z") is not None:
        salvaged = finish_optimal()
        if salvaged.status == "optimal":
            return salvaged
        diag = salvaged.diagnostics
    else:
        diag = "no iterate returned"
    return SdpSolution(
        status="max_iter", scalars=None, blocks=None, dual_eq=None,
        dual_blocks=None, objective=None, gap=np.inf, rel_gap=np.inf,
        primal_residual=np.inf, dual_residual=np.inf, min_block_eig=-np.inf,
        iterations=iters, tol=tol,
        diagnostics=f"no certified conclusion after {iters} iterations; {diag}",
    )


def dump_problem(p: SdpProblem, path: str):
    """Write the problem in a sparse text format (see docs/formats)."""
    lines = [
        "DIQC-SDP 1",
        f"scalars {p.n_scalars}",
        "blocks " + " ".join(str(d) for d in p.block_dims),
        f"rows {len(p.rows)}",
    ]
    for r, (sc, bl, rhs) in enumerate(p.rows):
        for k in sorted(sc):
            lines.append(f"s {r} {k} {sc[k]!r}")
        for (bi, i, j) in sorted(bl):
            lines.append(f"b {r} {bi} {i} {j} {bl[(bi, i, j)]!r}")
        lines.append(f"r {r} {rhs!r}")
    for k in sorted(p.objective):
        lines.append(f"c {k} {p.objective[k]!r}")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
