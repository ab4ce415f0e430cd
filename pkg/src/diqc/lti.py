"""LTI realizations, frequency response, output stacking and the J-spectral
factorization that turns a combined soft multiplier into a hard one.

The J-spectral factorization follows the standard Riccati construction: for a
filter Psi = (A, B, C, D) and constant symmetric weight M, the multiplier

    Pi(jw) = Psi(jw)* M Psi(jw)

is rewritten as PsiTilde(jw)* Mt PsiTilde(jw) with Mt = diag(I_nv, -I_nw),
where PsiTilde shares (A, B) with Psi and its output matrices come from the
stabilizing solution of ARE(A, B, Q, R, S) with

    Q = C'MC,  S = C'MD,  R = D'MD.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import linalg

DEFAULT_GRID = np.concatenate([[0.0], np.logspace(-3, 3, 200), [1e6]])


class LtiError(RuntimeError):
    pass


@dataclass(frozen=True)
class StateSpace:
    """Continuous-time realization (A, B, C, D); n = 0 gives a static gain."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1) if np.size(self.B) else np.zeros((A.shape[0], D.shape[1]))
        C = np.asarray(self.C, dtype=float).reshape(-1, A.shape[0]) if np.size(self.C) else np.zeros((D.shape[0], A.shape[0]))
        if A.shape[0] != A.shape[1]:
            raise LtiError("A must be square")
        if B.shape != (A.shape[0], D.shape[1]) or C.shape != (D.shape[0], A.shape[0]):
            raise LtiError(
                f"inconsistent dimensions: A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            )
        for name, M in (("A", A), ("B", B), ("C", C), ("D", D)):
            if M.size and not np.all(np.isfinite(M)):
                raise LtiError(f"non-finite entries in {name}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @classmethod
    def static(cls, D) -> "StateSpace":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @classmethod
    def from_tf(cls, num, den) -> "StateSpace":
        """SISO controllable-canonical realization from ascending coefficients."""
        num = np.trim_zeros(np.asarray(num, dtype=float), "b")
        den = np.trim_zeros(np.asarray(den, dtype=float), "b")
        if den.size == 0:
            raise LtiError("zero denominator")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise LtiError("improper transfer function")
        lead = den[-1]
        den = den / lead
        num = num / lead
        n = den.size - 1
        if n == 0:
            return cls.static([[num[0]]])
        num = np.concatenate([num, np.zeros(den.size - num.size)])
        d = num[-1]
        rem = num[:-1] - d * den[:-1]
        A = np.zeros((n, n))
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -den[:-1]
        B = np.zeros((n, 1))
        B[-1, 0] = 1.0
        C = rem.reshape(1, n)
        return cls(A, B, C, np.array([[d]]))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def is_stable(self) -> bool:
        return linalg.is_hurwitz(self.A)


def freq_response(G: StateSpace, omega: float) -> np.ndarray:
    """Transfer matrix C (jwI - A)^{-1} B + D at a single frequency."""
    n = G.n_states
    if n == 0:
        return G.D.astype(complex)
    M = 1j * omega * np.eye(n) - G.A
    try:
        sol = np.linalg.solve(M, G.B)
    except np.linalg.LinAlgError as exc:
        raise LtiError(f"resolvent singular at omega={omega}") from exc
    return G.C @ sol + G.D


def stack_outputs(systems) -> StateSpace:
    """Share the input across systems and stack their outputs.

    Block-diagonal A, stacked C/D; output dimension is the sum over the list.
    """
    systems = list(systems)
    if not systems:
        raise LtiError("cannot stack an empty list")
    m = systems[0].n_inputs
    for G in systems:
        if G.n_inputs != m:
            raise LtiError("input dimensions differ across stacked systems")
    A = sla.block_diag(*[G.A for G in systems]) if systems else np.zeros((0, 0))
    B = np.vstack([G.B for G in systems])
    C = sla.block_diag(*[G.C for G in systems])
    D = np.vstack([G.D for G in systems])
    # block_diag of empties loses shape; rebuild explicitly
    n = sum(G.n_states for G in systems)
    p = sum(G.n_outputs for G in systems)
    A = np.asarray(A, dtype=float).reshape(n, n)
    C_full = np.zeros((p, n))
    r0, c0 = 0, 0
    for G in systems:
        C_full[r0:r0 + G.n_outputs, c0:c0 + G.n_states] = G.C
        r0 += G.n_outputs
        c0 += G.n_states
    return StateSpace(A, B.reshape(n, m), C_full, D)


def output_ranges(systems):
    """Row range of each stacked system's outputs."""
    out = []
    r0 = 0
    for G in systems:
        out.append(range(r0, r0 + G.n_outputs))
        r0 += G.n_outputs
    return out


def multiplier_freq(Psi: StateSpace, M: np.ndarray, omega: float) -> np.ndarray:
    """Pi(jw) = Psi(jw)* M Psi(jw), symmetrized to kill rounding skew."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    F = freq_response(Psi, omega)
    P = F.conj().T @ M @ F
    return 0.5 * (P + P.conj().T)


def qsr_blocks(Psi: StateSpace, M: np.ndarray):
    """(Q, S, R) of the multiplier against filter states vs feedthrough:
    Q = C'MC, S = C'MD, R = D'MD."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return Psi.C.T @ M @ Psi.C, Psi.C.T @ M @ Psi.D, Psi.D.T @ M @ Psi.D


@dataclass(frozen=True)
class JFactorization:
    """Result of a J-spectral factorization."""

    psi_tilde: StateSpace
    m_tilde: np.ndarray
    X: np.ndarray            # stabilizing ARE solution over the filter states
    are_residual: float
    grid_residual: float     # relative multiplier identity error on the grid
    closed_loop_eigs: np.ndarray


def j_spectral_factorize(Psi: StateSpace, M_lambda: np.ndarray, partition,
                         grid=None, grid_tol: float = 1e-6,
                         sign_tol: float = 1e-9) -> JFactorization:
    """J-spectral factorization of Pi = Psi~ M_lambda Psi.

    `partition` is (n_v, n_w). Preconditions checked here:
      - Psi stable;
      - Pi_vv >= 0 and Pi_ww <= 0 on the grid (within sign_tol);
      - R = D'MD nonsingular with inertia (n_v positive, n_w negative);
      - the ARE has a stabilizing solution.
    Violations raise LtiError and mark the weight vector inadmissible.
    """
    n_v, n_w = partition
    M_lambda = np.atleast_2d(np.asarray(M_lambda, dtype=float))
    if Psi.n_inputs != n_v + n_w:
        raise LtiError("filter input dimension does not match partition")
    if not Psi.is_stable():
        raise LtiError("filter must be stable")
    if grid is None:
        grid = DEFAULT_GRID

    # sign conditions of the combined multiplier
    for w in grid:
        Pi = multiplier_freq(Psi, M_lambda, w)
        vv = Pi[:n_v, :n_v]
        ww = Pi[n_v:, n_v:]
        if n_v and float(np.min(np.linalg.eigvalsh(vv))) < -sign_tol:
            raise LtiError(f"Pi_vv indefinite at omega={w}: inadmissible weights")
        if n_w and float(np.max(np.linalg.eigvalsh(ww))) > sign_tol:
            raise LtiError(f"Pi_ww indefinite at omega={w}: inadmissible weights")

    Q, S, R = qsr_blocks(Psi, M_lambda)
    revals, U = np.linalg.eigh(R)
    if np.min(np.abs(revals)) <= 1e-10 * max(1.0, np.max(np.abs(revals))):
        raise LtiError("R = D'MD is singular: inadmissible weights")
    n_pos = int(np.sum(revals > 0))
    if n_pos != n_v or (len(revals) - n_pos) != n_w:
        raise LtiError(
            f"R inertia ({n_pos}+,{len(revals)-n_pos}-) does not match partition "
            f"({n_v}+,{n_w}-): inadmissible weights"
        )
    order = np.argsort(-revals)  # positive block first
    revals = revals[order]
    U = U[:, order]
    Mt = np.diag(np.concatenate([np.ones(n_v), -np.ones(n_w)]))
    Dz = np.diag(np.sqrt(np.abs(revals))) @ U.T

    n_psi = Psi.n_states
    if n_psi == 0:
        X = np.zeros((0, 0))
        Cz = np.zeros((n_v + n_w, 0))
        cl_eigs = np.zeros(0, dtype=complex)
        resid = 0.0
    else:
        try:
            X = linalg.solve_are(Psi.A, Psi.B, Q, R, S)
        except linalg.LinalgError as exc:
            raise LtiError(f"no stabilizing ARE solution: {exc}") from exc
        resid = linalg.are_residual(Psi.A, Psi.B, Q, R, S, X)
        Cz = Mt @ np.linalg.inv(Dz).T @ (Psi.B.T @ X + S.T)
        cl_eigs = np.linalg.eigvals(
            Psi.A - Psi.B @ np.linalg.solve(R, (X @ Psi.B + S).T)
        )

    psi_tilde = StateSpace(Psi.A, Psi.B, Cz, Dz)

    # frequency-grid identity check
    max_rel = 0.0
    for w in grid:
        Pi = multiplier_freq(Psi, M_lambda, w)
        Pit = multiplier_freq(psi_tilde, Mt, w)
        denom = max(float(np.linalg.norm(Pi)), 1e-9)
        max_rel = max(max_rel, float(np.linalg.norm(Pi - Pit)) / denom)
    if max_rel > grid_tol:
        raise LtiError(f"J-factor identity failed on grid: rel err {max_rel:.2e}")

    return JFactorization(psi_tilde, Mt, X, resid, max_rel, cl_eigs)
