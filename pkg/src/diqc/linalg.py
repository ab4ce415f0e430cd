"""Dense linear-algebra kernels: ordered Schur form, stabilizing Riccati
solutions, scalar spectral factorization and an H-infinity norm oracle.

Matrices are plain numpy arrays throughout. The Riccati solver handles the
general form

    A'X + XA - (XB + S) R^{-1} (XB + S)' + Q = 0

with R symmetric invertible but possibly indefinite, which is exactly what
the J-spectral factorization of combined multipliers requires.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

HURWITZ_TOL = -1e-9  # max real part must be below this to count as Hurwitz


class LinalgError(RuntimeError):
    pass


def is_hurwitz(A: np.ndarray, tol: float = HURWITZ_TOL) -> bool:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return True
    return float(np.max(np.linalg.eigvals(A).real)) < tol


def real_schur(A: np.ndarray, stable_first: bool = False):
    """Real Schur decomposition A = Q T Q' with optional stable-first ordering.

    Returns (Q, T, eigs) where eigs are the eigenvalues read off the
    quasi-triangular T. Raises LinalgError on LAPACK non-convergence.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise LinalgError("real_schur needs a square matrix")
    try:
        if stable_first:
            T, Q, _ = sla.schur(A, output="real", sort=lambda re, im: re < 0.0)
        else:
            T, Q = sla.schur(A, output="real")
    except sla.LinAlgError as exc:  # pragma: no cover - LAPACK failure path
        raise LinalgError(f"Schur iteration failed to converge: {exc}") from exc
    eigs = sla.eigvals(T)
    return Q, T, eigs


def solve_are(A, B, Q, R, S=None, refine: int = 1) -> np.ndarray:
    """Stabilizing solution of A'X + XA - (XB+S) R^{-1} (XB+S)' + Q = 0.

    Computed from the stable invariant subspace of the 2n x 2n Hamiltonian
    via ordered Schur form, polished with `refine` Newton steps. The closed
    loop A - B R^{-1} (XB+S)' is verified Hurwitz; LinalgError otherwise
    (e.g. Hamiltonian eigenvalues on the imaginary axis).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    if S is None:
        S = np.zeros((n, m))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if np.linalg.norm(R - R.T) > 1e-12 * max(1.0, np.linalg.norm(R)):
        raise LinalgError("R must be symmetric")
    if n == 0:
        return np.zeros((0, 0))
    try:
        Rinv = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise LinalgError("R is singular") from exc

    Ah = A - B @ Rinv @ S.T
    G = B @ Rinv @ B.T
    Qh = Q - S @ Rinv @ S.T
    H = np.block([[Ah, -G], [-Qh, -Ah.T]])

    heigs = np.linalg.eigvals(H)
    scale = max(1.0, float(np.max(np.abs(heigs))))
    if np.any(np.abs(heigs.real) < 1e-10 * scale):
        raise LinalgError(
            "no stabilizing solution: Hamiltonian has imaginary-axis eigenvalues"
        )

    T, Z, sdim = sla.schur(H, output="real", sort=lambda re, im: re < 0.0)
    if sdim != n:
        raise LinalgError(f"stable subspace has dimension {sdim}, expected {n}")
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    try:
        X = np.linalg.solve(U1.T, U2.T).T
    except np.linalg.LinAlgError as exc:
        raise LinalgError("stable subspace is not a graph subspace") from exc
    X = 0.5 * (X + X.T)

    for _ in range(refine):
        res = Ah.T @ X + X @ Ah - X @ G @ X + Qh
        Acl = Ah - G @ X
        try:
            dX = sla.solve_sylvester(Acl.T, Acl, -res)
        except (sla.LinAlgError, ValueError):  # pragma: no cover
            break
        X = X + 0.5 * (dX + dX.T)

    closed = A - B @ Rinv @ (X @ B + S).T
    if not is_hurwitz(closed):
        raise LinalgError("computed Riccati solution is not stabilizing")
    return X


def are_residual(A, B, Q, R, S, X) -> float:
    """Frobenius norm of the Riccati residual at X."""
    A, B, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, Q, R))
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return 0.0
    S = np.atleast_2d(np.asarray(S, dtype=float)) if S is not None else np.zeros(B.shape)
    K = X @ B + S
    res = A.T @ X + X @ A - K @ np.linalg.solve(R, K.T) + Q
    return float(np.linalg.norm(res))


# ---------------------------------------------------------------------------
# scalar spectral factorization
# ---------------------------------------------------------------------------


def _even_poly_value(even_coeffs, omega):
    """Evaluate sum_k c_k * omega^(2k); coeffs are for even powers only."""
    x = np.asarray(omega, dtype=float) ** 2
    out = np.zeros_like(x)
    for k in reversed(range(len(even_coeffs))):
        out = out * x + even_coeffs[k]
    return out


def spectral_factor(num_even, den_even, grid=None, rel_tol: float = 1e-8):
    """Stable minimum-phase factor of a nonnegative even rational function.

    `num_even[k]` is the coefficient of omega^(2k); similarly for the
    denominator. Returns (num_s, den_s): ascending coefficient arrays of a
    rational psi(s) = n(s)/d(s) with d strictly Hurwitz, n free of open
    right-half-plane roots, and |psi(j omega)|^2 = num(omega)/den(omega).

    Both inputs must be sign-definite on the check grid (numerator >= 0,
    denominator > 0); LinalgError otherwise. Works by rooting the even
    polynomials in s and keeping left-half-plane roots, splitting any
    imaginary-axis root pairs evenly.
    """
    num_even = np.asarray(num_even, dtype=float)
    den_even = np.asarray(den_even, dtype=float)
    if grid is None:
        grid = np.concatenate([[0.0], np.logspace(-3, 3, 200)])
    nv = _even_poly_value(num_even, grid)
    dv = _even_poly_value(den_even, grid)
    if np.any(nv < -1e-12 * max(1.0, np.max(np.abs(nv)))):
        raise LinalgError("numerator is not nonnegative on the check grid")
    if np.any(dv <= 0.0):
        raise LinalgError("denominator is not positive on the check grid")

    def half_factor(even_coeffs):
        # q(omega) = P(s) with s = j*omega: coefficient of s^(2k) is (-1)^k c_k
        c = np.array(even_coeffs, dtype=float)
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        deg_u = len(c) - 1
        if deg_u == 0:
            if c[0] < 0:
                raise LinalgError("negative constant spectrum")
            return np.array([np.sqrt(c[0])])
        signed = np.array([(-1.0) ** k * c[k] for k in range(len(c))])
        # roots in s of sum signed[k] s^(2k)
        full = np.zeros(2 * deg_u + 1)
        full[::2] = signed
        roots = np.roots(full[::-1])
        scale = max(1.0, np.max(np.abs(roots)))
        lhp = [r for r in roots if r.real < -1e-9 * scale]
        axis = [r for r in roots if abs(r.real) <= 1e-9 * scale]
        # pair up imaginary-axis roots (must come with even multiplicity)
        axis = sorted(axis, key=lambda r: (abs(r.imag), r.imag))
        if len(axis) % 2:
            raise LinalgError("odd imaginary-axis root multiplicity in spectrum")
        taken = [axis[i] for i in range(0, len(axis), 2)]
        sel = lhp + [complex(0.0, r.imag) if abs(r.imag) > 1e-9 * scale else 0.0 for r in taken]
        if len(sel) != deg_u:
            raise LinalgError("root selection failed for spectral factor")
        p = np.poly(sel)  # descending, monic, possibly complex residue
        p = np.real_if_close(p, tol=1e6).real
        # gain g so that g^2 * n(s) n(-s) = P(s); match leading coefficient
        lead = signed[-1] * (-1.0) ** deg_u  # coeff of s^(2 deg_u) in n(s)n(-s) is (-1)^deg a^2
        if lead < 0:
            raise LinalgError("indefinite spectrum (negative leading coefficient)")
        g = np.sqrt(lead)
        return (g * p)[::-1]  # ascending

    n_s = half_factor(num_even)
    d_s = half_factor(den_even)
    # normalize leading denominator coefficient positive; fix overall gain sign
    if d_s[np.nonzero(d_s)[0][-1]] < 0:
        d_s = -d_s
    if n_s[np.nonzero(n_s)[0][-1]] < 0 if np.any(n_s) else False:
        n_s = -n_s

    # verify on the grid
    s = 1j * grid
    nval = np.polyval(n_s[::-1], s)
    dval = np.polyval(d_s[::-1], s)
    lhs = np.abs(nval) ** 2 * dv
    rhs = nv * np.abs(dval) ** 2
    scale = np.maximum(np.abs(rhs), 1e-30)
    err = float(np.max(np.abs(lhs - rhs) / np.maximum(scale, np.max(scale) * 1e-9)))
    if err > rel_tol:
        raise LinalgError(f"spectral factor verification failed: rel err {err:.2e}")
    return n_s, d_s


# ---------------------------------------------------------------------------
# H-infinity norm
# ---------------------------------------------------------------------------


def _sigma_max(A, B, C, D, omega):
    n = A.shape[0]
    if n == 0:
        return float(np.linalg.norm(D, 2))
    F = C @ np.linalg.solve(1j * omega * np.eye(n) - A, B) + D
    return float(np.linalg.norm(F, 2))


def hinf_norm(G, tol: float = 1e-6) -> float:
    """H-infinity norm of a stable system via gamma bisection.

    `G` is anything with A, B, C, D array attributes. Uses the standard
    Hamiltonian imaginary-axis eigenvalue test for the level check, started
    from a coarse frequency-grid lower bound; a dense grid refinement backs
    up the bisection result. Raises LinalgError if A is not Hurwitz.
    """
    A = np.atleast_2d(np.asarray(G.A, dtype=float))
    B = np.atleast_2d(np.asarray(G.B, dtype=float))
    C = np.atleast_2d(np.asarray(G.C, dtype=float))
    D = np.atleast_2d(np.asarray(G.D, dtype=float))
    n = A.shape[0]
    if n == 0 or B.size == 0 or C.size == 0:
        return float(np.linalg.norm(D, 2))
    if not is_hurwitz(A):
        raise LinalgError("hinf_norm requires a Hurwitz A matrix")

    omegas = np.concatenate([[0.0], np.logspace(-4, 6, 120)])
    glo = max(float(np.linalg.norm(D, 2)), max(_sigma_max(A, B, C, D, w) for w in omegas))

    def has_imaginary_eig(gamma):
        R = gamma**2 * np.eye(B.shape[1]) - D.T @ D
        try:
            Rinv = np.linalg.inv(R)
        except np.linalg.LinAlgError:
            return True
        H = np.block(
            [
                [A + B @ Rinv @ D.T @ C, B @ Rinv @ B.T],
                [-C.T @ (np.eye(C.shape[0]) + D @ Rinv @ D.T) @ C, -(A + B @ Rinv @ D.T @ C).T],
            ]
        )
        eigs = np.linalg.eigvals(H)
        scale = max(1.0, float(np.max(np.abs(eigs))))
        return bool(np.any(np.abs(eigs.real) < 1e-9 * scale))

    lo = glo
    hi = max(2.0 * glo, glo + 1.0, 1e-6)
    for _ in range(80):
        if not has_imaginary_eig(hi):
            break
        hi *= 2.0
    else:  # pragma: no cover
        raise LinalgError("hinf_norm bisection failed to bracket")

    while (hi - lo) > tol * max(hi, 1e-12):
        mid = 0.5 * (lo + hi)
        if has_imaginary_eig(mid):
            lo = mid
        else:
            hi = mid
    result = 0.5 * (lo + hi)

    # dense-grid fallback: refine around the grid peak and keep the larger value
    peaks = [(_sigma_max(A, B, C, D, w), w) for w in omegas]
    pk, wk = max(peaks)
    if pk > result * (1.0 + tol):
        wlo, whi = wk / 4.0 if wk > 0 else 0.0, wk * 4.0 if wk > 0 else 1.0
        fine = np.linspace(wlo, whi, 2000)
        result = max(result, max(_sigma_max(A, B, C, D, w) for w in fine))
    return float(result)
