"""Prototype: delay multiplier set, combination, J-spectral factorization."""
import numpy as np
import scipy.linalg as sla

# --- spectral factor of eta(w) = (w^2+0.08w^4)/(1+0.13w^2+0.02w^4) ---
# psi(s) = (sqrt(0.08) s^2 + s) / (sqrt(0.02) s^2 + beta s + 1), beta = sqrt(0.13+2 sqrt(0.02))
b2 = np.sqrt(0.08)
beta = np.sqrt(0.13 + 2 * np.sqrt(0.02))
a2 = np.sqrt(0.02)

def eta(w):
    return (w**2 + 0.08 * w**4) / (1 + 0.13 * w**2 + 0.02 * w**4)

def psi_tf(s):
    return (b2 * s**2 + s) / (a2 * s**2 + beta * s + 1)

ws = np.logspace(-3, 3, 200)
err = np.abs(np.abs(psi_tf(1j * ws))**2 - eta(ws)) / np.maximum(eta(ws), 1e-30)
print("spectral factor max rel err on grid:", err.max())

# controllable canonical realization of psi(s) (monic denominator)
# psi(s) = (2 s^2 + c1 s)/ (s^2 + d1 s + d0), divide num/den by a2
num = np.array([b2, 1.0, 0.0]) / a2   # 2 s^2 + (1/a2) s + 0
den = np.array([1.0, beta / a2, 1.0 / a2])
d1, d0 = den[1], den[2]
n2, n1, n0 = num
# strictly proper part: num - n2*den
r1 = n1 - n2 * d1
r0 = n0 - n2 * d0
A1 = np.array([[0.0, 1.0], [-d0, -d1]])
B1 = np.array([[0.0], [1.0]])
C1 = np.array([[r0, r1]])
D1 = np.array([[n2]])

def fr(A, B, C, D, w):
    n = A.shape[0]
    if n == 0:
        return D.astype(complex)
    return C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D

err2 = max(abs(fr(A1, B1, C1, D1, w)[0, 0] - psi_tf(1j * w)) for w in ws)
print("realization max err:", err2)

# --- Theta scaling: psi_Theta(s) = psi(Theta s): A->A/Theta, B->B/Theta ---
Theta = 0.04
At = A1 / Theta
Bt = B1 / Theta
err3 = max(abs(fr(At, Bt, C1, D1, w)[0, 0] - psi_tf(1j * Theta * w)) for w in ws)
print("theta-scaled realization max err:", err3)

# --- stacked filter Psi = [Psi1; Psi2], inputs (v, w) ---
# Psi1 = I2 (static), Psi2 = diag(psi_Theta(s), 1)
# stacked: states = psi_Theta states (2); outputs (z1(2), z2(2))
A_psi = At
B_psi = np.hstack([Bt, np.zeros((2, 1))])     # psi_Theta driven by v only
C_psi = np.vstack([np.zeros((2, 2)), np.vstack([C1, np.zeros((1, 2))])])
D_psi = np.vstack([np.eye(2), np.array([[D1[0, 0], 0.0], [0.0, 1.0]])])
M1 = np.array([[0.0, -1.0], [-1.0, -1.0]])
M2 = np.diag([1.0, -1.0])

lam = np.array([1.0, 1.0])
Mbar = sla.block_diag(lam[0] * M1, lam[1] * M2)

Q = C_psi.T @ Mbar @ C_psi
S = C_psi.T @ Mbar @ D_psi
R = D_psi.T @ Mbar @ D_psi
print("R =", R, "eigs", np.linalg.eigvalsh(R))

# --- ARE(A_psi, B_psi, Q, R, S): A'X + XA - (XB+S) R^-1 (XB+S)' + Q = 0 ---
def solve_are(A, B, Q, R, S):
    n = A.shape[0]
    Rinv = np.linalg.inv(R)
    Ah = A - B @ Rinv @ S.T
    G = B @ Rinv @ B.T
    Qh = Q - S @ Rinv @ S.T
    H = np.block([[Ah, -G], [-Qh, -Ah.T]])
    T, Z, sdim = sla.schur(H, output="real", sort=lambda re, im: re < 0)
    assert sdim == n, (sdim, n)
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)
    # one Newton step
    res = Ah.T @ X + X @ Ah - X @ G @ X + Qh
    Acl = Ah - G @ X
    dX = sla.solve_sylvester(Acl.T, Acl, -res)
    X = X + 0.5 * (dX + dX.T)
    return X

X = solve_are(A_psi, B_psi, Q, R, S)
res = A_psi.T @ X + X @ A_psi - (X @ B_psi + S) @ np.linalg.solve(R, (X @ B_psi + S).T) + Q
print("ARE residual:", np.linalg.norm(res))
Acl = A_psi - B_psi @ np.linalg.solve(R, (X @ B_psi + S).T)
print("closed-loop eigs:", np.linalg.eigvals(Acl))

# --- J factor: R = Dz' Mt Dz with Mt = diag(1,-1), Dz = |L|^{1/2} U', positive-first ---
evals, U = np.linalg.eigh(R)
order = np.argsort(-evals)   # positive first
evals = evals[order]
U = U[:, order]
Mt = np.diag([1.0, -1.0])
Dz = np.diag(np.sqrt(np.abs(evals))) @ U.T
print("R refactor err:", np.linalg.norm(Dz.T @ Mt @ Dz - R))

Cz = Mt @ np.linalg.inv(Dz).T @ (B_psi.T @ X + S.T)

# --- grid identity: PsiTilde~ Mt PsiTilde == Psi~ Mbar Psi ---
def herm(Psi):
    A, B, C, D = Psi
    def f(w):
        F = fr(A, B, C, D, w)
        return F
    return f

maxrel = 0.0
for w in np.concatenate([[0.0], ws, [1e6]]):
    F1 = fr(A_psi, B_psi, C_psi, D_psi, w)
    Pi1 = F1.conj().T @ Mbar @ F1
    F2 = fr(A_psi, B_psi, Cz, Dz, w)
    Pi2 = F2.conj().T @ Mt @ F2
    rel = np.linalg.norm(Pi1 - Pi2) / max(np.linalg.norm(Pi1), 1e-12)
    maxrel = max(maxrel, rel)
print("grid identity max rel err:", maxrel)

# also check Pi entries vs closed form: Pi_vv = lam2*eta(Theta w), etc.
w = 1.0
F1 = fr(A_psi, B_psi, C_psi, D_psi, w)
Pi = F1.conj().T @ Mbar @ F1
print("Pi(1):", Pi)
print("expected vv:", lam[1] * eta(Theta * 1.0), " vw:", -lam[0], " ww:", -lam[0] - lam[1])
