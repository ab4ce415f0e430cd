"""Prototype: jet-engine CCM synthesis + delta-IQC gain certification, phi-only polys."""
import numpy as np
import scipy.linalg as sla
from cvxopt import matrix, solvers, spmatrix

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-6
solvers.options["reltol"] = 1e-6
solvers.options["feastol"] = 1e-6
solvers.options["refinement"] = 2

# ---------- univariate poly helpers: coeff arrays, c[k] ~ phi^k ----------
def padd(a, b):
    n = max(len(a), len(b)); out = np.zeros(n)
    out[:len(a)] += a; out[:len(b)] += b; return out

def pmul(a, b):
    return np.convolve(a, b)

# affine-in-decisions polynomial: dict dec_idx -> coeff array; -1 is constant part
class AP:
    def __init__(self, d=None):
        self.d = dict(d or {})
    @staticmethod
    def const(c):
        return AP({-1: np.atleast_1d(np.asarray(c, float))})
    @staticmethod
    def dec(i, c=1.0):
        return AP({i: np.atleast_1d(np.asarray(c, float))})
    def __add__(self, o):
        out = dict(self.d)
        for k, v in o.d.items():
            out[k] = padd(out[k], v) if k in out else v
        return AP(out)
    def mulp(self, p):  # multiply by plain poly
        return AP({k: pmul(v, p) for k, v in self.d.items()})
    def scale(self, s):
        return AP({k: v * s for k, v in self.d.items()})

def ap_matmul(Mdec, Ppoly):
    """Mdec: matrix of AP; Ppoly: matrix of plain coeff arrays -> matrix of AP."""
    m, k = len(Mdec), len(Mdec[0]); k2, n = len(Ppoly), len(Ppoly[0])
    assert k == k2
    out = [[AP() for _ in range(n)] for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = AP()
            for t in range(k):
                acc = acc + Mdec[i][t].mulp(Ppoly[t][j])
            out[i][j] = acc
    return out

def poly_matmul(Apoly, Bpoly):
    m, k = len(Apoly), len(Apoly[0]); _, n = len(Bpoly), len(Bpoly[0])
    out = [[np.zeros(1) for _ in range(n)] for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = np.zeros(1)
            for t in range(k):
                acc = padd(acc, pmul(Apoly[i][t], Bpoly[t][j]))
            out[i][j] = acc
    return out

def z(*shape):
    return [[np.zeros(1) for _ in range(shape[1])] for _ in range(shape[0])]

# ---------- conelp wrapper (same mapping as scratch_conelp) ----------
def solve_sdp(n_scalars, block_dims, rows, objective):
    offs = [n_scalars]
    for d in block_dims:
        offs.append(offs[-1] + d * (d + 1) // 2)
    nvar = offs[-1]
    def tri(b, i, j):
        return offs[b] + j * (j + 1) // 2 + i
    A = np.zeros((len(rows), nvar)); bvec = np.zeros(len(rows))
    for r, (sc, bl, rhs) in enumerate(rows):
        for k, v in sc.items():
            A[r, k] += v
        for (b, i, j), v in bl.items():
            A[r, tri(b, i, j)] += v
        bvec[r] = rhs
    Gi, Gj, Gv = [], [], []
    row0 = 0
    for b, d in enumerate(block_dims):
        for j in range(d):
            for i in range(d):
                Gi.append(row0 + j * d + i); Gj.append(tri(b, min(i, j), max(i, j))); Gv.append(-1.0)
        row0 += d * d
    G = spmatrix(Gv, Gi, Gj, (row0, nvar)); h = matrix(np.zeros(row0))
    c = np.zeros(nvar)
    for k, v in objective.items():
        c[k] = v
    # normalize rows for conditioning
    for r in range(A.shape[0]):
        nrm = np.linalg.norm(A[r])
        if nrm > 0:
            A[r] /= nrm; bvec[r] /= nrm
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
    rank = int((s > tol).sum())
    Ar = u[:, :rank].T @ A; br = u[:, :rank].T @ bvec
    if np.linalg.norm(bvec - u[:, :rank] @ br) > 1e-9 * max(1, np.linalg.norm(bvec)):
        return "primal infeasible", None
    sol = solvers.conelp(matrix(c), G, h, dims={"l": 0, "q": [], "s": list(block_dims)},
                         A=matrix(Ar), b=matrix(br), kktsolver="ldl")
    return sol["status"], sol

# ---------- SOS scalarization for M(phi) <= -eps I on |phi|<=1 ----------
def pmi_rows(Mdec, m, nblocks_start, deg_x, mult_deg_x, eps, global_region=False):
    """Return (rows, block_dims) enforcing -y'My - sigma*(1-phi^2) - eps|y|^2 SOS.

    Gram basis: y_a * phi^k, k <= deg_x ; sigma basis y_a * phi^k, k <= mult_deg_x.
    Coefficient targets: monomial (a<=b pair, phi^K).
    """
    nb = deg_x + 1
    nbs = mult_deg_x + 1
    gsize = m * nb
    ssize = m * nbs
    bmain = nblocks_start
    bsig = nblocks_start + 1

    def gidx(a, k):
        return a * nb + k
    def sidx(a, k):
        return a * nbs + k

    # target coefficient map: (a, b, K) -> (scalar_terms, block_terms, rhs)
    rows = {}
    def row(a, b, K):
        key = (a, b, K)
        if key not in rows:
            rows[key] = ({}, {}, 0.0)
        return key
    def add_block(key, b, i, j, v):
        sc, bl, rhs = rows[key]
        ij = (b, min(i, j), max(i, j))
        bl[ij] = bl.get(ij, 0.0) + v
    def add_scalar(key, s, v):
        sc, bl, rhs = rows[key]
        sc[s] = sc.get(s, 0.0) + v
    def add_rhs(key, v):
        sc, bl, rhs = rows[key]
        rows[key] = (sc, bl, rhs + v)

    # main Gram: sum_{(a,k),(b,l)} G[(ak),(bl)] y_a y_b phi^{k+l}
    for a in range(m):
        for k in range(nb):
            for b in range(m):
                for l in range(nb):
                    i, j = gidx(a, k), gidx(b, l)
                    if i > j:
                        continue
                    aa, bb = min(a, b), max(a, b)
                    key = row(aa, bb, k + l)
                    add_block(key, bmain, i, j, 1.0 if i == j else 2.0)
    # sigma Gram * (1 - phi^2): contributes phi^{k+l} - phi^{k+l+2}
    for a in range(m):
        for k in range(nbs):
            for b in range(m):
                for l in range(nbs):
                    i, j = sidx(a, k), sidx(b, l)
                    if i > j:
                        continue
                    w = 1.0 if i == j else 2.0
                    aa, bb = min(a, b), max(a, b)
                    if not global_region:
                        key = row(aa, bb, k + l)
                        add_block(key, bsig, i, j, w)
                        key = row(aa, bb, k + l + 2)
                        add_block(key, bsig, i, j, -w)
    # + y'My + eps|y|^2 = -(Gram stuff)... constraint: y'(-M-epsI)y = main + sigma*(1-phi^2)
    # coefficient of y_a y_b phi^K in y'My: (a==b ? M_aa : 2 M_ab)
    for a in range(m):
        for b in range(a, m):
            ent = Mdec[a][b]
            for dec, cf in ent.d.items():
                for K, v in enumerate(cf):
                    if v == 0.0:
                        continue
                    w = (1.0 if a == b else 2.0) * v
                    key = row(a, b, K)
                    if dec == -1:
                        add_rhs(key, -w)
                    else:
                        add_scalar(key, dec, w)
            if a == b:
                key = row(a, b, 0)
                add_rhs(key, -eps)
    out = list(rows.values())
    dims = [gsize] if global_region else [gsize, ssize]
    return out, dims

# ---------- jet data ----------
def jet_Ax():
    # state (psi, phi): A = [[0,1],[-1,-3phi-1.5phi^2]]
    return [[np.array([0.0]), np.array([1.0])],
            [np.array([-1.0]), np.array([0.0, -3.0, -1.5])]]

B = np.array([[1.0], [0.0]])
E = np.array([[0.0], [1.0]])
C = np.array([[0.0, 1.0]])
Du = 0.1

# ---------- CCM synthesis: W const (2x2), Y(phi) 1x2 deg<=2 ----------
# gamma <= target^2 enforced; minimize controller-effort bound t with
# [[t I, Y],[Y', W]] >= 0 pointwise (so K = Y W^-1 stays moderate).
def synthesize(target_alpha=1.0):
    # decisions: W11 W12 W22 (0..2), Y coeffs Y[j][k] j in 0..1, k deg 0..2 (3..8), gamma (9)
    iW = {(0, 0): 0, (0, 1): 1, (1, 1): 2}
    def Wd(i, j):
        return AP.dec(iW[(min(i, j), max(i, j))])
    nY = 3
    def Yd(j):
        return AP({3 + j * nY + k: np.eye(3)[k] for k in range(nY)})
    ig = 9
    A = jet_Ax()
    # LMI 4x4: [[AW+WA'+BY+Y'B', E, (CW+DY)'],[E',-g,0],[CW+DY,0,-1]]
    m = 4
    L = [[AP() for _ in range(m)] for _ in range(m)]
    # AW: A (2x2 poly) * W (2x2 dec)
    for i in range(2):
        for j in range(2):
            acc = AP()
            for t in range(2):
                acc = acc + Wd(t, j).mulp(A[i][t])
            L[i][j] = L[i][j] + acc  # AW
    for i in range(2):
        for j in range(2):
            acc = AP()
            for t in range(2):
                acc = acc + Wd(i, t).mulp(A[j][t])  # (WA')_{ij} = sum_t W_it A_jt
            L[i][j] = L[i][j] + acc
    # BY + Y'B': B = e1 -> adds Y(phi) to row 0import and col 0
    for j in range(2):
        L[0][j] = L[0][j] + Yd(j)
        L[j][0] = L[j][0] + Yd(j)
    # E column
    L[0][2] = L[0][2] + AP.const(E[0, 0]); L[1][2] = L[1][2] + AP.const(E[1, 0])
    L[2][0] = L[2][0] + AP.const(E[0, 0]); L[2][1] = L[2][1] + AP.const(E[1, 0])
    L[2][2] = AP.dec(ig, -1.0)
    # CW + DY row: (CW)_j = sum_t C_t W_tj = W[1][j]; plus 0.1*Y_j
    for j in range(2):
        v = Wd(1, j) + Yd(j).scale(Du)
        L[3][j] = L[3][j] + v
        L[j][3] = L[j][3] + v
    L[3][3] = AP.const(-1.0)
    it = 10  # effort bound
    rows, dims = pmi_rows(L, 4, 0, deg_x=1, mult_deg_x=0, eps=1e-6)
    # effort PMI: -[[t, Y],[Y', W]] <= 0 on region (eps 0 -> use tiny)
    Leff = [[AP() for _ in range(3)] for _ in range(3)]
    Leff[0][0] = AP.dec(it, -1.0)
    for j in range(2):
        Leff[0][1 + j] = Yd(j).scale(-1.0)
        Leff[1 + j][0] = Yd(j).scale(-1.0)
        for t2 in range(2):
            Leff[1 + j][1 + t2] = Wd(j, t2).scale(-1.0)
    rows2, dims2 = pmi_rows(Leff, 3, len(dims), deg_x=1, mult_deg_x=0, eps=0.0)
    rows += rows2
    dims += dims2
    # W >= 1e-2 I: extra 2x2 block Xw = W - 1e-2 I
    bW = len(dims)
    rows += [
        ({0: 1.0}, {(bW, 0, 0): -1.0}, 1e-2),
        ({1: 1.0}, {(bW, 0, 1): -1.0}, 0.0),
        ({2: 1.0}, {(bW, 1, 1): -1.0}, 1e-2),
    ]
    dims.append(2)
    # 0 <= gamma <= target^2 block (two 1x1)
    rows.append(({ig: 1.0}, {(len(dims), 0, 0): -1.0}, 0.0))
    dims.append(1)
    rows.append(({ig: -1.0}, {(len(dims), 0, 0): -1.0}, -target_alpha**2))
    dims.append(1)
    st, sol = solve_sdp(11, dims, rows, {it: 1.0})
    assert st == "optimal", st
    x = np.array(sol["x"]).ravel()
    W = np.array([[x[0], x[1]], [x[1], x[2]]])
    Ycoef = x[3:9].reshape(2, 3)  # Y_j(phi) coeffs
    gam = x[9]
    Winv = np.linalg.inv(W)
    # K(phi) = Y(phi) W^{-1}: K_j(phi) = sum_t Y_t(phi) Winv[t][j]
    K = [padd(padd(Ycoef[0] * Winv[0, j], Ycoef[1] * Winv[1, j]), np.zeros(1)) for j in range(2)]
    return W, K, np.sqrt(gam), x[it]

W, K, alpha_syn, teff = synthesize(0.93)
print("synthesis: alpha =", alpha_syn, "t =", teff, "W =", W.ravel(), "K =", K)

# ---------- delay filter realization (from scratch_jfac) ----------
def eta_factor():
    b2 = np.sqrt(0.08); beta = np.sqrt(0.13 + 2 * np.sqrt(0.02)); a2 = np.sqrt(0.02)
    num = np.array([b2, 1.0, 0.0]) / a2
    den = np.array([1.0, beta / a2, 1.0 / a2])
    d1, d0 = den[1], den[2]
    n2, n1, n0 = num
    A1 = np.array([[0.0, 1.0], [-d0, -d1]])
    B1 = np.array([[0.0], [1.0]])
    C1 = np.array([[n0 - n2 * d0, n1 - n2 * d1]])
    D1 = np.array([[n2]])
    return A1, B1, C1, D1

def delay_multiplier_set(Theta):
    """Return stacked filter (A,Bv,Bw,C list,D list) and M list."""
    M1 = np.array([[0.0, -1.0], [-1.0, -1.0]])
    M2 = np.diag([1.0, -1.0])
    if Theta == 0.0:
        # both static: Psi1 = I2, Psi2 = diag(0,1)
        A = np.zeros((0, 0)); Bv = np.zeros((0, 1)); Bw = np.zeros((0, 1))
        C = [np.zeros((2, 0)), np.zeros((2, 0))]
        D = [np.eye(2), np.diag([0.0, 1.0])]
        return A, Bv, Bw, C, D, [M1, M2]
    A1, B1, C1, D1 = eta_factor()
    A = A1 / Theta; Bv = B1 / Theta; Bw = np.zeros((2, 1))
    C = [np.zeros((2, 2)), np.vstack([C1, np.zeros((1, 2))])]
    D = [np.eye(2), np.array([[D1[0, 0], 0.0], [0.0, 1.0]])]
    return A, Bv, Bw, C, D, [M1, M2]

# ---------- min_gain at Theta with constant P ----------
def min_gain(Theta, K):
    A_psi, Bpv, Bpw, Cs, Ds, Ms = delay_multiplier_set(Theta)
    npsi = A_psi.shape[0]
    nchi = 2 + npsi
    mdim = nchi + 1 + 1
    # extended blocks as plain polys
    Ax = jet_Ax()
    for j in range(2):
        Ax[0][j] = padd(Ax[0][j], K[j])  # B = e1
    Cv = [[K[0], K[1]]]
    Ce = [[padd(np.array([0.0]), Du * K[0]), padd(np.array([1.0]), Du * K[1])]]
    # A_ext
    Aext = z(nchi, nchi)
    for i in range(2):
        for j in range(2):
            Aext[i][j] = Ax[i][j]
    for i in range(npsi):
        for j in range(2):
            Aext[2 + i][j] = Bpv[i, 0] * Cv[0][j]
        for j in range(npsi):
            Aext[2 + i][2 + j] = np.array([A_psi[i, j]])
    Bw_ext = z(nchi, 1)
    Bw_ext[0][0] = np.array([B[0, 0]]); Bw_ext[1][0] = np.array([B[1, 0]])
    for i in range(npsi):
        Bw_ext[2 + i][0] = np.array([Bpw[i, 0]])   # D_vw = 0
    Bd_ext = z(nchi, 1)
    Bd_ext[0][0] = np.array([E[0, 0]]); Bd_ext[1][0] = np.array([E[1, 0]])
    # z_k rows: [D_kv Cv, C_k | D_kw | 0]
    Zrows = []
    for k in range(2):
        Dk = Ds[k]; Ck = Cs[k]
        Zk = z(2, mdim)
        for r in range(2):
            for j in range(2):
                Zk[r][j] = Dk[r, 0] * Cv[0][j]
            for j in range(npsi):
                Zk[r][2 + j] = np.array([Ck[r, j]])
            Zk[r][nchi] = np.array([Dk[r, 1]])
        Zrows.append(Zk)
    erow = z(1, mdim)
    for j in range(2):
        erow[0][j] = Ce[0][j]
    erow[0][nchi] = np.array([Du])
    # decisions: P upper-tri (npp), lam (2), gamma
    iP = {}
    cnt = 0
    for i in range(nchi):
        for j in range(i, nchi):
            iP[(i, j)] = cnt; cnt += 1
    il1, il2, ig = cnt, cnt + 1, cnt + 2
    ndec = cnt + 3
    def Pd(i, j):
        return AP.dec(iP[(min(i, j), max(i, j))])
    L = [[AP() for _ in range(mdim)] for _ in range(mdim)]
    # P A + A'P
    for i in range(nchi):
        for j in range(nchi):
            acc = AP()
            for t in range(nchi):
                acc = acc + Pd(i, t).mulp(Aext[t][j]) + Pd(t, j).mulp(Aext[t][i])
            L[i][j] = L[i][j] + acc
    # P Bw, P Bd
    for i in range(nchi):
        accw = AP(); accd = AP()
        for t in range(nchi):
            accw = accw + Pd(i, t).mulp(Bw_ext[t][0])
            accd = accd + Pd(i, t).mulp(Bd_ext[t][0])
        L[i][nchi] = L[i][nchi] + accw
        L[nchi][i] = L[nchi][i] + accw
        L[i][nchi + 1] = L[i][nchi + 1] + accd
        L[nchi + 1][i] = L[nchi + 1][i] + accd
    L[nchi + 1][nchi + 1] = AP.dec(ig, -1.0)
    # e'e
    for i in range(mdim):
        for j in range(mdim):
            L[i][j] = L[i][j] + AP.const(0.0) + AP({-1: pmul(erow[0][i], erow[0][j])})
    # lam_k * Z' M Z
    for k, lamidx in [(0, il1), (1, il2)]:
        Zk = Zrows[k]; Mk = Ms[k]
        for i in range(mdim):
            for j in range(mdim):
                acc = np.zeros(1)
                for r in range(2):
                    for s in range(2):
                        if Mk[r, s] != 0:
                            acc = padd(acc, Mk[r, s] * pmul(Zk[r][i], Zk[s][j]))
                L[i][j] = L[i][j] + AP.dec(lamidx).mulp(acc) if np.any(acc) else L[i][j]
    # degrees
    degL = max(max(len(v) - 1 for v in e.d.values()) for rowL in L for e in rowL if e.d)
    dx = (degL + 1) // 2
    rows, dims = pmi_rows(L, mdim, 0, deg_x=dx, mult_deg_x=max(dx - 1, 0), eps=1e-6)
    nb = len(dims)
    # lam1 >= 1e-6, lam2 >= 0, gamma >= 0
    rows.append(({il1: 1.0}, {(nb, 0, 0): -1.0}, 1e-6)); dims.append(1); nb += 1
    rows.append(({il2: 1.0}, {(nb, 0, 0): -1.0}, 0.0)); dims.append(1); nb += 1
    rows.append(({ig: 1.0}, {(nb, 0, 0): -1.0}, 0.0)); dims.append(1); nb += 1
    st, sol = solve_sdp(ndec, dims, rows, {ig: 1.0})
    if st != "optimal":
        return st, None, None
    x = np.array(sol["x"]).ravel()
    gam = x[ig]
    lam = (x[il1], x[il2])
    return st, np.sqrt(gam), lam

import time
for Theta in [0.0, 0.04, 0.08, 0.12, 0.16]:
    t0 = time.time()
    st, alpha, lam = min_gain(Theta, K)
    print(f"Theta={Theta}: status={st} alpha={alpha} lam={lam} ({time.time()-t0:.2f}s)")
