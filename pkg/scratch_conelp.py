"""Prototype: standard-form SDP -> cvxopt conelp mapping."""
import numpy as np
import itertools
from cvxopt import matrix, solvers, spmatrix

solvers.options["show_progress"] = False
solvers.options["abstol"] = 1e-9
solvers.options["reltol"] = 1e-9
solvers.options["feastol"] = 1e-9
solvers.options["refinement"] = 2


def solve(n_scalars, block_dims, rows, objective):
    """rows: list of (dict scalar->coef, dict (b,i,j)->coef  (i<=j), rhs)."""
    # variable layout: scalars, then per-block upper-tri entries
    offs = [n_scalars]
    for d in block_dims:
        offs.append(offs[-1] + d * (d + 1) // 2)
    nvar = offs[-1]

    def tri_index(b, i, j):
        # index of (i,j), i<=j, in upper-tri column-major enumeration
        assert i <= j
        return offs[b] + j * (j + 1) // 2 + i

    A = np.zeros((len(rows), nvar))
    bvec = np.zeros(len(rows))
    for r, (sc, bl, rhs) in enumerate(rows):
        for k, v in sc.items():
            A[r, k] += v
        for (b, i, j), v in bl.items():
            A[r, tri_index(b, i, j)] += v
        bvec[r] = rhs

    # G: -entries -> full symmetric matrices (column-major per block)
    Gi, Gj, Gv = [], [], []
    row0 = 0
    for b, d in enumerate(block_dims):
        for j in range(d):
            for i in range(d):
                r = row0 + j * d + i
                k = tri_index(b, min(i, j), max(i, j))
                Gi.append(r); Gj.append(k); Gv.append(-1.0)
        row0 += d * d
    G = spmatrix(Gv, Gi, Gj, (row0, nvar))
    h = matrix(np.zeros(row0))

    c = np.zeros(nvar)
    for k, v in objective.items():
        c[k] = v

    # full-row-rank reduction of A
    if len(rows):
        u, s, vt = np.linalg.svd(A, full_matrices=False)
        tol = max(A.shape) * np.finfo(float).eps * (s[0] if len(s) else 1.0)
        rank = int((s > tol).sum())
        # rows in terms of orthonormal combos
        Ar = (u[:, :rank].T @ A)
        br = u[:, :rank].T @ bvec
        # consistency of dropped part
        resid = bvec - u[:, :rank] @ br
        if np.linalg.norm(resid) > 1e-9 * max(1, np.linalg.norm(bvec)):
            return "primal_infeasible_preproc", None
    else:
        Ar = np.zeros((0, nvar)); br = np.zeros(0)

    sol = solvers.conelp(matrix(c), G, h, dims={"l": 0, "q": [], "s": list(block_dims)},
                         A=matrix(Ar), b=matrix(br))
    return sol["status"], sol


# 1) min x s.t. [[x,1],[1,x]] >= 0  -> x* = 1
# scalars: x (idx 0). block 0: 2x2 = X. rows: X00 - x = 0; X11 - x = 0; X01 = 1.
rows = [
    ({0: -1.0}, {(0, 0, 0): 1.0}, 0.0),
    ({0: -1.0}, {(0, 1, 1): 1.0}, 0.0),
    ({}, {(0, 0, 1): 1.0}, 1.0),
]
st, sol = solve(1, [2], rows, {0: 1.0})
print("prob1:", st, "x* =", sol["x"][0] if sol else None, "iters", sol["iterations"])

# 2) feasibility of I >= 0: block with X = I fixed
rows = [({}, {(0, 0, 0): 1.0}, 1.0), ({}, {(0, 1, 1): 1.0}, 1.0), ({}, {(0, 0, 1): 1.0}, 0.0)]
st, sol = solve(0, [2], rows, {})
print("prob2:", st)

# 3) [[-1]] >= 0: X = -1
rows = [({}, {(0, 0, 0): 1.0}, -1.0)]
st, sol = solve(0, [1], rows, {})
print("prob3:", st)
if sol is not None and st == "primal infeasible":
    # certificate: y, z with A'y + G'z = 0, z in PSD*, b'y + h'z = -1
    print("   cert y:", np.array(sol["y"]).ravel(), "z:", np.array(sol["z"]).ravel())

# 4) SOS: p = x^4 + 2x^2 + 1 with basis [1, x, x^2]
# p = m' G m; coefficient matching: x^0: G00=1; x^1: 2*G01=0; x^2: 2*G02+G11=2; x^3: 2*G12=0; x^4: G22=1
rows = [
    ({}, {(0, 0, 0): 1.0}, 1.0),
    ({}, {(0, 0, 1): 2.0}, 0.0),
    ({}, {(0, 0, 2): 2.0, (0, 1, 1): 1.0}, 2.0),
    ({}, {(0, 1, 2): 2.0}, 0.0),
    ({}, {(0, 2, 2): 1.0}, 1.0),
]
st, sol = solve(0, [3], rows, {})
print("prob4 (x^4+2x^2+1 SOS):", st)

# 5) Motzkin: x^4 y^2 + x^2 y^4 - 3 x^2 y^2 + 1, basis = monomials deg <= 3 in (x,y)
monos = [(i, j) for t in range(4) for i in range(t + 1) for j in [t - i]]
monos = sorted(monos, key=lambda m: (m[0] + m[1], m))  # deg <=3: 10 monomials
idx = {m: k for k, m in enumerate(monos)}
coef = {(4, 2): 1.0, (2, 4): 1.0, (2, 2): -3.0, (0, 0): 1.0}
targets = {}
for (k1, m1) in enumerate(monos):
    for (k2, m2) in enumerate(monos):
        if k1 <= k2:
            t = (m1[0] + m2[0], m1[1] + m2[1])
            targets.setdefault(t, []).append((k1, k2, 1.0 if k1 == k2 else 2.0))
rows = []
for t, entries in sorted(targets.items()):
    rows.append(({}, {(0, i, j): c for (i, j, c) in entries}, coef.get(t, 0.0)))
st, sol = solve(0, [10], rows, {})
print("prob5 (Motzkin):", st)
