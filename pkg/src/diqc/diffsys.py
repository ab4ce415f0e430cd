"""Differential dynamics of the nominal system and the filter-extended plant.

`differentiate_system` turns polynomial dynamics

    xdot = f(x, w, d),  v = g(x, w, d),  e = h(x, w, d)

into the nine Jacobian blocks of the linear time-varying system governing
tangent vectors, all exact polynomials in rho = (x, w, d). `extend` then
composes those blocks with an IQC filter driven by (delta_v, delta_w),
producing the extended state chi = col(x, psi) used by the gain LMI.

Systems whose differential dynamics are known directly (for instance a
geodesic controller whose tangent map is K(x) even though the controller
itself is not polynomial) can construct a DiffSystem from blocks, optionally
supplying `xdot` so that state-dependent metric derivatives stay available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .poly import Polynomial, PolyMatrix, PolyError, VarRegistry, jacobian
from .lti import StateSpace


class DiffSysError(ValueError):
    pass


@dataclass(frozen=True)
class NominalSystem:
    """Polynomial nominal plant over a registry holding (x, w, d)."""

    registry: VarRegistry
    x_idx: tuple
    w_idx: tuple
    d_idx: tuple
    f: tuple          # n_x polynomials
    g: tuple          # n_v polynomials (may be empty)
    h: tuple          # n_e polynomials

    def __post_init__(self):
        for name, polys in (("f", self.f), ("g", self.g), ("h", self.h)):
            for p in polys:
                if p.registry != self.registry:
                    raise DiffSysError(f"{name} entry over a different registry")
        if len(self.f) != len(self.x_idx):
            raise DiffSysError("f must have one component per state")

    @property
    def n_x(self):
        return len(self.x_idx)

    @property
    def n_w(self):
        return len(self.w_idx)

    @property
    def n_d(self):
        return len(self.d_idx)

    @property
    def n_v(self):
        return len(self.g)

    @property
    def n_e(self):
        return len(self.h)


def _jac_or_none(polys, vars_idx, registry):
    if not polys or not vars_idx:
        return None
    return jacobian(list(polys), list(vars_idx))


@dataclass
class DiffSystem:
    """Jacobian blocks of the differential dynamics; absent channels are None."""

    registry: VarRegistry
    x_idx: tuple
    n_w: int
    n_d: int
    A_x: PolyMatrix
    B_xw: PolyMatrix | None
    B_xd: PolyMatrix | None
    C_v: PolyMatrix | None
    D_vw: PolyMatrix | None
    D_vd: PolyMatrix | None
    C_e: PolyMatrix | None
    D_ew: PolyMatrix | None
    D_ed: PolyMatrix | None
    xdot: tuple | None = None   # polynomial vector field for metric derivatives

    @property
    def n_x(self):
        return self.A_x.rows

    @property
    def n_v(self):
        return self.C_v.rows if self.C_v is not None else 0

    @property
    def n_e(self):
        return self.C_e.rows if self.C_e is not None else 0

    def eval(self, point) -> dict:
        """Evaluate every block at a numeric rho point (absent blocks as zeros)."""
        def ev(M, r, c):
            return M.eval(point) if M is not None else np.zeros((r, c))
        return {
            "A_x": self.A_x.eval(point),
            "B_xw": ev(self.B_xw, self.n_x, self.n_w),
            "B_xd": ev(self.B_xd, self.n_x, self.n_d),
            "C_v": ev(self.C_v, self.n_v, self.n_x),
            "D_vw": ev(self.D_vw, self.n_v, self.n_w),
            "D_vd": ev(self.D_vd, self.n_v, self.n_d),
            "C_e": ev(self.C_e, self.n_e, self.n_x),
            "D_ew": ev(self.D_ew, self.n_e, self.n_w),
            "D_ed": ev(self.D_ed, self.n_e, self.n_d),
        }


def differentiate_system(ns: NominalSystem) -> DiffSystem:
    """All nine Jacobian blocks of the nominal system, computed symbolically."""
    xi, wi, di = list(ns.x_idx), list(ns.w_idx), list(ns.d_idx)
    return DiffSystem(
        registry=ns.registry,
        x_idx=ns.x_idx,
        n_w=ns.n_w,
        n_d=ns.n_d,
        A_x=jacobian(list(ns.f), xi),
        B_xw=_jac_or_none(ns.f, wi, ns.registry),
        B_xd=_jac_or_none(ns.f, di, ns.registry),
        C_v=_jac_or_none(ns.g, xi, ns.registry),
        D_vw=_jac_or_none(ns.g, wi, ns.registry),
        D_vd=_jac_or_none(ns.g, di, ns.registry),
        C_e=_jac_or_none(ns.h, xi, ns.registry),
        D_ew=_jac_or_none(ns.h, wi, ns.registry),
        D_ed=_jac_or_none(ns.h, di, ns.registry),
        xdot=tuple(ns.f),
    )


@dataclass
class ZBlock:
    """Output rows of one filter entry against the extended state."""

    C_z: PolyMatrix            # p_k x n_chi
    D_zw: PolyMatrix | None    # p_k x n_w
    D_zd: PolyMatrix | None    # p_k x n_d


@dataclass
class ExtendedSystem:
    """Series interconnection of the differential plant and the IQC filter."""

    registry: VarRegistry
    x_idx: tuple
    n_psi: int
    n_w: int
    n_d: int
    A: PolyMatrix              # n_chi x n_chi
    B_w: PolyMatrix | None
    B_d: PolyMatrix | None
    z_blocks: list
    C_e: PolyMatrix | None
    D_ew: PolyMatrix | None
    D_ed: PolyMatrix | None
    filter_A: np.ndarray       # (n_psi, n_psi) constant filter dynamics
    filter_B: np.ndarray       # (n_psi, n_v + n_w)
    xdot: tuple | None

    @property
    def n_x(self):
        return len(self.x_idx)

    @property
    def n_chi(self):
        return self.n_x + self.n_psi

    @property
    def n_e(self):
        return self.C_e.rows if self.C_e is not None else 0

    def eval_lti(self, point) -> dict:
        """Numeric extended blocks at a rho point, for oracles and sampling."""
        def ev(M, r, c):
            return M.eval(point) if M is not None else np.zeros((r, c))
        out = {
            "A": self.A.eval(point),
            "B_w": ev(self.B_w, self.n_chi, self.n_w),
            "B_d": ev(self.B_d, self.n_chi, self.n_d),
            "C_e": ev(self.C_e, self.n_e, self.n_chi),
            "D_ew": ev(self.D_ew, self.n_e, self.n_w),
            "D_ed": ev(self.D_ed, self.n_e, self.n_d),
        }
        zs = []
        for zb in self.z_blocks:
            zs.append(
                (
                    zb.C_z.eval(point),
                    ev(zb.D_zw, zb.C_z.rows, self.n_w),
                    ev(zb.D_zd, zb.C_z.rows, self.n_d),
                )
            )
        out["z"] = zs
        return out


def extend(ds: DiffSystem, filter_ss: StateSpace | None, z_ranges=None) -> ExtendedSystem:
    """Compose the differential plant with the stacked filter.

    The filter input is col(delta_v, delta_w); `z_ranges` gives the output
    rows of each multiplier entry within the stacked filter (one entry with
    all rows when omitted). With no filter (or a static one) the extended
    state is just the plant state.
    """
    reg = ds.registry
    n_x, n_w, n_d, n_v = ds.n_x, ds.n_w, ds.n_d, ds.n_v

    if filter_ss is None:
        filter_ss = StateSpace.static(np.zeros((0, n_v + n_w)))
        z_ranges = []
    if z_ranges is None:
        z_ranges = [range(filter_ss.n_outputs)]
    if filter_ss.n_inputs != n_v + n_w:
        raise DiffSysError(
            f"filter input dim {filter_ss.n_inputs} != n_v + n_w = {n_v + n_w}"
        )
    n_psi = filter_ss.n_states
    A_psi = filter_ss.A
    B_psi_v = filter_ss.B[:, :n_v]
    B_psi_w = filter_ss.B[:, n_v:]
    n_chi = n_x + n_psi

    # A = [[A_x, 0], [B_psi_v C_v, A_psi]]
    flat = []
    for i in range(n_x):
        for j in range(n_x):
            flat.append(ds.A_x.entry(i, j))
        for j in range(n_psi):
            flat.append(Polynomial.zero(reg))
    BvCv = None
    if n_psi and n_v:
        BvCv = PolyMatrix.from_array(reg, B_psi_v) @ ds.C_v
    for i in range(n_psi):
        for j in range(n_x):
            flat.append(BvCv.entry(i, j) if BvCv is not None else Polynomial.zero(reg))
        for j in range(n_psi):
            flat.append(Polynomial.constant(reg, A_psi[i, j]))
    A = PolyMatrix(reg, n_chi, n_chi, flat)

    # B_w = [B_xw; B_psi_v D_vw + B_psi_w], B_d = [B_xd; B_psi_v D_vd]
    B_w = None
    if n_w:
        flat = []
        for i in range(n_x):
            for j in range(n_w):
                flat.append(ds.B_xw.entry(i, j) if ds.B_xw is not None else Polynomial.zero(reg))
        mix = None
        if n_psi and n_v and ds.D_vw is not None:
            mix = PolyMatrix.from_array(reg, B_psi_v) @ ds.D_vw
        for i in range(n_psi):
            for j in range(n_w):
                ent = Polynomial.constant(reg, B_psi_w[i, j])
                if mix is not None:
                    ent = ent + mix.entry(i, j)
                flat.append(ent)
        B_w = PolyMatrix(reg, n_chi, n_w, flat)

    B_d = None
    if n_d:
        flat = []
        for i in range(n_x):
            for j in range(n_d):
                flat.append(ds.B_xd.entry(i, j) if ds.B_xd is not None else Polynomial.zero(reg))
        mix = None
        if n_psi and n_v and ds.D_vd is not None:
            mix = PolyMatrix.from_array(reg, B_psi_v) @ ds.D_vd
        for i in range(n_psi):
            for j in range(n_d):
                flat.append(mix.entry(i, j) if mix is not None else Polynomial.zero(reg))
        B_d = PolyMatrix(reg, n_chi, n_d, flat)

    # z_k rows: C = [D_kv C_v, C_k], D_w = D_kv D_vw + D_kw, D_d = D_kv D_vd
    z_blocks = []
    for rng in z_ranges:
        rows = list(rng)
        p_k = len(rows)
        D_k = filter_ss.D[rows, :]
        C_k = filter_ss.C[rows, :]
        D_kv = D_k[:, :n_v]
        D_kw = D_k[:, n_v:]
        flat = []
        DC = None
        if n_v:
            DC = PolyMatrix.from_array(reg, D_kv) @ ds.C_v
        for i in range(p_k):
            for j in range(n_x):
                flat.append(DC.entry(i, j) if DC is not None else Polynomial.zero(reg))
            for j in range(n_psi):
                flat.append(Polynomial.constant(reg, C_k[i, j]))
        C_z = PolyMatrix(reg, p_k, n_chi, flat)
        D_zw = None
        if n_w:
            mix = None
            if n_v and ds.D_vw is not None:
                mix = PolyMatrix.from_array(reg, D_kv) @ ds.D_vw
            flat = []
            for i in range(p_k):
                for j in range(n_w):
                    ent = Polynomial.constant(reg, D_kw[i, j])
                    if mix is not None:
                        ent = ent + mix.entry(i, j)
                    flat.append(ent)
            D_zw = PolyMatrix(reg, p_k, n_w, flat)
        D_zd = None
        if n_d and n_v and ds.D_vd is not None:
            D_zd = PolyMatrix.from_array(reg, D_kv) @ ds.D_vd
        z_blocks.append(ZBlock(C_z, D_zw, D_zd))

    # e rows pass through with zero filter-state columns
    C_e = None
    if ds.n_e:
        flat = []
        for i in range(ds.n_e):
            for j in range(n_x):
                flat.append(ds.C_e.entry(i, j))
            for j in range(n_psi):
                flat.append(Polynomial.zero(reg))
        C_e = PolyMatrix(reg, ds.n_e, n_chi, flat)

    return ExtendedSystem(
        registry=reg,
        x_idx=ds.x_idx,
        n_psi=n_psi,
        n_w=n_w,
        n_d=n_d,
        A=A,
        B_w=B_w,
        B_d=B_d,
        z_blocks=z_blocks,
        C_e=C_e,
        D_ew=ds.D_ew,
        D_ed=ds.D_ed,
        filter_A=A_psi,
        filter_B=filter_ss.B,
        xdot=ds.xdot,
    )
