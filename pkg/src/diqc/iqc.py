"""Differential-IQC multiplier library.

Each multiplier is a factorized pair (Psi_k, M_k): a stable filter acting on
the stacked channel col(delta_v, delta_w) and a constant symmetric weight.
The library knows two families:

  * the norm-bound multiplier diag(I_nv, -I_nw) for operators with
    differential gain at most one, and
  * the delay pair for w = v(.-theta) - v(.) with theta in [0, Theta]:

        |v|^2 - |v + w|^2 >= 0            (static, M = [[0,-1],[-1,-1]])
        eta(Theta w)|v|^2 - |w|^2 >= 0    (dynamic, via the spectral factor
                                           of eta)

with eta(w) = (w^2 + 0.08 w^4) / (1 + 0.13 w^2 + 0.02 w^4).

Sets are combined linearly with weights lambda in
Lambda = {lambda_1 >= lambda_min, lambda_k >= 0}; the open condition
lambda_1 > 0 is represented by the configurable floor lambda_min.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .linalg import spectral_factor
from .lti import (
    DEFAULT_GRID,
    LtiError,
    StateSpace,
    freq_response,
    multiplier_freq,
    output_ranges,
    stack_outputs,
)

LAMBDA_MIN = 1e-6

ETA_NUM_EVEN = np.array([0.0, 1.0, 0.08])   # coefficients of omega^0, omega^2, omega^4
ETA_DEN_EVEN = np.array([1.0, 0.13, 0.02])


def eta_weight(omega):
    """Delay-uncertainty frequency weight eta(omega)."""
    x = np.asarray(omega, dtype=float) ** 2
    return (x + 0.08 * x**2) / (1.0 + 0.13 * x + 0.02 * x**2)


class IqcError(RuntimeError):
    pass


@dataclass(frozen=True)
class MultiplierEntry:
    psi: StateSpace
    M: np.ndarray
    name: str = ""


class MultiplierSet:
    """Factorized multipliers sharing the channel partition (n_v, n_w)."""

    def __init__(self, n_v: int, n_w: int, entries):
        self.n_v = int(n_v)
        self.n_w = int(n_w)
        self.entries = list(entries)
        if not self.entries:
            raise IqcError("a multiplier set needs at least one entry")
        for e in self.entries:
            if e.psi.n_inputs != self.n_v + self.n_w:
                raise IqcError(f"entry {e.name!r} has input dim {e.psi.n_inputs}, "
                               f"expected {self.n_v + self.n_w}")
            if not e.psi.is_stable():
                raise IqcError(f"entry {e.name!r} has an unstable filter")
            M = np.atleast_2d(np.asarray(e.M, dtype=float))
            if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
                raise IqcError(f"entry {e.name!r} has a non-symmetric weight")
        self._stacked = None

    def __len__(self):
        return len(self.entries)

    @property
    def first_entry_is_normbound(self) -> bool:
        """Whether entry 1 is the normalized diag(I, -I) multiplier."""
        e = self.entries[0]
        if e.psi.n_states != 0:
            return False
        ref = np.diag(np.concatenate([np.ones(self.n_v), -np.ones(self.n_w)]))
        return (np.allclose(e.psi.D, np.eye(self.n_v + self.n_w))
                and np.allclose(e.M, ref))

    def stacked(self):
        """Shared filter: the output-stacked realization plus per-entry row ranges."""
        if self._stacked is None:
            psis = [e.psi for e in self.entries]
            self._stacked = (stack_outputs(psis), output_ranges(psis))
        return self._stacked

    def combined_weight(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (len(self.entries),):
            raise IqcError(f"weight vector length {lam.shape} != {len(self.entries)} entries")
        return sla.block_diag(*[l * np.atleast_2d(e.M) for l, e in zip(lam, self.entries)])


def normbound_multiplier(n_v: int, n_w: int) -> MultiplierEntry:
    """Static multiplier diag(I_nv, -I_nw) for unit-norm-bounded uncertainty."""
    if n_v <= 0 or n_w <= 0:
        raise IqcError("channel dimensions must be positive")
    D = np.eye(n_v + n_w)
    M = np.diag(np.concatenate([np.ones(n_v), -np.ones(n_w)]))
    return MultiplierEntry(StateSpace.static(D), M, name="normbound")


def delay_filter(theta_max: float) -> StateSpace:
    """Realization of diag(psi_Theta(s), 1) where |psi_Theta(jw)|^2 = eta(Theta w).

    Substituting s -> Theta s in psi(s) rescales the realization as
    A -> A/Theta, B -> B/Theta. Theta = 0 degenerates to the static
    diag(0, 1) (eta(0) = 0).
    """
    if theta_max < 0:
        raise IqcError("theta_max must be nonnegative")
    if theta_max == 0.0:
        return StateSpace.static(np.diag([0.0, 1.0]))
    num_s, den_s = spectral_factor(ETA_NUM_EVEN, ETA_DEN_EVEN)
    psi = StateSpace.from_tf(num_s, den_s)
    A = psi.A / theta_max
    B = psi.B / theta_max
    scalar = StateSpace(A, B, psi.C, psi.D)
    # diag(psi_Theta, 1): shared input (v, w), outputs (psi_Theta v, w)
    n = scalar.n_states
    Bvw = np.hstack([scalar.B, np.zeros((n, 1))])
    C = np.vstack([scalar.C, np.zeros((1, n))])
    D = np.array([[scalar.D[0, 0], 0.0], [0.0, 1.0]])
    return StateSpace(A, Bvw, C, D)


def delay_multipliers(theta_max: float) -> MultiplierSet:
    """The two delay-uncertainty multipliers for a scalar channel.

    Entry 1 encodes |v|^2 - |v+w|^2 >= 0 (expansion -2vw - w^2 gives
    M1 = [[0,-1],[-1,-1]]); entry 2 encodes eta(Theta w)|v|^2 - |w|^2 >= 0
    through the spectral factor of eta.
    """
    M1 = np.array([[0.0, -1.0], [-1.0, -1.0]])
    e1 = MultiplierEntry(StateSpace.static(np.eye(2)), M1, name="delay_contract")
    e2 = MultiplierEntry(delay_filter(theta_max), np.diag([1.0, -1.0]),
                         name="delay_envelope")
    return MultiplierSet(1, 1, [e1, e2])


@dataclass(frozen=True)
class Assumption1Report:
    """Per-entry sign check of Pi_vv >= 0 and Pi_ww <= 0 on a grid."""

    min_eig_vv: tuple
    max_eig_ww: tuple
    passed: tuple
    first_entry_is_normbound: bool

    @property
    def all_passed(self) -> bool:
        return all(self.passed)


def check_assumption1(ms: MultiplierSet, grid=None, tol: float = 1e-9) -> Assumption1Report:
    """Evaluate the multiplier sign conditions entrywise over the grid."""
    if grid is None:
        grid = DEFAULT_GRID
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise IqcError("empty frequency grid")
    mins, maxs, passed = [], [], []
    for e in ms.entries:
        lo = np.inf
        hi = -np.inf
        for w in grid:
            Pi = multiplier_freq(e.psi, e.M, w)
            vv = Pi[: ms.n_v, : ms.n_v]
            ww = Pi[ms.n_v :, ms.n_v :]
            lo = min(lo, float(np.min(np.linalg.eigvalsh(vv))))
            hi = max(hi, float(np.max(np.linalg.eigvalsh(ww))))
        mins.append(lo)
        maxs.append(hi)
        passed.append(lo >= -tol and hi <= tol)
    return Assumption1Report(tuple(mins), tuple(maxs), tuple(passed),
                             ms.first_entry_is_normbound)


def combine(ms: MultiplierSet, lam, lambda_min: float = LAMBDA_MIN):
    """Combined multiplier: shared stacked filter and blockdiag(lambda_k M_k).

    Raises IqcError when the weights leave the admissible cone
    {lambda_1 >= lambda_min, lambda_k >= 0}.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(ms),):
        raise IqcError(f"expected {len(ms)} weights, got {lam.shape}")
    if lam[0] < lambda_min or np.any(lam < 0):
        raise IqcError(f"weights {lam} outside the admissible cone "
                       f"(lambda_1 >= {lambda_min}, others >= 0)")
    psi, _ = ms.stacked()
    return psi, ms.combined_weight(lam)


def hard_iqc_partial_integrals(psi_tilde: StateSpace, m_tilde: np.ndarray,
                               v: np.ndarray, w: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative integrals int_0^T z' Mt z dt of the filtered channel.

    The filter runs from zero initial state under classical RK4 with
    zero-order-hold-free linear interpolation of the sampled inputs. A step
    larger than 0.1 / ||A|| is rejected as unstable for the fast filter poles.
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if v.shape[-1] != w.shape[-1]:
        raise IqcError("v and w samplings must have equal length")
    if not psi_tilde.is_stable():
        raise IqcError("filter must be stable")
    m_tilde = np.atleast_2d(np.asarray(m_tilde, dtype=float))
    A, B, C, D = psi_tilde.A, psi_tilde.B, psi_tilde.C, psi_tilde.D
    n = psi_tilde.n_states
    if n:
        limit = 0.1 / max(np.linalg.norm(A, 2), 1e-12)
        if dt > limit:
            raise IqcError(f"dt={dt} too large for filter dynamics (limit {limit:.3e})")
    u = np.vstack([v, w])  # (n_v+n_w, N)
    N = u.shape[1]
    x = np.zeros(n)
    out = np.zeros(N)
    acc = 0.0
    z_prev = C @ x + D @ u[:, 0] if n else D @ u[:, 0]
    q_prev = float(z_prev @ m_tilde @ z_prev)
    out[0] = 0.0
    for k in range(N - 1):
        u0 = u[:, k]
        u1 = u[:, k + 1]
        um = 0.5 * (u0 + u1)
        if n:
            k1 = A @ x + B @ u0
            k2 = A @ (x + 0.5 * dt * k1) + B @ um
            k3 = A @ (x + 0.5 * dt * k2) + B @ um
            k4 = A @ (x + dt * k3) + B @ u1
            x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            z = C @ x + D @ u1
        else:
            z = D @ u1
        q = float(z @ m_tilde @ z)
        acc += 0.5 * dt * (q_prev + q)
        q_prev = q
        out[k + 1] = acc
    return out
