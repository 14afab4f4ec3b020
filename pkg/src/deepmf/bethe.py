"""Bethe message passing and susceptibility propagation for the visible
marginal of an RBM, with Lagrange multipliers that enforce
C_ii = 1 - m_i^2.

Array layout: visible index i, k; hidden (factor) index a.

    m_cav[i, a]   cavity magnetization  m_{i->a}
    u[a, i]       cavity bias           u_{a->i}
    chi[i, a, k]  cavity susceptibility d m_{i->a} / d bv_k
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from deepmf.errors import InvalidArgument, NumericalDomainError
from deepmf.numerics import STREAM_MESSAGES, RngStream
from deepmf.rbm import RbmModel

log = logging.getLogger(__name__)

INIT_AMPLITUDE = 0.01
SATURATION_TOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 10_000
    symmetrize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise InvalidArgument("damping must lie in [0, 1)")
        if not self.tol > 0:
            raise InvalidArgument("tolerance must be positive")
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class CavityState:
    m_cav: np.ndarray
    u: np.ndarray
    m: np.ndarray
    chi: np.ndarray
    lam: np.ndarray
    cov: np.ndarray
    iterations: int = 0
    residual: float = float("inf")
    converged: bool = False
    asymmetry: float = 0.0
    symmetrized: bool = False

    def replace(self, **kw) -> "CavityState":
        return dataclasses.replace(self, **kw)

    def moments(self):
        from deepmf.meanfield import LayerMoments

        return LayerMoments(self.m.copy(), self.cov.copy())


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


def initial_state(model: RbmModel, rng: RngStream | None = None) -> CavityState:
    nv, nh = model.w.shape
    if rng is None:
        gen = np.random.default_rng(0)
    else:
        gen = rng.stream(STREAM_MESSAGES).generator()
    a = INIT_AMPLITUDE
    return CavityState(
        m_cav=gen.uniform(-a, a, (nv, nh)),
        u=gen.uniform(-a, a, (nh, nv)),
        m=gen.uniform(-a, a, nv),
        chi=gen.uniform(-a, a, (nv, nh, nv)),
        lam=np.zeros(nv),
        cov=np.zeros((nv, nv)),
    )


def cavity_fields(m_cav: np.ndarray, model: RbmModel) -> np.ndarray:
    """G[a, i] = sum_{j != i} w_ja m_{j->a}."""
    w = model.w
    total = np.sum(w * m_cav, axis=0)
    return total[:, None] - (w * m_cav).T


def _mix(old, new, damping):
    return damping * old + (1.0 - damping) * new


def bp_step(state: CavityState, model: RbmModel, damping: float = 0.0) -> tuple[CavityState, float]:
    """One synchronous sweep of the magnetization / bias messages.

    Returns the new state and the largest absolute message change.
    """
    w = model.w
    field = model.bh[:, None] + cavity_fields(state.m_cav, model)
    u = 0.5 * (_logcosh(field + w.T) - _logcosh(field - w.T))
    local = model.bv - state.lam * state.m
    h_full = local + u.sum(axis=0)
    m_cav = np.tanh(h_full[:, None] - u.T)
    m = np.tanh(h_full)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(m_cav)) and np.all(np.isfinite(m))):
        raise NumericalDomainError(f"non-finite BP message after {state.iterations} iterations")
    u = _mix(state.u, u, damping)
    m_cav = _mix(state.m_cav, m_cav, damping)
    m = _mix(state.m, m, damping)
    change = max(
        float(np.max(np.abs(u - state.u))),
        float(np.max(np.abs(m_cav - state.m_cav))),
        float(np.max(np.abs(m - state.m))),
    )
    return state.replace(u=u, m_cav=m_cav, m=m), change


def gamma_kernel(state: CavityState, model: RbmModel) -> np.ndarray:
    """Gamma[a, i] = d u_{a->i} / d G_{a->i}."""
    tw = np.tanh(model.w.T)
    th2 = np.tanh(model.bh[:, None] + cavity_fields(state.m_cav, model)) ** 2
    return tw * (1.0 - th2) / (1.0 - th2 * tw * tw)


def sp_step(state: CavityState, model: RbmModel, damping: float = 0.0) -> tuple[CavityState, float]:
    """One synchronous sweep of the susceptibilities, the linear-response
    covariance and the diagonal-consistency multipliers."""
    w = model.w
    nv = w.shape[0]
    one_m2 = 1.0 - state.m * state.m
    if np.any(one_m2 < SATURATION_TOL):
        raise NumericalDomainError("a magnetization saturated at +/-1; linear response is undefined")
    gamma = gamma_kernel(state, model)
    # P[a, i, k] = sum_{j != i} chi[j, a, k] w[j, a]
    wchi = state.chi * w[:, :, None]
    p = wchi.sum(axis=0)[:, None, :] - wchi.transpose(1, 0, 2)
    gp = gamma[:, :, None] * p
    eye = np.eye(nv)
    f = gp.sum(axis=0) + eye
    cov = one_m2[:, None] * f / (1.0 + one_m2 * state.lam)[:, None]
    lam = (np.diag(f) - 1.0) / one_m2
    # chi[i, a, k] = (1 - m_{i->a}^2) [sum_{a' != a} Gamma P + delta_ik - lam_i C_ik]
    rest = (f - eye)[:, None, :] - gp.transpose(1, 0, 2)
    chi = (1.0 - state.m_cav**2)[:, :, None] * (rest + eye[:, None, :] - (lam[:, None] * cov)[:, None, :])
    if not (np.all(np.isfinite(chi)) and np.all(np.isfinite(lam))):
        raise NumericalDomainError(f"non-finite susceptibility after {state.iterations} iterations")
    chi = _mix(state.chi, chi, damping)
    lam = _mix(state.lam, lam, damping)
    change = max(
        float(np.max(np.abs(chi - state.chi))),
        float(np.max(np.abs(lam - state.lam))),
        float(np.max(np.abs(cov - state.cov))),
    )
    return state.replace(chi=chi, lam=lam, cov=cov), change


def diagonal_consistency_residual(state: CavityState) -> float:
    return float(np.max(np.abs(np.diag(state.cov) - (1.0 - state.m * state.m))))


def solve(
    model: RbmModel,
    config: SolverConfig | None = None,
    rng: RngStream | None = None,
    state: CavityState | None = None,
) -> CavityState:
    """Alternate BP and SP sweeps until the largest change is below
    ``config.tol``. A non-converged run is returned with
    ``converged=False`` and its last residual."""
    config = config or SolverConfig()
    state = state if state is not None else initial_state(model, rng)
    change = float("inf")
    it = state.iterations
    for it in range(state.iterations + 1, state.iterations + config.max_iter + 1):
        state, c_bp = bp_step(state, model, config.damping)
        state, c_sp = sp_step(state, model, config.damping)
        change = max(c_bp, c_sp)
        if change < config.tol:
            break
    converged = change < config.tol
    if not converged:
        log.warning("Bethe solver stopped at %d iterations with residual %.3e", it, change)
    asym = float(np.max(np.abs(state.cov - state.cov.T)))
    cov = state.cov
    if config.symmetrize:
        cov = 0.5 * (cov + cov.T)
    return state.replace(
        cov=cov,
        iterations=it,
        residual=change,
        converged=converged,
        asymmetry=asym,
        symmetrized=config.symmetrize,
    )


def solve_bp(
    model: RbmModel,
    lam: np.ndarray,
    state: CavityState,
    tol: float = 1e-13,
    max_iter: int = 100_000,
    damping: float = 0.5,
) -> CavityState:
    """Magnetization messages only, with the multipliers frozen at ``lam``.

    This is the map whose derivative the susceptibilities describe, so
    finite differences of its fixed point check the linear response.
    """
    state = state.replace(lam=np.asarray(lam, dtype=float).copy())
    for it in range(1, max_iter + 1):
        state, change = bp_step(state, model, damping)
        if change < tol:
            return state.replace(iterations=it, residual=change, converged=True)
    return state.replace(iterations=max_iter, residual=change, converged=False)


def finite_difference_response(
    model: RbmModel, state: CavityState, step: float = 1e-6
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of the BP fixed point with respect to each
    visible bias, multipliers frozen.

    Returns (dm_i/dbv_k as N_v x N_v, dm_{i->a}/dbv_k as N_v x N_h x N_v).
    """
    nv, nh = model.w.shape
    dm = np.empty((nv, nv))
    dcav = np.empty((nv, nh, nv))
    for k in range(nv):
        out = []
        for sign in (1.0, -1.0):
            bv = model.bv.copy()
            bv[k] += sign * step
            shifted = RbmModel(model.w, bv, model.bh)
            out.append(solve_bp(shifted, state.lam, state))
        dm[:, k] = (out[0].m - out[1].m) / (2 * step)
        dcav[:, :, k] = (out[0].m_cav - out[1].m_cav) / (2 * step)
    return dm, dcav
