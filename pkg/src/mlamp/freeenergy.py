"""Replica-symmetric free energy, information-theoretic overlap and phases.

phi_RS(m, mhat) combines the order-parameter coupling term with three
families of expected log partition functions (prior layer, intermediate
layers, observation layer), each averaged over the same scalar surrogate law
as the state evolution.  Its stationary points are SE fixed points; the
global minimum over m gives the information-theoretic overlap m_IT and the
MMSE rho_L - m_IT^(L).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import components as cmp
from . import se as _se
from .model import (Awgn, Channel, ConfigurationError, GaussBernoulli,
                    GaussianPrior, NetworkSpec, Prior, Rademacher,
                    SignWithNoise, second_moment_profile)
from .se import Init, QuadratureConfig, SePoint


class Phase(enum.Enum):
    EASY = "easy"
    HARD = "hard"
    IMPOSSIBLE = "impossible"
    UNKNOWN = "unknown"


class FreeEnergyError(ArithmeticError):
    """Non-finite free-energy term; carries the term name."""

    def __init__(self, term: str):
        super().__init__(f"non-finite free-energy term {term}")
        self.term = term


@dataclass
class FreeEnergyReport:
    phi_uninformed: float
    phi_informed: float
    m_it: np.ndarray
    mmse: float
    amp_mse: float
    phase: Phase
    mse_threshold: float
    converged_uninformed: bool
    converged_informed: bool


# ---------------------------------------------------------------------------
# the three expected log-Z families

def _gb_switch_features(c0: float, kappa: float):
    """Panel features of softplus(c0 + kappa v^2 / 2): the posterior-support
    switch sits at +-v* with poles pi / (kappa v*) off the real axis."""
    if c0 < 0.0:
        v_star = np.sqrt(-2.0 * c0 / kappa)
        d = np.pi / (kappa * max(v_star, np.sqrt(2.0 * np.pi / kappa)))
        return [(-v_star, d), (v_star, d)]
    return [(0.0, np.sqrt(2.0 * (np.pi + c0) / kappa))]


def _i_prior(p: Prior, mhat: float, q: QuadratureConfig) -> float:
    """E log Z of the prior layer, b ~ N(mhat x, mhat), x ~ prior.

    Both non-Gaussian priors reduce to one-dimensional integrals over the
    field b, evaluated on panels graded around the integrand's sharp
    features (see se._panel_nodes); plain Gauss-Hermite under-resolves the
    support switch once mhat is large.
    """
    if isinstance(p, GaussianPrior):
        v = p.variance
        S = 1.0 + mhat * v
        return -0.5 * np.log(S) + (mhat * mhat * v + mhat) * v / (2.0 * S)
    mh = max(mhat, _se.MHAT_FLOOR)
    if isinstance(p, Rademacher):
        # x = +-1 contribute identically (logcosh is even): b ~ N(mh, mh)
        sb = np.sqrt(mh)
        v, wts = _se._panel_nodes([(-sb, 0.5 * np.pi / sb)], q.nodes_per_dim)
        return float(np.sum(wts * cmp.prior_logz(p, mhat, mh + sb * v)))
    if isinstance(p, GaussBernoulli):
        if p.rho >= 1.0:
            return _i_prior(GaussianPrior(1.0), mhat, q)
        # log Z = log(1 - rho) + softplus(c0 + b^2 / (2 (1 + mh))) with
        # c0 = logit(rho) - log(1 + mh)/2; marginalizing x collapses both
        # branches to 1-D: b = sqrt(mh) v off-support, b = s u on-support
        c0 = np.log(p.rho / (1.0 - p.rho)) - 0.5 * np.log1p(mh)
        acc = np.log(1.0 - p.rho)
        for weight, kappa in ((1.0 - p.rho, mh / (1.0 + mh)), (p.rho, mh)):
            v, wts = _se._panel_nodes(_gb_switch_features(c0, kappa),
                                      q.nodes_per_dim)
            acc += weight * float(np.sum(
                wts * np.logaddexp(0.0, c0 + 0.5 * kappa * v * v)))
        return acc
    raise ConfigurationError(f"unknown prior {p!r}")


def _i_mid(ch: Channel, mhat_prev: float, m: float, rho_in: float,
           rho_out: float, q: QuadratureConfig) -> float:
    """E log Z of an intermediate layer; V = rho_in - m is the input gap."""
    V = float(np.maximum(rho_in - m, _se.M_GAP))
    if isinstance(ch, Awgn):
        vt = V + max(ch.delta, cmp.VAR_FLOOR)
        S = 1.0 + mhat_prev * vt
        return (-0.5 * np.log(S)
                + (mhat_prev * m
                   + (mhat_prev * mhat_prev * rho_out + mhat_prev) * vt)
                / (2.0 * S))
    sv, kappa, tau, vscale = _se._sign_input_split(ch.delta, V, m)
    v, wv = _se._half_line_nodes(q.nodes_per_dim, vscale)
    xg, wg = _se._std_normal_nodes(q.nodes_per_dim)
    mu = mhat_prev
    sb = np.sqrt(max(mu, _se.MHAT_FLOOR))
    # log Z = -A/2 + |B| + r with bounded remainder
    #   r = logaddexp(B - |B| + logPhi(c), -B - |B| + logPhi(-c)).
    # E[-A/2 + |B|] is taken in closed form (|B| is folded normal,
    # B | h = s ~ N(mu s, mu)); at large conjugates the O(mu) terms would
    # otherwise cancel on the grid far below the needed accuracy.
    vt = V + ch.delta
    acc = (-0.5 * mu + np.sqrt(2.0 * mu / np.pi) * np.exp(-0.5 * mu)
           + mu * (1.0 - 2.0 * ndtr(-sb)))
    for s in (1.0, -1.0):
        w = s * kappa * sv * v[:, None, None] + tau * xg[None, :, None]
        # remainder switches near b = 0 (scale 1 in b), pole-graded panels
        xb, wb = _se._panel_nodes([(-s * sb, 0.5 * np.pi / sb)],
                                  q.nodes_per_dim, window=8.0)
        b = (mu * s + sb * xb)[None, None, :]
        c = w / np.sqrt(vt)
        absb = np.abs(b)
        r = np.logaddexp(b - absb + cmp.log_ndtr(c),
                         -b - absb + cmp.log_ndtr(-c))
        w3d = wv[:, None, None] * wg[None, :, None] * wb[None, None, :]
        acc += np.sum(w3d * r)
    return float(acc)


def _i_first(ch: Channel, m: float, rho1: float, q: QuadratureConfig) -> float:
    """E log Z of the observation layer; V = rho1 - m^(1)."""
    V = float(np.maximum(rho1 - m, _se.M_GAP))
    if isinstance(ch, Awgn):
        vt = V + max(ch.delta, cmp.VAR_FLOOR)
        return -0.5 * (np.log(2.0 * np.pi * vt) + 1.0)
    sv, kappa, tau, vscale = _se._sign_input_split(ch.delta, V, m)
    v, wv = _se._half_line_nodes(q.nodes_per_dim, vscale)
    xg, wg = _se._std_normal_nodes(q.nodes_per_dim)
    acc = 0.0
    for y in (1.0, -1.0):
        w = y * kappa * sv * v[:, None] + tau * xg[None, :]
        val = cmp.first_layer_logz(ch, y, V, w)
        acc += np.sum(wv[:, None] * wg[None, :] * val)
    return float(acc)


# ---------------------------------------------------------------------------
# assembly

def _alpha_tilde(spec: NetworkSpec) -> np.ndarray:
    """[n_0/n_L, ..., n_L/n_L] from the requested aspect ratios."""
    L = spec.depth
    tilde = np.ones(L + 1)
    for ell in range(L - 1, -1, -1):
        tilde[ell] = spec.layers[ell].alpha * tilde[ell + 1]
    return tilde


def phi_rs(spec: NetworkSpec, m: np.ndarray, mhat: np.ndarray,
           q: QuadratureConfig) -> float:
    """Replica-symmetric free energy at per-layer overlaps and conjugates."""
    L = spec.depth
    rho = second_moment_profile(spec)
    m = np.asarray(m, dtype=float)
    mhat = np.asarray(mhat, dtype=float)
    tilde = _alpha_tilde(spec)

    phi = 0.5 * float(np.sum(tilde[1:] * m * mhat))

    term = _i_prior(spec.prior, float(mhat[L - 1]), q)
    if not np.isfinite(term):
        raise FreeEnergyError("prior")
    phi -= tilde[L] * term

    for ell in range(1, L):  # paper layers 2..L at list index ell
        rho_out = rho[ell - 1]
        term = _i_mid(spec.layers[ell].channel, float(mhat[ell - 1]),
                      float(m[ell]), rho[ell], rho_out, q)
        if not np.isfinite(term):
            raise FreeEnergyError(f"mid layer {ell + 1}")
        phi -= tilde[ell] * term

    term = _i_first(spec.layers[0].channel, float(m[0]), rho[0], q)
    if not np.isfinite(term):
        raise FreeEnergyError("observation")
    phi -= tilde[0] * term
    return phi


def phi_rs_profile(spec: NetworkSpec, m: np.ndarray,
                   q: QuadratureConfig) -> float:
    """phi_RS as a function of the overlaps only, mhat eliminated through
    one conjugate sweep of the state evolution."""
    rho = second_moment_profile(spec)
    mhat, _ = _se.mhat_sweep(spec, np.asarray(m, dtype=float), rho, q)
    return phi_rs(spec, m, mhat, q)


def refine_fixed_point(spec: NetworkSpec, point: SePoint,
                       q: QuadratureConfig, max_extra: int = 200) -> SePoint:
    """Polish a converged SE point to the numerical fixed point.

    The solver stops once the overlaps move less than its tolerance; the
    residual left over is amplified by stationarity checks near noiseless
    boundaries, so iterate until the map stalls at machine precision.
    """
    p = point
    last = np.inf
    for _ in range(max_extra):
        p_next = _se.se_step(spec, p, q)
        delta = float(np.max(np.abs(p_next.m - p.m)))
        p = p_next
        if delta == 0.0 or delta >= last:
            break
        last = delta
    return p


def stationarity_residual(spec: NetworkSpec, point: SePoint,
                          q: QuadratureConfig, rel_step: float = 3e-3) -> float:
    """Max-norm finite-difference gradient of phi_RS at an SE fixed point.

    The gradient is taken in the full (m, mhat) space at fixed conjugates,
    each coordinate scaled by its curvature scale (the gap rho - m for
    overlaps, 1 + mhat for conjugates) so the residual is dimensionless and
    meaningful next to noiseless boundaries where phi varies on the scale
    of the channel regularization.

    Layers pinned at the gap clamp (perfect-recovery boundary) replace the
    two-sided zero-gradient condition by the one-sided optimality condition:
    phi must not increase toward the interior.  Their conjugate coordinate
    is skipped outright -- the clamped overlap stands in for m = rho, so the
    finite conjugate is a surrogate for +inf and its interior stationarity
    condition is off by O(clamp), amplified by the conjugate scale.
    """
    L = spec.depth
    rho = second_moment_profile(spec)
    m = np.clip(np.asarray(point.m, dtype=float), 0.0, rho - _se.M_GAP)
    # conjugates consistent with the final overlaps
    mhat, _ = _se.mhat_sweep(spec, m, rho, q)

    worst = 0.0
    for ell in range(L):
        gap = rho[ell] - m[ell]
        pinned = gap <= 2.0 * _se.M_GAP
        if pinned:
            # boundary minimum: phi along the profile (conjugates re-solved,
            # an explicit function of m) must not decrease toward the
            # interior; the fixed-conjugate slice is meaningless here since
            # the pinned conjugate is a surrogate for +inf
            h = 1e-4 * rho[ell]
            mm = m.copy()
            mm[ell] -= h
            drop = (phi_rs_profile(spec, m, q)
                    - phi_rs_profile(spec, mm, q)) / h
            worst = max(worst, max(0.0, drop))
            continue
        h = rel_step * gap
        if m[ell] - h > 0.0:
            mp, mm = m.copy(), m.copy()
            mp[ell] += h
            mm[ell] -= h
            grad = (phi_rs(spec, mp, mhat, q)
                    - phi_rs(spec, mm, mhat, q)) / (2.0 * h) * gap
            worst = max(worst, abs(grad))
        if mhat[ell] > _se.MHAT_FLOOR:
            scale = 1.0 + mhat[ell]
            hh = min(rel_step * scale, 0.5 * mhat[ell])
            hp, hm = mhat.copy(), mhat.copy()
            hp[ell] += hh
            hm[ell] -= hh
            grad = (phi_rs(spec, m, hp, q)
                    - phi_rs(spec, m, hm, q)) / (2.0 * hh) * scale
            worst = max(worst, abs(grad))
    return worst


def classify_phase(mmse: float, amp_mse: float, threshold: float) -> Phase:
    if mmse > threshold:
        return Phase.IMPOSSIBLE
    if amp_mse > threshold:
        return Phase.HARD
    return Phase.EASY


def locate_m_it(spec: NetworkSpec, q: QuadratureConfig,
                mse_threshold: float | None = None,
                max_iter: int = 1000, tol: float = 1e-10) -> FreeEnergyReport:
    """Compare the two canonical SE fixed points by free energy.

    The information-theoretic overlap is the argmin of phi_RS; among the
    uninformed/informed fixed points the one with smaller phi wins, with
    near-ties (|dphi| < 1e-9) resolved toward the larger signal overlap.
    """
    rho = second_moment_profile(spec)
    if mse_threshold is None:
        mse_threshold = 1e-4 * rho[-1]

    res_u = _se.se_fixed_point(spec, Init.UNINFORMED, q, max_iter, tol)
    res_i = _se.se_fixed_point(spec, Init.INFORMED, q, max_iter, tol)
    phi_u = phi_rs(spec, res_u.point.m, res_u.point.mhat, q)
    phi_i = phi_rs(spec, res_i.point.m, res_i.point.mhat, q)

    if abs(phi_u - phi_i) < 1e-9:
        best = res_i if res_i.point.m[-1] >= res_u.point.m[-1] else res_u
    else:
        best = res_u if phi_u < phi_i else res_i

    amp_mse = float(rho[-1] - res_u.point.m[-1])
    mmse = float(rho[-1] - best.point.m[-1])
    if res_u.converged and res_i.converged:
        phase = classify_phase(mmse, amp_mse, mse_threshold)
    else:
        phase = Phase.UNKNOWN
    return FreeEnergyReport(
        phi_uninformed=phi_u, phi_informed=phi_i,
        m_it=best.point.m.copy(), mmse=mmse, amp_mse=amp_mse,
        phase=phase, mse_threshold=mse_threshold,
        converged_uninformed=res_u.converged,
        converged_informed=res_i.converged,
    )


def phi_scan(spec: NetworkSpec, q: QuadratureConfig, n_points: int = 41,
             relax_iters: int = 200, relax_tol: float = 1e-9):
    """Dense cross-check: phi_RS along a grid of the signal overlap m^(L),
    the overlaps of the other layers relaxed by partial SE at fixed m^(L).

    Returns a list of (m_L, phi) pairs.
    """
    rho = second_moment_profile(spec)
    L = spec.depth
    grid = np.linspace(0.0, rho[-1] - _se.M_GAP, n_points)
    out = []
    m = np.full(L, 1e-6) * rho
    for m_L in grid:
        m[-1] = m_L
        for _ in range(relax_iters if L > 1 else 1):
            mhat, mid_h_hhat = _se.mhat_sweep(spec, m, rho, q)
            if L == 1:
                break
            m_next = m.copy()
            m_next[:L - 1] = np.clip(mid_h_hhat[1:], 0.0,
                                     rho[:L - 1] - _se.M_GAP)
            delta = float(np.max(np.abs(m_next - m)))
            m = m_next
            if delta < relax_tol:
                break
        out.append((float(m_L), phi_rs_profile(spec, m, q)))
    return out
