"""State evolution: scalar order parameters tracking ML-AMP layer by layer.

Each layer ell carries an overlap m^(ell) (correlation of the estimate with
the ground truth) and a conjugate mhat^(ell) (concentration value of A).
One time step computes all mhat from the current m (sweeping ell = 1..L, each
mid layer using the mhat of the layer before it), then all m for t+1.

Expectations are over the scalar surrogate law of the messages,

    P(h, z, b, w) = P_out(h | z) N(z; w, rho - m) N(b; mhat' h, mhat')
                    N(w; 0, m),

evaluated in closed form where the channel allows it (Awgn collapses
analytically) and by Gauss-Hermite quadrature otherwise (sign channels: 2-D
grid in (w, b) with the binary output summed exactly).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import components as cmp
from .model import (Awgn, Channel, ConfigurationError, GaussBernoulli,
                    GaussianPrior, NetworkSpec, Prior, Rademacher,
                    SignWithNoise, second_moment_profile)

log = logging.getLogger(__name__)

MHAT_FLOOR = 1e-12   # conjugates clamped here from below (occurrences logged)
M_GAP = 1e-12        # overlaps clamped to [0, rho - M_GAP]


@dataclass(frozen=True)
class QuadratureConfig:
    nodes_per_dim: int = 41
    mc_fallback_samples: int = 0   # > 0 enables Monte-Carlo rescue of a
    mc_seed: int = 0               # quadrature update that came out non-finite

    def __post_init__(self):
        if self.nodes_per_dim < 3:
            raise ConfigurationError("nodes_per_dim must be >= 3")
        if self.mc_fallback_samples < 0:
            raise ConfigurationError("mc_fallback_samples must be >= 0")


@dataclass(frozen=True)
class SePoint:
    """Per-layer order parameters; index ell holds layer ell + 1."""
    m: np.ndarray
    mhat: np.ndarray
    rho: np.ndarray
    t: int = 0


class Init(enum.Enum):
    UNINFORMED = "uninformed"
    INFORMED = "informed"


@dataclass
class SeResult:
    point: SePoint
    converged: bool
    iterations: int
    trajectory: list[SePoint] = field(default_factory=list)


def se_mse(p: SePoint) -> np.ndarray:
    """Per-layer predicted MSE, rho_ell - m^(ell)."""
    return p.rho - p.m


# ---------------------------------------------------------------------------
# quadrature helpers

@lru_cache(maxsize=32)
def _std_normal_nodes(order: int):
    """Nodes/weights for E_{x ~ N(0,1)} f(x) = sum_i w_i f(x_i)."""
    from numpy.polynomial.hermite import hermgauss
    x, w = hermgauss(order)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


@lru_cache(maxsize=32)
def _legendre_nodes(order: int):
    return np.polynomial.legendre.leggauss(order)


@lru_cache(maxsize=32)
def _laguerre_nodes(order: int):
    # alpha = -1/2 absorbs the u^{-1/2} Jacobian of v = sqrt(a^2 + 2u)
    from scipy.special import roots_genlaguerre
    return roots_genlaguerre(order, -0.5)


def _half_line_nodes(order: int, scale: float):
    """Nodes/weights for int_0^inf N(v; 0, 1) g(v) dv = sum_i w_i g(v_i),
    for g smooth on the given scale near the origin.

    Two panels: Gauss-Legendre on [0, a] with the Gaussian density as an
    explicit factor (resolves boundary features of width ~ scale), then
    Gauss-Legendre on [a, inf) through the exponential map
    v = a - log(1 - q), under which the Gaussian decay flattens the
    integrand to C-infinity at the far endpoint.
    """
    x, w = _legendre_nodes(order)
    a = min(10.0 * scale, 1.0)
    v_lo = 0.5 * a * (x + 1.0)
    w_lo = 0.5 * a * w * np.exp(-0.5 * v_lo ** 2) / np.sqrt(2.0 * np.pi)
    q = 0.5 * (x + 1.0)
    v_hi = a - np.log1p(-q)
    w_hi = (0.5 * w / (1.0 - q)
            * np.exp(-0.5 * v_hi ** 2) / np.sqrt(2.0 * np.pi))
    return np.concatenate([v_lo, v_hi]), np.concatenate([w_lo, w_hi])


def _panel_nodes(features, order, window=12.0):
    """Nodes/weights for int_{-W}^{W} N(v; 0, 1) f(v) dv with f analytic
    except for singularities at distance ~ d off the real axis near each
    v0 in features = [(v0, d), ...].

    Panels are graded geometrically away from each feature point so every
    panel's width stays comparable to its distance from the nearest
    singularity, keeping the per-panel Gauss-Legendre error uniformly
    spectral.  The truncation at |v| = W is below the Gaussian tail mass.
    """
    bps = {-window, window}
    for v0, d in features:
        d = max(float(d), 1e-300)
        for sgn in (-1.0, 1.0):
            x = 3.0 * d
            while x < 2.0 * window + abs(v0):
                p = v0 + sgn * x
                if -window < p < window:
                    bps.add(p)
                x *= 3.0
        if -window < v0 < window:
            bps.add(v0)
    # cap the panel width so the Gaussian factor itself stays resolved
    bps = sorted(bps)
    split = []
    for a, b in zip(bps, bps[1:]):
        n_sub = max(1, int(np.ceil((b - a) / 4.0)))
        split.extend(a + (b - a) * k / n_sub for k in range(n_sub))
    split.append(bps[-1])
    bps = split
    x, w = _legendre_nodes(order)
    nodes, wts = [], []
    for a, b in zip(bps, bps[1:]):
        v = 0.5 * (a + b) + 0.5 * (b - a) * x
        nodes.append(v)
        wts.append(0.5 * (b - a) * w
                   * np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi))
    return np.concatenate(nodes), np.concatenate(wts)


def _clamped_gap(rho, m):
    return np.maximum(rho - m, M_GAP)


def _sign_input_split(delta, V, m):
    """Decompose (w, s) of a sign layer through the pre-activation v.

    With v = w + N(0, V + delta) and s = sign(v): v ~ N(0, sv^2) and
    w | v ~ N(kappa v, tau^2).  Conditioning on v makes every integrand
    smooth on the scale tau, which the conditional quadrature grid matches;
    the naive (w, s) order hides a spike of width sqrt(V) near w = 0.
    """
    vtg = V + delta
    sv = np.sqrt(m + vtg)
    kappa = m / (m + vtg)
    tau = np.sqrt(m * vtg / (m + vtg))
    # v-scale (in standard units) on which the conditional integrands vary:
    # the channel's own transition width sqrt(V + delta) plus the w-spread
    vscale = (np.sqrt(max(V, cmp.VAR_FLOOR) + delta) + tau) / max(kappa * sv, 1e-300)
    return sv, kappa, tau, vscale


# ---------------------------------------------------------------------------
# per-layer expectations (quadrature path)

def _expect_first(ch: Channel, V: float, m: float, q: QuadratureConfig) -> float:
    """E[-d_omega g] at the observation layer."""
    if isinstance(ch, Awgn):
        return 1.0 / (V + max(ch.delta, cmp.VAR_FLOOR))
    sv, kappa, tau, vscale = _sign_input_split(ch.delta, V, m)
    v, wv = _half_line_nodes(q.nodes_per_dim, vscale)
    xg, wg = _std_normal_nodes(q.nodes_per_dim)
    acc = 0.0
    for y in (1.0, -1.0):
        w = y * kappa * sv * v[:, None] + tau * xg[None, :]
        fs = cmp.FactorSideInput(V=V, omega=w)
        _, dg = cmp.first_layer_g(ch, y, fs)
        acc += np.sum(wv[:, None] * wg[None, :] * (-dg))
    return float(acc)


def _expect_mid(ch: Channel, mhat_prev: float, V: float, m: float,
                rho_out: float, q: QuadratureConfig) -> tuple[float, float]:
    """(E[-d_omega g], E[h hhat]) at an intermediate layer.

    mhat_prev tilts the layer output h, V = rho_ell - m^(ell) is the input
    gap, rho_out = rho_{ell-1} the output second moment.
    """
    if isinstance(ch, Awgn):
        vt = V + max(ch.delta, cmp.VAR_FLOOR)
        S = 1.0 + mhat_prev * vt
        return mhat_prev / S, (m + mhat_prev * vt * rho_out) / S
    sv, kappa, tau, vscale = _sign_input_split(ch.delta, V, m)
    v, wv = _half_line_nodes(q.nodes_per_dim, vscale)
    xg, wg = _std_normal_nodes(q.nodes_per_dim)
    sb = np.sqrt(max(mhat_prev, MHAT_FLOOR))
    neg_dg = 0.0
    h_hhat = 0.0
    for s in (1.0, -1.0):
        w = s * kappa * sv * v[:, None, None] + tau * xg[None, :, None]
        # b | h = s is N(mhat_prev s, mhat_prev); the moments switch at
        # b = 0 (tanh poles at distance pi / (2 sqrt(mhat_prev)))
        xb, wb = _panel_nodes([(-s * sb, 0.5 * np.pi / sb)],
                              q.nodes_per_dim, window=8.0)
        b = mhat_prev * s + sb * xb
        mom = cmp.mid_layer_moments(
            ch,
            cmp.VariableSideInput(A=mhat_prev, B=b[None, None, :]),
            cmp.FactorSideInput(V=V, omega=w))
        w3d = (wv[:, None, None] * wg[None, :, None] * wb[None, None, :])
        neg_dg += np.sum(w3d * (-mom.dg))
        h_hhat += np.sum(w3d * (s * mom.hhat))
    return float(neg_dg), float(h_hhat)


def _expect_prior(p: Prior, mhat: float, q: QuadratureConfig) -> float:
    """E[x hhat] at the prior layer, b ~ N(mhat x, mhat)."""
    if isinstance(p, GaussianPrior):
        v = p.variance
        return mhat * v * v / (1.0 + mhat * v)
    if isinstance(p, Rademacher):
        # x = +-1 contribute identically by symmetry: m = E tanh(B),
        # B ~ N(mhat, mhat).  In standard units the tanh switch sits at
        # v0 = -sqrt(mhat) with pole scale pi / (2 sqrt(mhat)).
        sb = np.sqrt(max(mhat, MHAT_FLOOR))
        v, wts = _panel_nodes([(-sb, 0.5 * np.pi / sb)], q.nodes_per_dim)
        return float(np.sum(wts * np.tanh(mhat + sb * v)))
    if isinstance(p, GaussBernoulli):
        # on-support branch only (x = 0 contributes nothing); marginalizing
        # x | B collapses the expectation to one dimension,
        #   m = rho mhat/(1+mhat) E_u[u^2 expit(c0 + mhat u^2 / 2)],
        # u ~ N(0, 1), c0 = logit(rho) - log(1 + mhat)/2.  The posterior
        # support switch sits at u* with c0 + mhat u*^2/2 = 0.
        from scipy.special import expit
        c0 = np.log(p.rho / (1.0 - p.rho)) - 0.5 * np.log1p(mhat) \
            if p.rho < 1.0 else np.inf
        if not np.isfinite(c0):
            return mhat / (1.0 + mhat)  # rho = 1: Gaussian prior
        mh = max(mhat, MHAT_FLOOR)
        if c0 < 0.0:
            u_star = np.sqrt(-2.0 * c0 / mh)
            d = np.pi / (mh * max(u_star, np.sqrt(2.0 * np.pi / mh)))
            features = [(-u_star, d), (u_star, d)]
        else:
            features = [(0.0, np.sqrt(2.0 * (np.pi + c0) / mh))]
        u, wts = _panel_nodes(features, q.nodes_per_dim)
        val = np.sum(wts * u * u * expit(c0 + 0.5 * mh * u * u))
        return float(p.rho * mhat / (1.0 + mhat) * val)
    raise ConfigurationError(f"unknown prior {p!r}")


# ---------------------------------------------------------------------------
# Monte-Carlo rescue (also exercised directly by the tests)

def _sample_layer_vars(ch: Channel, mhat_prev, V, m, rng, n):
    w = rng.normal(0.0, np.sqrt(m), size=n)
    z = w + rng.normal(0.0, np.sqrt(V), size=n)
    if isinstance(ch, Awgn):
        h = z if ch.delta == 0.0 else z + rng.normal(0.0, np.sqrt(ch.delta), size=n)
    else:
        zn = z if ch.delta == 0.0 else z + rng.normal(0.0, np.sqrt(ch.delta), size=n)
        h = np.where(zn >= 0.0, 1.0, -1.0)
    b = mhat_prev * h + rng.normal(0.0, np.sqrt(mhat_prev), size=n)
    return h, z, b, w


def mc_expect_first(ch: Channel, V: float, m: float, n: int, rng) -> float:
    """Monte-Carlo estimate of E[-d_omega g] at the observation layer."""
    h, _, _, w = _sample_layer_vars(ch, 1.0, V, m, rng, n)
    y = h  # the observed output plays the role of h
    fs = cmp.FactorSideInput(V=np.full_like(w, V), omega=w)
    _, dg = cmp.first_layer_g(ch, y, fs)
    return float(np.mean(-dg))


def mc_expect_mid(ch: Channel, mhat_prev: float, V: float, m: float,
                  n: int, rng) -> tuple[float, float]:
    """Monte-Carlo estimate of (E[-d_omega g], E[h hhat]) at a mid layer."""
    h, _, b, w = _sample_layer_vars(ch, mhat_prev, V, m, rng, n)
    mom = cmp.mid_layer_moments(
        ch, cmp.VariableSideInput(A=mhat_prev, B=b),
        cmp.FactorSideInput(V=np.full_like(w, V), omega=w))
    return float(np.mean(-mom.dg)), float(np.mean(h * mom.hhat))


def mc_expect_prior(p: Prior, mhat: float, n: int, rng) -> float:
    """Monte-Carlo estimate of E[x hhat] at the prior layer."""
    from .model import _sample_prior
    xs = _sample_prior(p, n, rng)
    b = mhat * xs + rng.normal(0.0, np.sqrt(mhat), size=n)
    hhat, _ = cmp.prior_moments(p, cmp.VariableSideInput(A=mhat, B=b))
    return float(np.mean(xs * hhat))


# ---------------------------------------------------------------------------
# the SE sweep

class SeNumericError(ArithmeticError):
    """Non-finite state-evolution update; carries the offending layer."""

    def __init__(self, layer: int, what: str):
        super().__init__(f"non-finite SE update ({what}) at layer {layer}")
        self.layer = layer


def _rescue(value, compute_mc, q: QuadratureConfig, layer: int, what: str):
    if np.all(np.isfinite(value)):
        return value
    if q.mc_fallback_samples > 0:
        rng = np.random.Generator(np.random.Philox(q.mc_seed))
        value = compute_mc(rng)
        if np.all(np.isfinite(value)):
            log.warning("SE layer %d: %s rescued by Monte-Carlo fallback",
                        layer, what)
            return value
    raise SeNumericError(layer, what)


def mhat_sweep(spec: NetworkSpec, m: np.ndarray, rho: np.ndarray,
               q: QuadratureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate sweep: all mhat at time t from the overlaps m at time t.

    Returns (mhat, mid_h_hhat) where mid_h_hhat[ell] caches the second
    expectation of each intermediate layer for reuse in the m sweep.
    """
    L = spec.depth
    m = np.clip(m, 0.0, rho - M_GAP)
    gaps = _clamped_gap(rho, m)

    mhat = np.empty(L)
    mid_h_hhat = np.empty(L)  # cached second expectation of each mid layer
    for ell in range(L):
        ch = spec.layers[ell].channel
        alpha = spec.layers[ell].alpha
        if ell == 0:
            val = _expect_first(ch, gaps[0], m[0], q)
            val = _rescue(val, lambda rng: mc_expect_first(
                ch, gaps[0], m[0], q.mc_fallback_samples, rng), q, 1, "mhat")
        else:
            pair = _expect_mid(ch, mhat[ell - 1], gaps[ell], m[ell],
                               rho[ell - 1], q)
            pair = _rescue(np.asarray(pair),
                           lambda rng, e=ell: np.asarray(mc_expect_mid(
                               ch, mhat[e - 1], gaps[e], m[e],
                               q.mc_fallback_samples, rng)),
                           q, ell + 1, "mhat")
            val, mid_h_hhat[ell] = pair
        mhat[ell] = alpha * val
        if mhat[ell] < MHAT_FLOOR:
            log.debug("SE layer %d: mhat clamped from %g to %g",
                      ell + 1, mhat[ell], MHAT_FLOOR)
            mhat[ell] = MHAT_FLOOR
    return mhat, mid_h_hhat


def se_step(spec: NetworkSpec, p: SePoint, q: QuadratureConfig) -> SePoint:
    """One synchronous SE time step: all mhat at t, then all m at t+1."""
    L = spec.depth
    rho = p.rho
    m = np.clip(p.m, 0.0, rho - M_GAP)
    gaps = _clamped_gap(rho, m)
    mhat, mid_h_hhat = mhat_sweep(spec, m, rho, q)

    m_new = np.empty(L)
    # mid-layer m updates share the partition function of the mhat sweep
    m_new[:L - 1] = mid_h_hhat[1:]
    val = _expect_prior(spec.prior, mhat[L - 1], q)
    val = _rescue(val, lambda rng: mc_expect_prior(
        spec.prior, mhat[L - 1], q.mc_fallback_samples, rng), q, L, "m")
    m_new[L - 1] = val

    m_new = np.clip(m_new, 0.0, rho - M_GAP)
    return SePoint(m=m_new, mhat=mhat, rho=rho, t=p.t + 1)


def se_initial_point(spec: NetworkSpec, init: Init) -> SePoint:
    rho = second_moment_profile(spec)
    eps = 1e-6
    m = eps * rho if init is Init.UNINFORMED else (1.0 - eps) * rho
    return SePoint(m=m, mhat=np.zeros(spec.depth), rho=rho, t=0)


def se_fixed_point(spec: NetworkSpec, init: Init, q: QuadratureConfig,
                   max_iter: int = 1000, tol: float = 1e-10,
                   record_trajectory: bool = False) -> SeResult:
    """Iterate se_step from the chosen initialization until the overlaps move
    by less than tol (max norm) or max_iter is hit."""
    p = se_initial_point(spec, init)
    traj = [p] if record_trajectory else []
    converged = False
    for _ in range(max_iter):
        p_next = se_step(spec, p, q)
        delta = float(np.max(np.abs(p_next.m - p.m)))
        p = p_next
        if record_trajectory:
            traj.append(p)
        if delta < tol:
            converged = True
            break
    return SeResult(point=p, converged=converged, iterations=p.t,
                    trajectory=traj)
