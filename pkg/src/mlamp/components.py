"""Scalar building blocks shared by the message-passing loop and state evolution.

Each channel couples a Gaussian belief N(omega, V) on its linear input z with
a quadratic tilt exp(-A h^2 / 2 + B h) on its output h, through a partition
function

    Z(A, B, V, omega) = 1/sqrt(2 pi V) int dh dz P_out(h|z)
                        exp(-A h^2/2 + B h) exp(-(z - omega)^2 / (2 V)).

All four moments of one channel come from a single log Z expression:
g = d_omega log Z, dg = d^2_omega log Z, hhat = d_B log Z, sigma = d^2_B log Z.
Everything is vectorized over numpy arrays (broadcasting allowed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, expit, log_ndtr

from .model import (Awgn, Channel, GaussBernoulli, GaussianPrior, Prior,
                    Rademacher, SignWithNoise)

VAR_FLOOR = 1e-12  # lower clamp for V (and Awgn delta) before use


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class DomainError(ValueError):
    """Inputs outside the domain of a closed form (e.g. negative precision)."""


@dataclass(frozen=True)
class FactorSideInput:
    """Gaussian belief on a factor's linear input: mean omega, variance V."""
    V: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class VariableSideInput:
    """Quadratic tilt on the variable side: precision-like A, field-like B."""
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class ChannelMoments:
    g: np.ndarray
    dg: np.ndarray
    hhat: np.ndarray
    sigma: np.ndarray


_SQRT_2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def gauss_hazard(c):
    """phi(c) / Phi(c), evaluated via erfcx to avoid tail cancellation."""
    c = np.asarray(c, dtype=float)
    # erfcx(-c/sqrt(2)) overflows for c >~ 37; there Phi(c) = 1 to full precision
    safe = np.minimum(c, 25.0)
    out = _SQRT_2_OVER_PI / erfcx(-safe / _SQRT_2)
    big = c > 25.0
    if np.any(big):
        out = np.where(big, np.exp(-0.5 * c * c) / np.sqrt(2.0 * np.pi), out)
    return out


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError("non-finite input to channel moments")


# ---------------------------------------------------------------------------
# mid-layer channels

def _awgn_mid(delta, A, B, V, omega):
    # Z = int dh N(h; omega, V + delta) exp(-A h^2/2 + B h):
    # log Z = -log(S)/2 + (2 B omega + B^2 vt - A omega^2) / (2 S), S = 1 + A vt
    vt = np.maximum(V, VAR_FLOOR) + max(delta, VAR_FLOOR)
    S = 1.0 + A * vt
    if np.any(S <= 0.0):
        raise DomainError("Awgn channel: 1 + A (V + delta) must be positive")
    g = (B - A * omega) / S
    dg = -A / S * np.ones_like(g)
    hhat = (omega + B * vt) / S
    sigma = vt / S * np.ones_like(g)
    return ChannelMoments(g=g, dg=dg, hhat=hhat, sigma=sigma)


def _sign_mid(delta, A, B, V, omega):
    # Z = e^{-A/2} [e^B Phi(c) + e^{-B} Phi(-c)], c = omega / sqrt(V + delta)
    vt = np.maximum(V, VAR_FLOOR) + delta
    root = np.sqrt(vt)
    c = omega / root
    d = 2.0 * B + log_ndtr(c) - log_ndtr(-c)  # log of posterior odds of h = +1
    wp = expit(d)
    wq = expit(-d)
    hhat = np.tanh(0.5 * d)
    sigma = 4.0 * wp * wq
    g = (wp * gauss_hazard(c) - wq * gauss_hazard(-c)) / root
    dg = -g * (g + omega / vt)
    return ChannelMoments(g=g, dg=dg, hhat=hhat, sigma=sigma)


def mid_layer_moments(ch: Channel, vs: VariableSideInput,
                      fs: FactorSideInput) -> ChannelMoments:
    """Moments of an intermediate layer's partition function.

    The variable side (A, B) tilts the layer output h, the factor side
    (V, omega) is the Gaussian belief on the layer input z.
    """
    _check_finite(vs.A, vs.B, fs.V, fs.omega)
    if isinstance(ch, Awgn):
        return _awgn_mid(ch.delta, vs.A, vs.B, fs.V, fs.omega)
    if isinstance(ch, SignWithNoise):
        return _sign_mid(ch.delta, vs.A, vs.B, fs.V, fs.omega)
    raise DomainError(f"unknown channel {ch!r}")


def mid_layer_logz(ch: Channel, A, B, V, omega):
    """log Z of an intermediate layer (free-energy integrand)."""
    if isinstance(ch, Awgn):
        vt = np.maximum(V, VAR_FLOOR) + max(ch.delta, VAR_FLOOR)
        S = 1.0 + A * vt
        if np.any(S <= 0.0):
            raise DomainError("Awgn channel: 1 + A (V + delta) must be positive")
        return -0.5 * np.log(S) + (2.0 * B * omega + B * B * vt - A * omega * omega) / (2.0 * S)
    if isinstance(ch, SignWithNoise):
        vt = np.maximum(V, VAR_FLOOR) + ch.delta
        c = omega / np.sqrt(vt)
        return -0.5 * A + np.logaddexp(B + log_ndtr(c), -B + log_ndtr(-c))
    raise DomainError(f"unknown channel {ch!r}")


# ---------------------------------------------------------------------------
# first layer (observed output)

def first_layer_g(ch: Channel, y, fs: FactorSideInput):
    """(g, dg) of the observation layer, given measured outputs y."""
    _check_finite(y, fs.V, fs.omega)
    V, omega = fs.V, fs.omega
    if isinstance(ch, Awgn):
        vt = np.maximum(V, VAR_FLOOR) + max(ch.delta, VAR_FLOOR)
        g = (y - omega) / vt
        dg = -1.0 / vt * np.ones_like(g)
        return g, dg
    if isinstance(ch, SignWithNoise):
        vt = np.maximum(V, VAR_FLOOR) + ch.delta
        root = np.sqrt(vt)
        ys = np.where(np.asarray(y) >= 0.0, 1.0, -1.0)
        c = ys * omega / root
        r = gauss_hazard(c)
        g = ys * r / root
        dg = -r * (r + c) / vt
        return g, dg
    raise DomainError(f"unknown channel {ch!r}")


def first_layer_logz(ch: Channel, y, V, omega):
    """log Z of the observation layer (free-energy integrand)."""
    if isinstance(ch, Awgn):
        vt = np.maximum(V, VAR_FLOOR) + max(ch.delta, VAR_FLOOR)
        return -0.5 * np.log(2.0 * np.pi * vt) - (y - omega) ** 2 / (2.0 * vt)
    if isinstance(ch, SignWithNoise):
        vt = np.maximum(V, VAR_FLOOR) + ch.delta
        ys = np.where(np.asarray(y) >= 0.0, 1.0, -1.0)
        return log_ndtr(ys * omega / np.sqrt(vt))
    raise DomainError(f"unknown channel {ch!r}")


# ---------------------------------------------------------------------------
# prior (deepest layer)

def prior_moments(p: Prior, vs: VariableSideInput):
    """(hhat, sigma) of the signal prior under the quadratic tilt (A, B)."""
    _check_finite(vs.A, vs.B)
    A, B = vs.A, vs.B
    if isinstance(p, Rademacher):
        hhat = np.tanh(B)
        e = np.exp(-2.0 * np.abs(B))
        sigma = 4.0 * e / (1.0 + e) ** 2
        return hhat, sigma
    if isinstance(p, GaussianPrior):
        S = 1.0 + A * p.variance
        if np.any(S <= 0.0):
            raise DomainError("Gaussian prior: 1 + A var must be positive")
        return B * p.variance / S, p.variance / S * np.ones_like(B)
    if isinstance(p, GaussBernoulli):
        S = 1.0 + A
        if np.any(S <= 0.0):
            raise DomainError("Gauss-Bernoulli prior: 1 + A must be positive")
        mu = B / S
        v = 1.0 / S
        if p.rho >= 1.0:
            pi = np.ones_like(mu)
        else:
            logit = np.log(p.rho / (1.0 - p.rho)) - 0.5 * np.log(S) + B * B / (2.0 * S)
            pi = expit(logit)
        hhat = pi * mu
        sigma = pi * v + pi * (1.0 - pi) * mu * mu
        return hhat, sigma
    raise DomainError(f"unknown prior {p!r}")


def prior_logz(p: Prior, A, B):
    """log Z of the prior layer (free-energy integrand)."""
    if isinstance(p, Rademacher):
        return -0.5 * A + _logcosh(B)
    if isinstance(p, GaussianPrior):
        S = 1.0 + A * p.variance
        if np.any(S <= 0.0):
            raise DomainError("Gaussian prior: 1 + A var must be positive")
        return -0.5 * np.log(S) + B * B * p.variance / (2.0 * S)
    if isinstance(p, GaussBernoulli):
        S = 1.0 + A
        if np.any(S <= 0.0):
            raise DomainError("Gauss-Bernoulli prior: 1 + A must be positive")
        log_on = np.log(p.rho) - 0.5 * np.log(S) + B * B / (2.0 * S)
        if p.rho >= 1.0:
            return log_on
        return np.logaddexp(np.log(1.0 - p.rho) + np.zeros_like(log_on), log_on)
    raise DomainError(f"unknown prior {p!r}")
