"""Quadrature reference for the closed-form channel and prior moments.

Evaluates the defining integrals of each partition function Z by adaptive
quadrature and derives the moments from exact identities of the tilted
measure mu(h, z) ~ P_out(h|z) exp(-A h^2/2 + B h) N(z; omega, V):

    g     = (E[z] - omega) / V          (d_omega log Z)
    dg    = Var[z] / V^2 - 1 / V        (d^2_omega log Z)
    hhat  = E[h]                        (d_B log Z)
    sigma = Var[h]                      (d^2_B log Z)

This path never touches the analytic per-channel formulas.  A slower
finite-difference route (log Z differentiated numerically, with Richardson
extrapolation) is kept as an additional cross-check; its second derivatives
are limited by quadrature noise and carry a looser tolerance.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad
from scipy.special import ndtr

from .components import ChannelMoments
from .model import (Awgn, Channel, GaussBernoulli, GaussianPrior, Prior,
                    Rademacher, SignWithNoise)

QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-11, limit=200)
TAIL = 10.0  # integration windows extend this many standard deviations


class OracleError(ArithmeticError):
    """Quadrature failed to converge."""


def _quad(f, lo, hi, breakpoints=()):
    pts = [p for p in breakpoints if lo < p < hi] or None
    val, err = quad(f, lo, hi, points=pts, **QUAD_OPTS)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise OracleError(f"quadrature error estimate {err} too large")
    return val


def _norm_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _out_prob(ch: Channel, h, z):
    """P_out(h | z) density (Awgn) or probability mass (sign)."""
    if isinstance(ch, Awgn):
        return _norm_pdf(h, z, ch.delta)
    if isinstance(ch, SignWithNoise):
        if ch.delta == 0.0:
            return 1.0 * (h * z > 0.0) + 0.5 * (z == 0.0)
        return ndtr(h * z / np.sqrt(ch.delta))
    raise ValueError(f"unknown channel {ch!r}")


def _h_window(A, B, delta, z):
    """Support window for h under N(h; z, delta) * exp(-A h^2/2 + B h)."""
    prec = 1.0 / delta + A
    if prec <= 0.0:
        raise OracleError("tilted output variance is not positive")
    sd = prec ** -0.5
    center = (z / delta + B) / prec
    return center - TAIL * sd, center + TAIL * sd


def _awgn_mid_raw_moments(ch: Awgn, A, B, V, omega, order):
    """Weighted moments (Z, E*[z], E*[z^2], E*[h], E*[h^2]) of the defining
    Awgn integrand on a tensor Gauss-Hermite grid.

    The grid is centered on the integrand's numerically-determined support
    (windowing only; no analytic reduction of the integral itself).
    """
    from numpy.polynomial.hermite import hermgauss

    delta = max(ch.delta, 1e-12)  # same regularization as the closed form
    prec = 1.0 / delta + A
    if prec <= 0.0:
        raise OracleError("tilted output variance is not positive")
    s_h = prec ** -0.5
    # window the z-grid on the tilted z-marginal, which the h-tilt shifts
    # and narrows relative to N(omega, V)
    a_eff = A / (1.0 + A * delta)
    b_eff = B / (1.0 + A * delta)
    z_prec = 1.0 / V + a_eff
    if z_prec <= 0.0:
        raise OracleError("tilted input variance is not positive")
    z_center = (omega / V + b_eff) / z_prec
    s_z = z_prec ** -0.5
    x, wx = hermgauss(order)
    z = z_center + s_z * _SQRT2 * x[:, None]
    # h - z written without forming z/delta (cancellation-free for tiny delta)
    dh = (B - A * z) / prec + s_h * _SQRT2 * x[None, :]
    h = z + dh
    log_f = (-0.5 * dh ** 2 / delta - 0.5 * A * h * h + B * h
             - 0.5 * (z - omega) ** 2 / V
             - np.log(2.0 * np.pi * np.sqrt(V * delta)))
    # fixed gauge (order-independent) keeps exponentials in range; only
    # moment ratios are used downstream, so the common scale drops out
    dh0 = (B - A * z_center) / prec
    h0 = z_center + dh0
    log_f = log_f - (-0.5 * dh0 ** 2 / delta - 0.5 * A * h0 * h0 + B * h0
                     - 0.5 * (z_center - omega) ** 2 / V
                     - np.log(2.0 * np.pi * np.sqrt(V * delta)))
    gauge = x[:, None] ** 2 + x[None, :] ** 2  # cancels the GH weight
    jac = 2.0 * s_z * s_h
    w2d = wx[:, None] * wx[None, :]
    core = w2d * np.exp(log_f + gauge) * jac
    return np.array([np.sum(core * fn) for fn in
                     (np.ones_like(h), z * np.ones_like(h), z * z * np.ones_like(h), h, h * h)])


_SQRT2 = np.sqrt(2.0)


def _sign_breakpoints(delta):
    # the probit transition has width sqrt(delta) around z = 0
    w = np.sqrt(delta)
    return (-TAIL * w, 0.0, TAIL * w) if delta > 0.0 else (0.0,)


def oracle_mid_moments(ch: Channel, A: float, B: float, V: float,
                       omega: float) -> ChannelMoments:
    """Reference moments of a mid-layer channel at scalar inputs."""
    sd_z = np.sqrt(V)
    z_lo, z_hi = omega - TAIL * sd_z, omega + TAIL * sd_z

    if isinstance(ch, SignWithNoise):
        # sum over h = +-1, 1-D quadrature in z for each weighted z-moment
        raw = {}
        for s in (+1.0, -1.0):
            tilt = np.exp(-0.5 * A + B * s)
            for k in range(3):
                raw[(s, k)] = tilt * _quad(
                    lambda z, s=s, k=k: z ** k * _out_prob(ch, s, z) * _norm_pdf(z, omega, V),
                    z_lo, z_hi, breakpoints=_sign_breakpoints(ch.delta))
        Z = raw[(1, 0)] + raw[(-1, 0)]
        Ez = (raw[(1, 1)] + raw[(-1, 1)]) / Z
        Ez2 = (raw[(1, 2)] + raw[(-1, 2)]) / Z
        Eh = (raw[(1, 0)] - raw[(-1, 0)]) / Z
        Eh2 = 1.0
    elif isinstance(ch, Awgn):
        lo = _awgn_mid_raw_moments(ch, A, B, V, omega, order=50)
        hi = _awgn_mid_raw_moments(ch, A, B, V, omega, order=80)
        scale = max(abs(hi[0]), 1e-300)
        if np.max(np.abs(hi - lo)) > 1e-10 * scale:
            raise OracleError("tensor quadrature did not converge")
        Z, zn, z2, hn, h2 = hi
        Ez, Ez2, Eh, Eh2 = zn / Z, z2 / Z, hn / Z, h2 / Z
    else:
        raise ValueError(f"unknown channel {ch!r}")

    g = (Ez - omega) / V
    dg = (Ez2 - Ez ** 2) / V ** 2 - 1.0 / V
    return ChannelMoments(g=g, dg=dg, hhat=Eh, sigma=Eh2 - Eh ** 2)


def oracle_first_layer(ch: Channel, y: float, V: float, omega: float):
    """Reference (g, dg) of the observation layer at scalar inputs."""
    sd_z = np.sqrt(V)
    z_lo, z_hi = omega - TAIL * sd_z, omega + TAIL * sd_z
    if isinstance(ch, Awgn):
        delta = max(ch.delta, 1e-12)
        like = lambda z: _norm_pdf(y, z, delta)
        w = TAIL * np.sqrt(delta)
        pts = (y - w, y, y + w)
    else:
        like = lambda z: _out_prob(ch, np.sign(y) if y != 0 else 1.0, z)
        pts = _sign_breakpoints(ch.delta)
    mom = [_quad(lambda z, k=k: z ** k * like(z) * _norm_pdf(z, omega, V), z_lo, z_hi,
                 breakpoints=pts)
           for k in range(3)]
    if mom[0] <= 0.0:
        raise OracleError("vanishing partition function in first-layer oracle")
    Ez = mom[1] / mom[0]
    Ez2 = mom[2] / mom[0]
    return (Ez - omega) / V, (Ez2 - Ez ** 2) / V ** 2 - 1.0 / V


def oracle_prior_moments(p: Prior, A: float, B: float):
    """Reference (hhat, sigma) of the prior layer at scalar inputs."""
    def tilted_gaussian_moments(var, weight):
        prec = 1.0 / var + A
        if prec <= 0.0:
            raise OracleError("tilted prior variance is not positive")
        sd = prec ** -0.5
        center = B / prec
        lo, hi = center - TAIL * max(sd, np.sqrt(var)), center + TAIL * max(sd, np.sqrt(var))
        return [weight * _quad(
            lambda h, k=k: h ** k * _norm_pdf(h, 0.0, var) * np.exp(-0.5 * A * h * h + B * h),
            lo, hi) for k in range(3)]

    if isinstance(p, Rademacher):
        raw = [sum(0.5 * s ** k * np.exp(-0.5 * A + B * s) for s in (1.0, -1.0))
               for k in range(3)]
    elif isinstance(p, GaussianPrior):
        raw = tilted_gaussian_moments(p.variance, 1.0)
    elif isinstance(p, GaussBernoulli):
        raw = tilted_gaussian_moments(1.0, p.rho)
        raw[0] += 1.0 - p.rho  # point mass at h = 0
    else:
        raise ValueError(f"unknown prior {p!r}")
    Eh = raw[1] / raw[0]
    Eh2 = raw[2] / raw[0]
    return Eh, Eh2 - Eh ** 2


# ---------------------------------------------------------------------------
# finite-difference cross-check path

def _oracle_mid_logz(ch: Channel, A, B, V, omega):
    sd_z = np.sqrt(V)
    z_lo, z_hi = omega - TAIL * sd_z, omega + TAIL * sd_z
    if isinstance(ch, SignWithNoise):
        Z = sum(np.exp(-0.5 * A + B * s) * _quad(
            lambda z, s=s: _out_prob(ch, s, z) * _norm_pdf(z, omega, V), z_lo, z_hi,
            breakpoints=_sign_breakpoints(ch.delta))
            for s in (1.0, -1.0))
    else:
        delta = max(ch.delta, 1e-12)

        def inner(z):
            h_lo, h_hi = _h_window(A, B, delta, z)
            return _quad(
                lambda h: _norm_pdf(h, z, delta) * np.exp(-0.5 * A * h * h + B * h),
                h_lo, h_hi) * _norm_pdf(z, omega, V)
        Z = quad(inner, z_lo, z_hi, **QUAD_OPTS)[0]
    return np.log(Z)


def _richardson_d1(f, x, h):
    def central(step):
        return (f(x + step) - f(x - step)) / (2.0 * step)
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def _richardson_d2(f, x, h):
    def central(step):
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / step ** 2
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def oracle_mid_moments_fd(ch: Channel, A: float, B: float, V: float,
                          omega: float, step: float = 1e-3) -> ChannelMoments:
    """Mid-layer moments via numerical differentiation of quadrature log Z.

    Second derivatives are limited to roughly quadrature_tolerance / step^2;
    use for qualitative cross-checks only.
    """
    fo = lambda w: _oracle_mid_logz(ch, A, B, V, w)
    fb = lambda b: _oracle_mid_logz(ch, A, b, V, omega)
    return ChannelMoments(
        g=_richardson_d1(fo, omega, step),
        dg=_richardson_d2(fo, omega, step),
        hhat=_richardson_d1(fb, B, step),
        sigma=_richardson_d2(fb, B, step),
    )
