"""Closed-form channel/prior moments against the quadrature oracle and
against their own derivative structure."""

import numpy as np
import pytest

from mlamp import components as cmp
from mlamp import oracle
from mlamp.model import (Awgn, GaussBernoulli, GaussianPrior, Rademacher,
                         SignWithNoise)


def vs(A, B):
    return cmp.VariableSideInput(A=A, B=B)


def fs(V, omega):
    return cmp.FactorSideInput(V=V, omega=omega)


# ---------------------------------------------------------------------------
# frozen oracle reference values (computed once with mlamp.oracle and pinned)

class TestFrozenValues:
    def test_sign_mid(self):
        mom = cmp.mid_layer_moments(SignWithNoise(0.0), vs(0.5, 1.0),
                                    fs(1.0, 0.5))
        assert mom.g == pytest.approx(0.41518111697876525, abs=1e-12)
        assert mom.dg == pytest.approx(-0.37996591838515414, abs=1e-12)
        assert mom.hhat == pytest.approx(0.8861021195378745, abs=1e-12)
        assert mom.sigma == pytest.approx(0.21482303375048628, abs=1e-12)

    def test_gauss_bernoulli_prior(self):
        hhat, sigma = cmp.prior_moments(GaussBernoulli(0.3), vs(1.0, 1.0))
        assert hhat == pytest.approx(0.14005949566678758, abs=1e-12)
        assert sigma == pytest.approx(0.19047258117374646, abs=1e-12)

    def test_awgn_mid_hand_computed(self):
        # S = 1 + A (V + delta) = 2; g = (B - A omega)/S etc.
        mom = cmp.mid_layer_moments(Awgn(0.5), vs(2.0, 1.0), fs(0.0, 3.0))
        assert mom.g == pytest.approx((1.0 - 2.0 * 3.0) / 2.0)
        assert mom.dg == pytest.approx(-1.0)
        assert mom.hhat == pytest.approx((3.0 + 0.5) / 2.0)
        assert mom.sigma == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# agreement with the quadrature oracle on random draws

MID_CHANNELS = [Awgn(0.5), Awgn(1e-8), SignWithNoise(0.0), SignWithNoise(0.1)]
PRIORS = [GaussBernoulli(0.3), Rademacher(), GaussianPrior(1.0),
          GaussianPrior(0.25)]


def draw_params(rng):
    return (rng.uniform(0.01, 2.0), rng.normal(0.0, 1.5),
            rng.uniform(0.05, 2.0), rng.normal(0.0, 1.5))


@pytest.mark.parametrize("ch", MID_CHANNELS, ids=repr)
def test_mid_layer_vs_oracle(ch):
    rng = np.random.Generator(np.random.Philox(1))
    for _ in range(40):
        A, B, V, omega = draw_params(rng)
        mom = cmp.mid_layer_moments(ch, vs(A, B), fs(V, omega))
        ref = oracle.oracle_mid_moments(ch, A, B, V, omega)
        for got, want in zip(mom.__dict__.values(), ref.__dict__.values()):
            assert got == pytest.approx(want, abs=1e-8)


@pytest.mark.parametrize("ch", MID_CHANNELS, ids=repr)
def test_first_layer_vs_oracle(ch):
    rng = np.random.Generator(np.random.Philox(2))
    for _ in range(40):
        _, _, V, omega = draw_params(rng)
        y = (1.0 if rng.random() < 0.5 else -1.0) \
            if isinstance(ch, SignWithNoise) else rng.normal(0.0, 1.5)
        g, dg = cmp.first_layer_g(ch, y, fs(V, omega))
        rg, rdg = oracle.oracle_first_layer(ch, y, V, omega)
        assert g == pytest.approx(rg, abs=1e-8)
        assert dg == pytest.approx(rdg, abs=1e-8)


@pytest.mark.parametrize("p", PRIORS, ids=repr)
def test_prior_vs_oracle(p):
    rng = np.random.Generator(np.random.Philox(3))
    for _ in range(40):
        A, B, _, _ = draw_params(rng)
        hhat, sigma = cmp.prior_moments(p, vs(A, B))
        rh, rs = oracle.oracle_prior_moments(p, A, B)
        assert hhat == pytest.approx(rh, abs=1e-8)
        assert sigma == pytest.approx(rs, abs=1e-8)


# ---------------------------------------------------------------------------
# derivative identities: the four moments come from a single log Z

def richardson(f, x, h=1e-4):
    def central(step):
        return (f(x + step) - f(x - step)) / (2.0 * step)
    return (4.0 * central(h / 2.0) - central(h)) / 3.0


@pytest.mark.parametrize("ch", MID_CHANNELS, ids=repr)
def test_mid_layer_derivative_identities(ch):
    rng = np.random.Generator(np.random.Philox(4))
    for _ in range(25):
        A, B, V, omega = draw_params(rng)
        mom = cmp.mid_layer_moments(ch, vs(A, B), fs(V, omega))
        g_fd = richardson(lambda w: cmp.mid_layer_logz(ch, A, B, V, w), omega)
        h_fd = richardson(lambda b: cmp.mid_layer_logz(ch, A, b, V, omega), B)
        dg_fd = richardson(
            lambda w: cmp.mid_layer_moments(ch, vs(A, B), fs(V, w)).g, omega)
        s_fd = richardson(
            lambda b: cmp.mid_layer_moments(ch, vs(A, b), fs(V, omega)).hhat, B)
        scale = lambda x: max(abs(x), 1e-3)
        assert abs(mom.g - g_fd) / scale(mom.g) < 1e-6
        assert abs(mom.hhat - h_fd) / scale(mom.hhat) < 1e-6
        assert abs(mom.dg - dg_fd) / scale(mom.dg) < 1e-6
        assert abs(mom.sigma - s_fd) / scale(mom.sigma) < 1e-6


@pytest.mark.parametrize("ch", MID_CHANNELS, ids=repr)
def test_first_layer_derivative_identities(ch):
    rng = np.random.Generator(np.random.Philox(5))
    for _ in range(25):
        _, _, V, omega = draw_params(rng)
        y = 1.0 if isinstance(ch, SignWithNoise) else rng.normal(0.0, 1.5)
        g, dg = cmp.first_layer_g(ch, y, fs(V, omega))
        g_fd = richardson(lambda w: cmp.first_layer_logz(ch, y, V, w), omega)
        dg_fd = richardson(
            lambda w: cmp.first_layer_g(ch, y, fs(V, w))[0], omega)
        scale = lambda x: max(abs(x), 1e-3)
        assert abs(g - g_fd) / scale(g) < 1e-6
        assert abs(dg - dg_fd) / scale(dg) < 1e-6


@pytest.mark.parametrize("p", PRIORS, ids=repr)
def test_prior_derivative_identities(p):
    rng = np.random.Generator(np.random.Philox(6))
    for _ in range(25):
        A, B, _, _ = draw_params(rng)
        hhat, sigma = cmp.prior_moments(p, vs(A, B))
        h_fd = richardson(lambda b: cmp.prior_logz(p, A, b), B)
        s_fd = richardson(lambda b: cmp.prior_moments(p, vs(A, b))[0], B)
        scale = lambda x: max(abs(x), 1e-3)
        assert abs(hhat - h_fd) / scale(hhat) < 1e-6
        assert abs(sigma - s_fd) / scale(sigma) < 1e-6


# ---------------------------------------------------------------------------
# numerics and interface behavior

class TestNumerics:
    def test_gauss_hazard_matches_naive(self):
        from scipy.stats import norm
        c = np.linspace(-8.0, 8.0, 33)
        naive = norm.pdf(c) / norm.cdf(c)
        assert np.allclose(cmp.gauss_hazard(c), naive, rtol=1e-12)

    def test_gauss_hazard_deep_tails(self):
        # far left: phi/Phi -> -c; far right: -> phi(c) (essentially 0)
        assert cmp.gauss_hazard(-50.0) == pytest.approx(50.0, rel=1e-3)
        assert cmp.gauss_hazard(300.0) == 0.0
        assert np.all(np.isfinite(cmp.gauss_hazard(np.array([-500.0, 500.0]))))

    def test_sign_mid_extreme_field_saturates(self):
        mom = cmp.mid_layer_moments(SignWithNoise(0.0), vs(0.5, 400.0),
                                    fs(1.0, 0.0))
        assert mom.hhat == pytest.approx(1.0)
        assert mom.sigma == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(mom.g)

    def test_broadcasting(self):
        A = np.ones((3, 1))
        B = np.linspace(-1.0, 1.0, 4)[None, :]
        mom = cmp.mid_layer_moments(Awgn(0.1), vs(A, B), fs(1.0, 0.0))
        assert mom.g.shape == (3, 4)
        omega = np.linspace(-1.0, 1.0, 3)[:, None]
        mom = cmp.mid_layer_moments(SignWithNoise(0.0), vs(1.0, B),
                                    fs(1.0, omega))
        assert mom.hhat.shape == (3, 4)

    def test_awgn_v_floor(self):
        # V = 0 with delta = 0 is regularized, not a division by zero
        mom = cmp.mid_layer_moments(Awgn(0.0), vs(1.0, 0.5), fs(0.0, 0.2))
        assert np.all(np.isfinite(np.array(
            [mom.g, mom.dg, mom.hhat, mom.sigma])))

    def test_negative_precision_domain_error(self):
        with pytest.raises(cmp.DomainError):
            cmp.mid_layer_moments(Awgn(0.0), vs(-2e12, 0.0), fs(1.0, 0.0))
        with pytest.raises(cmp.DomainError):
            cmp.prior_moments(GaussianPrior(1.0), vs(-2.0, 0.0))
        with pytest.raises(cmp.DomainError):
            cmp.prior_moments(GaussBernoulli(0.3), vs(-2.0, 0.0))

    def test_nan_input_numeric_error(self):
        with pytest.raises(cmp.NumericError):
            cmp.mid_layer_moments(Awgn(0.1), vs(np.nan, 0.0), fs(1.0, 0.0))
        with pytest.raises(cmp.NumericError):
            cmp.first_layer_g(Awgn(0.1), np.nan, fs(1.0, 0.0))

    def test_dense_rho_one_prior(self):
        # rho = 1 reduces Gauss-Bernoulli to a standard Gaussian prior
        a, b = cmp.prior_moments(GaussBernoulli(1.0), vs(0.7, 0.3))
        c, d = cmp.prior_moments(GaussianPrior(1.0), vs(0.7, 0.3))
        assert a == pytest.approx(c)
        assert b == pytest.approx(d)

    def test_rademacher_variance_complement(self):
        hhat, sigma = cmp.prior_moments(Rademacher(), vs(0.3, 0.7))
        assert sigma == pytest.approx(1.0 - hhat ** 2)
