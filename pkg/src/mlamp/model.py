"""Multi-layer generative model: specs, sampling, second-moment profile.

The model observes a signal x through L layers,

    y = channel_1(W1 . channel_2(W2 . ... channel_L(WL . x))),

where each channel applies Gaussian pre-noise of variance delta followed by
a deterministic map (identity or sign).  Layers are indexed 1..L from the
observation side inward; internally we use 0-based lists where index ``ell``
holds layer ``ell + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ConfigurationError(ValueError):
    """Invalid model or experiment configuration."""


# ---------------------------------------------------------------------------
# priors

@dataclass(frozen=True)
class GaussBernoulli:
    """Sparse prior rho * N(0, 1) + (1 - rho) * delta_0."""
    rho: float

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ConfigurationError(f"sparsity must be in (0, 1], got {self.rho}")

    def second_moment(self) -> float:
        return self.rho


@dataclass(frozen=True)
class Rademacher:
    """Binary prior, +1 or -1 with probability 1/2 each."""

    def second_moment(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GaussianPrior:
    """Zero-mean Gaussian prior."""
    variance: float = 1.0

    def __post_init__(self):
        if self.variance <= 0.0:
            raise ConfigurationError(f"variance must be > 0, got {self.variance}")

    def second_moment(self) -> float:
        return self.variance


Prior = Union[GaussBernoulli, Rademacher, GaussianPrior]


# ---------------------------------------------------------------------------
# channels

@dataclass(frozen=True)
class Awgn:
    """h = z + N(0, delta); identity map with additive Gaussian noise."""
    delta: float

    def __post_init__(self):
        if self.delta < 0.0:
            raise ConfigurationError(f"noise variance must be >= 0, got {self.delta}")


@dataclass(frozen=True)
class SignWithNoise:
    """h = sign(z + N(0, delta)); noiseless sign when delta = 0."""
    delta: float = 0.0

    def __post_init__(self):
        if self.delta < 0.0:
            raise ConfigurationError(f"noise variance must be >= 0, got {self.delta}")


Channel = Union[Awgn, SignWithNoise]


@dataclass(frozen=True)
class Layer:
    channel: Channel
    alpha: float  # n_{ell-1} / n_ell

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ConfigurationError(f"aspect ratio must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class NetworkSpec:
    """Layers ordered from the observation (layer 1) to the signal (layer L)."""
    layers: tuple[Layer, ...]
    prior: Prior
    n_signal: int

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ConfigurationError("need at least one layer")
        if self.n_signal < 1:
            raise ConfigurationError(f"signal dimension must be >= 1, got {self.n_signal}")
        for n in self.dims():
            if n < 1:
                raise ConfigurationError("derived layer dimension < 1; increase n or alpha")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def dims(self) -> list[int]:
        """[n_0, n_1, ..., n_L], derived right-to-left from n_signal.

        Realized alphas can differ from the requested ones by O(1/n) due
        to rounding.
        """
        n = [0] * (self.depth + 1)
        n[self.depth] = self.n_signal
        for ell in range(self.depth - 1, -1, -1):
            n[ell] = int(round(self.layers[ell].alpha * n[ell + 1]))
        return n


def second_moment_profile(spec: NetworkSpec) -> np.ndarray:
    """Second moments [rho_1, ..., rho_L] of the hidden layers (rho_L = prior).

    Propagated inward: rho_{ell-1} = E h^2 for h ~ P_out(.|z), z ~ N(0, rho_ell).
    """
    L = spec.depth
    rho = np.empty(L)
    rho[L - 1] = spec.prior.second_moment()
    for ell in range(L - 1, 0, -1):
        ch = spec.layers[ell].channel
        if isinstance(ch, Awgn):
            rho[ell - 1] = rho[ell] + ch.delta
        elif isinstance(ch, SignWithNoise):
            rho[ell - 1] = 1.0
        else:
            raise ConfigurationError(f"unknown channel {ch!r}")
    return rho


# ---------------------------------------------------------------------------
# instance sampling

@dataclass(frozen=True)
class ModelInstance:
    """One sampled realization; immutable, safe to share across workers.

    ``hiddens[k]`` is h^{(k+1)} for k = 0..L-2; the signal x plays the role
    of h^{(L)}.
    """
    spec: NetworkSpec
    matrices: tuple[np.ndarray, ...]
    x: np.ndarray
    hiddens: tuple[np.ndarray, ...]
    y: np.ndarray
    seed: int

    def hidden(self, layer: int) -> np.ndarray:
        """Ground-truth h^{(layer)} for layer = 1..L (layer L is the signal)."""
        if layer == self.spec.depth:
            return self.x
        return self.hiddens[layer - 1]


def _sample_prior(prior: Prior, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(prior, GaussBernoulli):
        support = rng.random(n) < prior.rho
        return np.where(support, rng.standard_normal(n), 0.0)
    if isinstance(prior, Rademacher):
        return rng.integers(0, 2, size=n) * 2.0 - 1.0
    if isinstance(prior, GaussianPrior):
        return rng.normal(0.0, np.sqrt(prior.variance), size=n)
    raise ConfigurationError(f"unknown prior {prior!r}")


def _apply_channel(ch: Channel, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # delta = 0 is sampled exactly noiseless; regularization is inference-only
    out = z if ch.delta == 0.0 else z + rng.normal(0.0, np.sqrt(ch.delta), size=z.shape)
    if isinstance(ch, SignWithNoise):
        out = np.where(out >= 0.0, 1.0, -1.0)
    return out


def sample_instance(spec: NetworkSpec, seed: int) -> ModelInstance:
    """Sample matrices, signal, hidden layers and observation.

    Bit-reproducible for fixed (spec, seed): one counter-based Philox stream
    per (signal | layer matrix | layer noise).
    """
    dims = spec.dims()
    L = spec.depth
    root = np.random.SeedSequence(seed)
    streams = root.spawn(2 * L + 1)
    rng_x = np.random.Generator(np.random.Philox(streams[0]))

    x = _sample_prior(spec.prior, dims[L], rng_x)
    matrices: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    hiddens: list[np.ndarray] = []

    current = x
    for ell in range(L - 1, -1, -1):  # layer ell+1, inward to outward
        rng_w = np.random.Generator(np.random.Philox(streams[1 + 2 * ell]))
        rng_noise = np.random.Generator(np.random.Philox(streams[2 + 2 * ell]))
        n_out, n_in = dims[ell], dims[ell + 1]
        W = rng_w.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_out, n_in))
        matrices[ell] = W
        current = _apply_channel(spec.layers[ell].channel, W @ current, rng_noise)
        if ell > 0:
            hiddens.append(current)
    hiddens.reverse()  # hiddens[k] = h^{(k+1)}

    return ModelInstance(
        spec=spec,
        matrices=tuple(matrices),
        x=x,
        hiddens=tuple(hiddens),
        y=current,
        seed=seed,
    )
