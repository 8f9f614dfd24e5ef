"""Multi-layer AMP on a concrete sampled instance.

Per sweep, for each layer from the observation inward: update the factor-side
(V, omega), the output function (g, dg), then the variable-side (A, B); after
the sweep, refresh all posterior means/variances (hhat, sigma).  The omega
update carries the Onsager correction -V g(t-1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import components as cmp
from .model import (Awgn, ConfigurationError, ModelInstance, NetworkSpec,
                    Layer, Prior, SignWithNoise)


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 500
    damping: float = 0.0          # fraction of the old value retained
    tol: float = 1e-8             # on mean squared change of the signal estimate
    record_trace: bool = False
    keep_iterates: bool = False   # store per-sweep copies of the signal estimate
    scalar_variance: bool = False # replace [W^2] sums by column averages

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ConfigurationError("damping must be in [0, 1)")
        if self.tol <= 0.0:
            raise ConfigurationError("tol must be > 0")


@dataclass
class TraceRow:
    t: int
    mse: np.ndarray      # per-layer MSE vs ground truth, layer 1..L
    delta: float         # mean squared change of the signal estimate


@dataclass
class SolverResult:
    xhat: np.ndarray
    hhat: list[np.ndarray]          # posterior means, layer 1..L (last is xhat)
    sigma: list[np.ndarray]
    converged: bool
    diverged: bool
    iterations: int
    trace: list[TraceRow] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)


def instance_mse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared difference between an estimate and the ground truth."""
    estimate = np.asarray(estimate)
    truth = np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.mean((estimate - truth) ** 2))


def _damp(new, old, beta):
    if beta == 0.0 or old is None:
        return new
    return (1.0 - beta) * new + beta * old


def _run_once(inst: ModelInstance, cfg: SolverConfig, damping: float) -> SolverResult:
    spec = inst.spec
    L = spec.depth
    dims = spec.dims()
    W = inst.matrices
    if cfg.scalar_variance:
        W2 = [np.full_like(w, 1.0 / w.shape[1]) for w in W]
    else:
        W2 = [w * w for w in W]

    # 0-based index ell holds layer ell+1
    hhat = [np.zeros(dims[ell + 1]) for ell in range(L)]
    sigma = [np.ones(dims[ell + 1]) for ell in range(L)]
    g = [np.zeros(dims[ell]) for ell in range(L)]
    V = [None] * L
    omega = [None] * L
    A = [None] * L
    B = [None] * L

    trace: list[TraceRow] = []
    iterates: list[np.ndarray] = []
    converged = diverged = False
    t = 0

    for t in range(1, cfg.max_iter + 1):
        x_prev = hhat[L - 1].copy()
        moments = [None] * L  # channel moments cached for the hhat refresh
        try:
            for ell in range(L):
                V_new = _damp(W2[ell] @ sigma[ell], V[ell], damping)
                omega_new = _damp(W[ell] @ hhat[ell] - V_new * g[ell],
                                  omega[ell], damping)
                V[ell], omega[ell] = V_new, omega_new
                fs = cmp.FactorSideInput(V=V_new, omega=omega_new)
                if ell == 0:
                    g_new, dg_new = cmp.first_layer_g(spec.layers[0].channel,
                                                      inst.y, fs)
                else:
                    m = cmp.mid_layer_moments(
                        spec.layers[ell].channel,
                        cmp.VariableSideInput(A=A[ell - 1], B=B[ell - 1]), fs)
                    moments[ell] = m
                    g_new, dg_new = m.g, m.dg
                g[ell] = g_new
                A_new = _damp(-(W2[ell].T @ dg_new), A[ell], damping)
                B_new = _damp(W[ell].T @ g_new + A_new * hhat[ell],
                              B[ell], damping)
                A[ell], B[ell] = A_new, B_new

            for ell in range(L):
                if ell < L - 1:
                    # same partition function the layer-(ell+2) g update used
                    m = moments[ell + 1]
                    hhat[ell], sigma[ell] = m.hhat, m.sigma
                else:
                    hhat[ell], sigma[ell] = cmp.prior_moments(
                        spec.prior, cmp.VariableSideInput(A=A[ell], B=B[ell]))
        except (cmp.DomainError, cmp.NumericError):
            diverged = True
            break

        if not all(np.all(np.isfinite(v)) for v in (*hhat, *g, *A, *B)):
            diverged = True
            break

        delta = float(np.mean((hhat[L - 1] - x_prev) ** 2))
        if cfg.record_trace:
            mse = np.array([instance_mse(hhat[ell], inst.hidden(ell + 1))
                            for ell in range(L)])
            trace.append(TraceRow(t=t, mse=mse, delta=delta))
        if cfg.keep_iterates:
            iterates.append(hhat[L - 1].copy())
        if delta < cfg.tol:
            converged = True
            break

    return SolverResult(
        xhat=hhat[L - 1], hhat=hhat, sigma=sigma,
        converged=converged, diverged=diverged, iterations=t,
        trace=trace, iterates=iterates,
    )


def run_mlamp(inst: ModelInstance, cfg: SolverConfig) -> SolverResult:
    """Run ML-AMP; retry once with damping >= 0.5 if the undamped sweep
    diverges or oscillates without meeting the convergence threshold.
    """
    result = _run_once(inst, cfg, cfg.damping)
    if (result.diverged or not result.converged) and cfg.damping < 0.5:
        retry = _run_once(inst, cfg, 0.5)
        if retry.converged or result.diverged:
            result = retry
    return result


def _single_layer_instance(W, y, layer: Layer, prior: Prior, truth,
                           seed: int) -> ModelInstance:
    n_out, n_in = W.shape
    spec = NetworkSpec(layers=(Layer(channel=layer.channel, alpha=n_out / n_in),),
                       prior=prior, n_signal=n_in)
    return ModelInstance(spec=spec, matrices=(W,), x=np.asarray(truth),
                         hiddens=(), y=np.asarray(y), seed=seed)


def run_layerwise_baseline(inst: ModelInstance, cfg: SolverConfig,
                           stage_priors: list[Prior]) -> SolverResult:
    """Two-stage decoding of a two-layer model with plain single-layer AMP.

    Stage 1 estimates the hidden layer from y under an i.i.d. surrogate prior;
    its hard-thresholded estimate is fed as a pseudo-observation to a second
    single-layer AMP run for the signal.
    """
    spec = inst.spec
    if spec.depth != 2:
        raise ConfigurationError("layer-wise baseline is defined for L = 2")
    if len(stage_priors) < 1:
        raise ConfigurationError("need a surrogate prior for the hidden layer")

    stage1 = run_mlamp(
        _single_layer_instance(inst.matrices[0], inst.y, spec.layers[0],
                               stage_priors[0], inst.hidden(1), inst.seed), cfg)

    pseudo = stage1.xhat
    if isinstance(spec.layers[1].channel, SignWithNoise):
        pseudo = np.where(pseudo >= 0.0, 1.0, -1.0)
    stage2 = run_mlamp(
        _single_layer_instance(inst.matrices[1], pseudo, spec.layers[1],
                               spec.prior, inst.x, inst.seed), cfg)

    return SolverResult(
        xhat=stage2.xhat,
        hhat=[stage1.xhat, stage2.xhat],
        sigma=[stage1.sigma[0], stage2.sigma[0]],
        converged=stage1.converged and stage2.converged,
        diverged=stage1.diverged or stage2.diverged,
        iterations=stage1.iterations + stage2.iterations,
        trace=stage1.trace + stage2.trace,
    )
