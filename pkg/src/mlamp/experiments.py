"""Experiment harness: YAML configs, model presets, sweeps and CSV output.

Three named presets cover the reference two-layer models:

    slr2        y = W1 (W2 x + N(0, delta2)) + N(0, delta1), sparse x
    perceptron2 y = sgn(W1 W2 x), binary x
    decoder2    y = W1 sgn(W2 x + N(0, delta2)) + N(0, delta1), binary x

slr2 and perceptron2 are parametrized by (alpha, alpha2) with
alpha = alpha1 * alpha2 (the axes of the reference phase diagrams);
decoder2 by (alpha1, alpha2) directly.

CSV contracts (comma separated, header row, '.' decimal, NA for missing):

    instance     seed, algorithm, kind, t, layer, mse, delta, converged,
                 iterations
    se           init, t, layer, m, mhat, mse, converged
    sweep        one column per axis, then phase, amp_mse, mmse, se_mse_last,
                 phi_uninformed, phi_informed, converged_uninformed,
                 converged_informed, instance_mse, seed, error, runtime_s
    free-energy  m_signal, phi
"""

from __future__ import annotations

import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .freeenergy import locate_m_it
from .model import (Awgn, ConfigurationError, GaussBernoulli, GaussianPrior,
                    NetworkSpec, Layer, Prior, Rademacher, SignWithNoise,
                    sample_instance)
from .se import Init, QuadratureConfig, se_fixed_point, se_mse
from .solver import (SolverConfig, instance_mse, run_layerwise_baseline,
                     run_mlamp)

NA = "NA"

SWEEP_PARAMS = ("alpha", "alpha1", "alpha2", "delta1", "delta2", "rho")


# ---------------------------------------------------------------------------
# presets and model building

_PRESET_DEFAULTS = {
    "slr2": dict(rho=0.3, delta1=1e-8, delta2=0.0, alpha=0.8, alpha2=1.0,
                 n_signal=2000),
    "perceptron2": dict(delta1=0.0, delta2=0.0, alpha=3.0, alpha2=1.0,
                        n_signal=2000),
    "decoder2": dict(delta1=1e-8, delta2=1e-8, alpha1=0.6, alpha2=2.0,
                     n_signal=2000),
}


def preset_params(name: str) -> dict:
    if name not in _PRESET_DEFAULTS:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {sorted(_PRESET_DEFAULTS)}")
    return dict(_PRESET_DEFAULTS[name])


def _alpha1_of(params: dict) -> float:
    if "alpha1" in params and "alpha" in params:
        raise ConfigurationError("give either alpha or alpha1, not both")
    if "alpha1" in params:
        return float(params["alpha1"])
    return float(params["alpha"]) / float(params["alpha2"])


def build_preset_spec(name: str, params: dict) -> NetworkSpec:
    p = preset_params(name)
    unknown = set(params) - set(p) - {"alpha", "alpha1"}
    if unknown:
        raise ConfigurationError(f"unknown parameters for preset {name}: "
                                 f"{sorted(unknown)}")
    if "alpha" in params or "alpha1" in params:
        # an explicit aspect ratio replaces the preset's default one
        p.pop("alpha", None)
        p.pop("alpha1", None)
    p.update(params)
    a1 = _alpha1_of(p)
    a2 = float(p["alpha2"])
    n = int(p["n_signal"])
    d1, d2 = float(p["delta1"]), float(p["delta2"])
    if name == "slr2":
        return NetworkSpec(layers=(Layer(Awgn(d1), a1), Layer(Awgn(d2), a2)),
                           prior=GaussBernoulli(float(p["rho"])), n_signal=n)
    if name == "perceptron2":
        return NetworkSpec(layers=(Layer(SignWithNoise(d1), a1),
                                   Layer(Awgn(d2), a2)),
                           prior=Rademacher(), n_signal=n)
    return NetworkSpec(layers=(Layer(Awgn(d1), a1),
                               Layer(SignWithNoise(d2), a2)),
                       prior=Rademacher(), n_signal=n)


_PRIOR_KINDS = {"gauss_bernoulli", "rademacher", "gaussian"}
_CHANNEL_KINDS = {"awgn", "sign"}


def _build_prior(d: dict) -> Prior:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "gauss_bernoulli":
        p = GaussBernoulli(rho=float(d.pop("rho")))
    elif kind == "rademacher":
        p = Rademacher()
    elif kind == "gaussian":
        p = GaussianPrior(variance=float(d.pop("variance", 1.0)))
    else:
        raise ConfigurationError(
            f"prior kind must be one of {sorted(_PRIOR_KINDS)}, got {kind!r}")
    if d:
        raise ConfigurationError(f"unknown prior keys {sorted(d)}")
    return p


def _build_layer(d: dict) -> Layer:
    d = dict(d)
    kind = d.pop("channel", None)
    delta = float(d.pop("delta", 0.0))
    alpha = float(d.pop("alpha"))
    if d:
        raise ConfigurationError(f"unknown layer keys {sorted(d)}")
    if kind == "awgn":
        return Layer(Awgn(delta), alpha)
    if kind == "sign":
        return Layer(SignWithNoise(delta), alpha)
    raise ConfigurationError(
        f"channel must be one of {sorted(_CHANNEL_KINDS)}, got {kind!r}")


def build_spec(model: dict, overrides: dict | None = None) -> NetworkSpec:
    """NetworkSpec from a config 'model' block, preset or explicit, with
    optional sweep-parameter overrides (alpha/alpha1/alpha2/delta1/delta2/rho).
    """
    model = dict(model)
    overrides = dict(overrides or {})
    preset = model.pop("preset", None)
    if preset is not None:
        params = model
        if "alpha1" in overrides:
            params.pop("alpha", None)
        if "alpha" in overrides:
            params.pop("alpha1", None)
        params.update(overrides)
        return build_preset_spec(preset, params)

    try:
        prior = _build_prior(model.pop("prior"))
        layers = [_build_layer(x) for x in model.pop("layers")]
        n = int(model.pop("n_signal"))
    except KeyError as e:
        raise ConfigurationError(f"model block missing key {e}") from None
    if model:
        raise ConfigurationError(f"unknown model keys {sorted(model)}")
    if overrides:
        if "alpha" in overrides:
            raise ConfigurationError(
                "total-alpha sweeps require a preset model")
        if len(layers) != 2 and set(overrides) - {"rho"}:
            raise ConfigurationError(
                "alpha/delta sweeps on explicit models require L = 2")
        for key, val in overrides.items():
            val = float(val)
            if key == "rho":
                if not isinstance(prior, GaussBernoulli):
                    raise ConfigurationError("rho sweep needs a sparse prior")
                prior = GaussBernoulli(val)
            elif key in ("alpha1", "alpha2"):
                i = int(key[-1]) - 1
                layers[i] = replace(layers[i], alpha=val)
            elif key in ("delta1", "delta2"):
                i = int(key[-1]) - 1
                layers[i] = replace(layers[i],
                                    channel=replace(layers[i].channel,
                                                    delta=val))
            else:
                raise ConfigurationError(f"unknown sweep parameter {key!r}")
    return NetworkSpec(layers=tuple(layers), prior=prior, n_signal=n)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class Axis:
    param: str
    lo: float
    hi: float
    steps: int

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigurationError(
                f"sweep parameter must be one of {SWEEP_PARAMS}, "
                f"got {self.param!r}")
        if self.steps < 1:
            raise ConfigurationError("axis needs at least one step")

    def values(self) -> np.ndarray:
        if self.steps == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.steps)


@dataclass
class ExperimentConfig:
    model: dict
    solver: SolverConfig = field(default_factory=SolverConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    se_max_iter: int = 1000
    se_tol: float = 1e-10
    mse_threshold: float | None = None
    seeds: tuple[int, ...] = (0,)
    axes: tuple[Axis, ...] = ()
    instance_stride: int = 0       # sweep: run one instance every N cells
    baseline: bool = False         # instance: also run the two-stage baseline
    fe_points: int = 41
    fe_relax_iters: int = 200
    output: str | None = None
    threads: int = 1
    timestamp: bool = True

    def spec(self, overrides: dict | None = None) -> NetworkSpec:
        return build_spec(self.model, overrides)


def _take(d: dict, block: str, allowed: dict) -> dict:
    """Pop a sub-dict and check its keys against allowed (name -> cast)."""
    sub = d.pop(block, None) or {}
    if not isinstance(sub, dict):
        raise ConfigurationError(f"config block {block!r} must be a mapping")
    unknown = set(sub) - set(allowed)
    if unknown:
        raise ConfigurationError(
            f"unknown keys in {block!r}: {sorted(unknown)}")
    return {k: allowed[k](v) for k, v in sub.items()}


def parse_config(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    model = raw.pop("model", None)
    if not isinstance(model, dict):
        raise ConfigurationError("config needs a 'model' mapping")

    solver_kw = _take(raw, "solver", dict(
        max_iter=int, damping=float, tol=float, scalar_variance=bool))
    se_kw = _take(raw, "se", dict(
        nodes_per_dim=int, mc_fallback_samples=int, mc_seed=int,
        max_iter=int, tol=float, mse_threshold=float))
    sweep_kw = _take(raw, "sweep", dict(axes=list, instance_stride=int))
    inst_kw = _take(raw, "instance", dict(baseline=bool))
    fe_kw = _take(raw, "free_energy", dict(points=int, relax_iters=int))
    seeds = raw.pop("seeds", [0])
    output = raw.pop("output", None)
    if raw:
        raise ConfigurationError(f"unknown config keys {sorted(raw)}")

    axes = []
    for a in sweep_kw.get("axes", []):
        a = dict(a)
        try:
            axes.append(Axis(param=str(a.pop("param")),
                             lo=float(a.pop("min")), hi=float(a.pop("max")),
                             steps=int(a.pop("steps"))))
        except KeyError as e:
            raise ConfigurationError(f"sweep axis missing key {e}") from None
        if a:
            raise ConfigurationError(f"unknown axis keys {sorted(a)}")

    se_max_iter = se_kw.pop("max_iter", 1000)
    se_tol = se_kw.pop("tol", 1e-10)
    mse_threshold = se_kw.pop("mse_threshold", None)
    return ExperimentConfig(
        model=model,
        solver=SolverConfig(**solver_kw),
        quadrature=QuadratureConfig(**se_kw),
        se_max_iter=se_max_iter, se_tol=se_tol, mse_threshold=mse_threshold,
        seeds=tuple(int(s) for s in seeds),
        axes=tuple(axes),
        instance_stride=sweep_kw.get("instance_stride", 0),
        baseline=inst_kw.get("baseline", False),
        fe_points=fe_kw.get("points", 41),
        fe_relax_iters=fe_kw.get("relax_iters", 200),
        output=output,
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return parse_config(raw)


# ---------------------------------------------------------------------------
# CSV output

def _fmt(x) -> str:
    if x is None:
        return NA
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: str, columns: list[str], rows: list[dict],
              meta: list[str] = (), timestamp: bool = True) -> None:
    lines = [f"# {m}" for m in meta]
    if timestamp:
        lines.append(f"# generated: {time.strftime('%Y-%m-%dT%H:%M:%S')}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands (each returns (columns, rows, meta))

def cmd_instance(cfg: ExperimentConfig):
    spec = cfg.spec()
    solver = replace(cfg.solver, record_trace=True)
    rows = []
    for seed in cfg.seeds:
        inst = sample_instance(spec, seed)
        runs = [("mlamp", run_mlamp(inst, solver))]
        if cfg.baseline:
            if spec.depth != 2:
                raise ConfigurationError("baseline needs a two-layer model")
            surrogate = (Rademacher()
                         if isinstance(spec.layers[1].channel, SignWithNoise)
                         else GaussianPrior(1.0))
            runs.append(("baseline",
                         run_layerwise_baseline(inst, solver, [surrogate])))
        for name, res in runs:
            for tr in res.trace:
                for ell, mse in enumerate(tr.mse):
                    rows.append(dict(seed=seed, algorithm=name, kind="trace",
                                     t=tr.t, layer=ell + 1, mse=mse,
                                     delta=tr.delta))
            rows.append(dict(seed=seed, algorithm=name, kind="summary",
                             mse=instance_mse(res.xhat, inst.x),
                             converged=res.converged,
                             iterations=res.iterations))
    columns = ["seed", "algorithm", "kind", "t", "layer", "mse", "delta",
               "converged", "iterations"]
    return columns, rows, ["mlamp instance"]


def cmd_se(cfg: ExperimentConfig):
    spec = cfg.spec()
    rows = []
    for init in (Init.UNINFORMED, Init.INFORMED):
        res = se_fixed_point(spec, init, cfg.quadrature,
                             max_iter=cfg.se_max_iter, tol=cfg.se_tol,
                             record_trajectory=True)
        for p in res.trajectory:
            mse = se_mse(p)
            for ell in range(spec.depth):
                rows.append(dict(init=init.value, t=p.t, layer=ell + 1,
                                 m=p.m[ell], mhat=p.mhat[ell], mse=mse[ell],
                                 converged=res.converged))
    return (["init", "t", "layer", "m", "mhat", "mse", "converged"],
            rows, ["mlamp se"])


def _sweep_cell(args):
    (model, overrides, q, se_max_iter, se_tol, mse_threshold,
     want_instance, solver, seed) = args
    t0 = time.perf_counter()
    row = dict(overrides)
    try:
        spec = build_spec(model, overrides)
        rep = locate_m_it(spec, q, mse_threshold=mse_threshold,
                          max_iter=se_max_iter, tol=se_tol)
        row.update(phase=rep.phase.value, amp_mse=rep.amp_mse, mmse=rep.mmse,
                   se_mse_last=rep.amp_mse,
                   phi_uninformed=rep.phi_uninformed,
                   phi_informed=rep.phi_informed,
                   converged_uninformed=rep.converged_uninformed,
                   converged_informed=rep.converged_informed)
        if want_instance:
            inst = sample_instance(spec, seed)
            res = run_mlamp(inst, solver)
            row.update(instance_mse=instance_mse(res.xhat, inst.x), seed=seed)
    except (ConfigurationError, ArithmeticError, ValueError) as e:
        row.setdefault("phase", NA)
        row["error"] = type(e).__name__
    row["runtime_s"] = time.perf_counter() - t0
    return row


def sweep_grid(axes: tuple[Axis, ...]):
    """Deterministic grid order: first axis outermost."""
    values = [axis.values() for axis in axes]
    for combo in itertools.product(*values):
        yield {axis.param: float(v) for axis, v in zip(axes, combo)}


def cmd_sweep(cfg: ExperimentConfig):
    if not cfg.axes:
        raise ConfigurationError("sweep needs at least one axis")
    cells = list(sweep_grid(cfg.axes))
    seed = cfg.seeds[0] if cfg.seeds else 0
    tasks = [
        (cfg.model, overrides, cfg.quadrature, cfg.se_max_iter, cfg.se_tol,
         cfg.mse_threshold,
         cfg.instance_stride > 0 and i % cfg.instance_stride == 0,
         cfg.solver, seed)
        for i, overrides in enumerate(cells)
    ]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(_sweep_cell, tasks, chunksize=1))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    if not cfg.timestamp:
        # reproducibility mode: wall-clock noise is suppressed with the
        # timestamp so identical configs give byte-identical files
        for row in rows:
            row["runtime_s"] = None
    columns = ([axis.param for axis in cfg.axes]
               + ["phase", "amp_mse", "mmse", "se_mse_last",
                  "phi_uninformed", "phi_informed", "converged_uninformed",
                  "converged_informed", "instance_mse", "seed", "error",
                  "runtime_s"])
    meta = ["mlamp sweep",
            "grid: " + "; ".join(f"{a.param} in [{a.lo}, {a.hi}] "
                                 f"steps={a.steps}" for a in cfg.axes)]
    return columns, rows, meta


def cmd_free_energy(cfg: ExperimentConfig):
    from .freeenergy import phi_scan
    spec = cfg.spec()
    pairs = phi_scan(spec, cfg.quadrature, n_points=cfg.fe_points,
                     relax_iters=cfg.fe_relax_iters)
    rows = [dict(m_signal=m, phi=phi) for m, phi in pairs]
    return ["m_signal", "phi"], rows, ["mlamp free-energy scan"]


def cmd_selftest(n_draws: int = 50, seed: int = 0):
    """Closed forms vs the quadrature oracle on random parameter draws.

    Returns (ok, report_lines).
    """
    from . import components as cmp
    from . import oracle
    rng = np.random.Generator(np.random.Philox(seed))
    lines = []
    ok = True

    def check(name, got, want, tol=1e-8):
        nonlocal ok
        err = float(np.max(np.abs(np.asarray(got) - np.asarray(want))))
        good = err < tol
        ok = ok and good
        lines.append(f"{'PASS' if good else 'FAIL'} {name}: max err {err:.3g}")

    for ch in (Awgn(0.5), Awgn(1e-8), SignWithNoise(0.0), SignWithNoise(0.1)):
        errs = []
        for _ in range(n_draws):
            A = rng.uniform(0.01, 2.0)
            B = rng.normal(0.0, 1.5)
            V = rng.uniform(0.05, 2.0)
            omega = rng.normal(0.0, 1.5)
            mom = cmp.mid_layer_moments(
                ch, cmp.VariableSideInput(A=A, B=B),
                cmp.FactorSideInput(V=V, omega=omega))
            ref = oracle.oracle_mid_moments(ch, A, B, V, omega)
            errs.append([mom.g - ref.g, mom.dg - ref.dg,
                         mom.hhat - ref.hhat, mom.sigma - ref.sigma])
        check(f"mid {ch!r}", errs, np.zeros_like(errs))
    for p in (GaussBernoulli(0.3), Rademacher(), GaussianPrior(1.0)):
        errs = []
        for _ in range(n_draws):
            A = rng.uniform(0.01, 2.0)
            B = rng.normal(0.0, 1.5)
            hhat, sigma = cmp.prior_moments(p, cmp.VariableSideInput(A=A, B=B))
            rh, rs = oracle.oracle_prior_moments(p, A, B)
            errs.append([hhat - rh, sigma - rs])
        check(f"prior {p!r}", errs, np.zeros_like(errs))
    return ok, lines
