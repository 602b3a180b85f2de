"""Gibbs samplers for sparse regression with coefficient and difference shrinkage.

Four model families share one blocked sweep:

- ``lasso``: absolute-value shrinkage on each coefficient.
- ``fused``: the same plus absolute-value shrinkage on differences of
  consecutive coefficients (chain graph).
- ``neg_lasso``: NEG shrinkage on each coefficient, no difference terms.
- ``neg_fused``: absolute-value shrinkage on coefficients plus NEG shrinkage
  on differences along an arbitrary fusion graph.

Each sweep draws the coefficient block from its exact multivariate normal
conditional, the noise variance from an inverse gamma, the latent variance of
every coefficient and edge from an inverse gaussian, and, for the NEG
families, the exponential-rate latents from a gamma.  All conditionals are
scale matched: latent variances multiply the noise variance, so the amount of
shrinkage adapts to the noise level.

``run_chain`` drives the sweeps through one of two backends: compiled numba
kernels (default) or the pure-numpy steppers below.  Equal seeds reproduce a
chain bitwise within a backend; across backends agreement is statistical only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from negfused._backend import resolve_backend
from negfused.distributions import _sample_inverse_gaussian_vec, sample_inverse_gamma
from negfused.graphs import (
    FusionGraph,
    LatentScales,
    build_precision,
    build_precision_banded,
    sample_beta_conditional,
)

__all__ = [
    "MODELS",
    "Hyperparameters",
    "RegressionData",
    "StandardizeTransform",
    "GibbsState",
    "ChainSettings",
    "PosteriorSummary",
    "standardize",
    "initial_state",
    "step_bayesian_lasso",
    "step_bayesian_fused_lasso",
    "step_neg_lasso",
    "step_neg_fused",
    "run_chain",
]

MODELS = ("lasso", "fused", "neg_lasso", "neg_fused")

# latent variances are clamped to this window so conditionals stay finite even
# when a coefficient collapses numerically to zero
_VAR_FLOOR = 1e-300
_MAG_FLOOR = 1e-10


@dataclass(frozen=True)
class Hyperparameters:
    """Shrinkage levels and the noise-variance prior.

    ``lam1`` scales coefficient shrinkage (absolute-value rate, or the NEG
    shape for the ``neg_lasso`` family).  ``lam2`` scales difference
    shrinkage (absolute-value rate for ``fused``, NEG shape for
    ``neg_fused``).  ``gamma2`` is the NEG scale used by whichever family
    carries NEG terms.  ``noise_df`` and ``noise_scale`` parameterize the
    inverse-gamma prior IG(noise_df/2, noise_scale/2) on the noise variance.
    """

    lam1: float
    lam2: float | None = None
    gamma2: float | None = None
    noise_df: float = 0.01
    noise_scale: float = 0.01

    def __post_init__(self) -> None:
        for name in ("lam1", "noise_df", "noise_scale"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("lam2", "gamma2"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite when given, got {v!r}")

    def require(self, model: str) -> None:
        """Check that every field the model family reads is present."""
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")
        if model in ("fused", "neg_fused") and self.lam2 is None:
            raise ValueError(f"model {model!r} needs lam2")
        if model in ("neg_lasso", "neg_fused") and self.gamma2 is None:
            raise ValueError(f"model {model!r} needs gamma2")


@dataclass(frozen=True)
class RegressionData:
    """Response vector and design matrix; ``x = None`` means identity design.

    The identity form is the signal-denoising special case where each
    observation carries its own coefficient.
    """

    y: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or y.size == 0:
            raise ValueError("response must be a nonempty 1-d array")
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        object.__setattr__(self, "y", y)
        if self.x is not None:
            x = np.asarray(self.x, dtype=float)
            if x.ndim != 2:
                raise ValueError("design must be a 2-d array")
            if x.shape[0] != y.size:
                raise ValueError(
                    f"design has {x.shape[0]} rows but response has {y.size} entries"
                )
            if not np.all(np.isfinite(x)):
                raise ValueError("design contains non-finite values")
            object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.y.size if self.x is None else self.x.shape[1]


@dataclass(frozen=True)
class StandardizeTransform:
    """Centering/scaling applied by :func:`standardize`, with the inverse maps."""

    y_mean: float
    x_mean: np.ndarray
    x_scale: np.ndarray

    def raw_coefficients(self, beta: np.ndarray) -> tuple[np.ndarray, float]:
        """Map standardized-scale coefficients to raw scale plus an intercept."""
        raw = np.asarray(beta, dtype=float) / self.x_scale
        intercept = self.y_mean - float(self.x_mean @ raw)
        return raw, intercept

    def predict(self, x_raw: np.ndarray, beta: np.ndarray) -> np.ndarray:
        raw, intercept = self.raw_coefficients(beta)
        return intercept + np.asarray(x_raw, dtype=float) @ raw


def standardize(
    y_raw: np.ndarray, x_raw: np.ndarray
) -> tuple[RegressionData, StandardizeTransform]:
    """Center the response and scale design columns to squared norm n.

    Raises on zero-variance columns, naming the first offending index.
    """
    y = np.asarray(y_raw, dtype=float)
    x = np.asarray(x_raw, dtype=float)
    if y.ndim != 1 or x.ndim != 2 or x.shape[0] != y.size:
        raise ValueError(f"incompatible shapes y={y.shape}, x={x.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise ValueError("inputs contain non-finite values")
    n = y.size
    x_mean = x.mean(axis=0)
    centered = x - x_mean
    ss = np.einsum("ij,ij->j", centered, centered)
    dead = np.flatnonzero(ss <= 0.0)
    if dead.size:
        raise ValueError(f"column {int(dead[0])} has zero variance")
    x_scale = np.sqrt(ss / n)
    data = RegressionData(y - y.mean(), centered / x_scale)
    return data, StandardizeTransform(float(y.mean()), x_mean, x_scale)


@dataclass
class GibbsState:
    """One point of the Gibbs chain.

    ``coef_var`` holds the latent variance of each coefficient, ``edge_var``
    one latent variance per fusion edge (length zero when the model has no
    difference terms), and ``neg_rate`` the exponential-rate latents of the
    NEG hierarchy (per coefficient for ``neg_lasso``, per edge for
    ``neg_fused``; ``None`` otherwise).
    """

    beta: np.ndarray
    sigma2: float
    coef_var: np.ndarray
    edge_var: np.ndarray = field(default_factory=lambda: np.empty(0))
    neg_rate: np.ndarray | None = None


def initial_state(model: str, data: RegressionData, hp: Hyperparameters,
                  graph: FusionGraph | None = None) -> GibbsState:
    """Deterministic all-ones starting point (coefficients at zero)."""
    hp.require(model)
    graph = _resolve_graph(model, data, graph)
    p = data.p
    n_edges = graph.n_edges if graph is not None else 0
    neg_rate = None
    if model == "neg_lasso":
        neg_rate = np.ones(p)
    elif model == "neg_fused":
        neg_rate = np.ones(n_edges)
    return GibbsState(
        beta=np.zeros(p),
        sigma2=1.0,
        coef_var=np.ones(p),
        edge_var=np.ones(n_edges),
        neg_rate=neg_rate,
    )


def _resolve_graph(
    model: str, data: RegressionData, graph: FusionGraph | None
) -> FusionGraph | None:
    if model in ("lasso", "neg_lasso"):
        return None
    if graph is None:
        return FusionGraph.chain(data.p)
    if graph.n_nodes != data.p:
        raise ValueError(f"graph has {graph.n_nodes} nodes but data has p={data.p}")
    if model == "fused" and graph.kind != "chain":
        raise ValueError("the fused model is defined on the chain graph only")
    return graph


def _draw_beta_numpy(
    data: RegressionData,
    graph: FusionGraph | None,
    scales: LatentScales,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Coefficient block draw, using banded solvers for narrow identity designs."""
    if data.x is None and graph is not None and 0 < graph.bandwidth <= 64:
        band = build_precision_banded(graph, scales)
        band[0, :] += 1.0
        chol = scipy.linalg.cholesky_banded(band, lower=True, check_finite=False)
        mean = scipy.linalg.cho_solve_banded((chol, True), data.y, check_finite=False)
        bw = chol.shape[0] - 1
        p = data.p
        upper = np.zeros_like(chol)
        for d in range(bw + 1):
            upper[bw - d, d:] = chol[d, : p - d]
        noise = scipy.linalg.solve_banded(
            (0, bw), upper, rng.standard_normal(p), check_finite=False
        )
        return mean + math.sqrt(sigma2) * noise
    g = graph if graph is not None else FusionGraph(data.p, ())
    prec = build_precision(g, scales)
    xtx = None if data.x is None else data.x.T @ data.x
    xty = data.y if data.x is None else data.x.T @ data.y
    return sample_beta_conditional(xtx, xty, prec, sigma2, rng)


def _step(
    state: GibbsState,
    data: RegressionData,
    hp: Hyperparameters,
    rng: np.random.Generator,
    graph: FusionGraph | None,
    coef_neg: bool,
    edge_neg: bool,
) -> GibbsState:
    """One full systematic-scan sweep shared by all four families."""
    p = data.p
    n_edges = graph.n_edges if graph is not None else 0
    scales = LatentScales(state.coef_var, state.edge_var)

    beta = _draw_beta_numpy(data, graph, scales, state.sigma2, rng)

    resid = data.y - beta if data.x is None else data.y - data.x @ beta
    rss = float(resid @ resid)
    quad = float(np.sum(beta * beta / state.coef_var))
    diffs = np.empty(0)
    if n_edges:
        e = graph.edge_array()
        diffs = beta[e[:, 0]] - beta[e[:, 1]]
        quad += float(np.sum(diffs * diffs / state.edge_var))
    shape = (data.n + p + n_edges + hp.noise_df) / 2.0
    scale = (rss + quad + hp.noise_scale) / 2.0
    sigma2 = sample_inverse_gamma(shape, scale, rng)

    neg_rate = None if state.neg_rate is None else state.neg_rate.copy()
    mag2 = np.maximum(beta * beta, _MAG_FLOOR**2)
    if coef_neg:
        ig_shape = 2.0 * state.neg_rate
        ig_mean = np.sqrt(ig_shape * sigma2 / mag2)
    else:
        ig_shape = np.full(p, hp.lam1 * hp.lam1)
        ig_mean = np.sqrt(ig_shape * sigma2 / mag2)
    inv = np.clip(_sample_inverse_gaussian_vec(ig_mean, ig_shape, rng), _VAR_FLOOR, 1e300)
    coef_var = 1.0 / inv
    if coef_neg:
        neg_rate = rng.gamma(hp.lam1 + 1.0, 1.0 / (coef_var + hp.gamma2**2))

    edge_var = state.edge_var
    if n_edges:
        dmag2 = np.maximum(diffs * diffs, _MAG_FLOOR**2)
        if edge_neg:
            ig_shape_e = 2.0 * state.neg_rate
        else:
            ig_shape_e = np.full(n_edges, hp.lam2 * hp.lam2)
        ig_mean_e = np.sqrt(ig_shape_e * sigma2 / dmag2)
        inv_e = np.clip(
            _sample_inverse_gaussian_vec(ig_mean_e, ig_shape_e, rng), _VAR_FLOOR, 1e300
        )
        edge_var = 1.0 / inv_e
        if edge_neg:
            neg_rate = rng.gamma(hp.lam2 + 1.0, 1.0 / (edge_var + hp.gamma2**2))

    return GibbsState(beta, sigma2, coef_var, edge_var, neg_rate)


def step_bayesian_lasso(
    state: GibbsState, data: RegressionData, hp: Hyperparameters, rng: np.random.Generator
) -> GibbsState:
    """One sweep of the absolute-shrinkage regression sampler."""
    hp.require("lasso")
    return _step(state, data, hp, rng, None, coef_neg=False, edge_neg=False)


def step_bayesian_fused_lasso(
    state: GibbsState, data: RegressionData, hp: Hyperparameters, rng: np.random.Generator
) -> GibbsState:
    """One sweep of the chain-graph fused sampler with absolute shrinkage."""
    hp.require("fused")
    return _step(
        state, data, hp, rng, FusionGraph.chain(data.p), coef_neg=False, edge_neg=False
    )


def step_neg_lasso(
    state: GibbsState, data: RegressionData, hp: Hyperparameters, rng: np.random.Generator
) -> GibbsState:
    """One sweep of the sampler with NEG shrinkage on each coefficient."""
    hp.require("neg_lasso")
    return _step(state, data, hp, rng, None, coef_neg=True, edge_neg=False)


def step_neg_fused(
    state: GibbsState,
    data: RegressionData,
    graph: FusionGraph,
    hp: Hyperparameters,
    rng: np.random.Generator,
) -> GibbsState:
    """One sweep of the graph-fused sampler with NEG shrinkage on differences."""
    hp.require("neg_fused")
    graph = _resolve_graph("neg_fused", data, graph)
    return _step(state, data, hp, rng, graph, coef_neg=False, edge_neg=True)


@dataclass(frozen=True)
class ChainSettings:
    """Length and retention plan of one chain.

    ``max_stored`` caps how many draws are kept in memory; when the retained
    count exceeds it, draws are subsampled uniformly by an integer stride
    (posterior means still average every retained draw).  Zero disables draw
    storage entirely.
    """

    iterations: int = 3000
    burnin: int = 1000
    thin: int = 1
    max_stored: int = 10_000

    def __post_init__(self) -> None:
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError(
                f"burnin must lie in [0, iterations), got {self.burnin}/{self.iterations}"
            )
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.max_stored < 0:
            raise ValueError("max_stored must be >= 0")

    @property
    def n_retained(self) -> int:
        return -((self.iterations - self.burnin) // -self.thin)

    @property
    def store_stride(self) -> int:
        if self.max_stored == 0:
            return 0
        return -(self.n_retained // -self.max_stored)


@dataclass
class PosteriorSummary:
    """Chain output: means, optionally thinned draws, and reproducibility info."""

    model: str
    beta_mean: np.ndarray
    sigma2_mean: float
    beta_draws: np.ndarray | None
    sigma2_draws: np.ndarray | None
    n_retained: int
    settings: ChainSettings
    seed: int
    backend: str

    def point_estimate(self, kind: str = "mean") -> np.ndarray:
        if kind == "mean":
            return self.beta_mean
        if kind == "median":
            if self.beta_draws is None:
                raise ValueError("median needs stored draws; run with max_stored > 0")
            return np.median(self.beta_draws, axis=0)
        raise ValueError(f"unknown point estimate {kind!r}; expected 'mean' or 'median'")


def run_chain(
    model: str,
    data: RegressionData,
    hp: Hyperparameters,
    graph: FusionGraph | None = None,
    settings: ChainSettings = ChainSettings(),
    seed: int = 0,
    backend: str | None = None,
) -> PosteriorSummary:
    """Run one Gibbs chain and summarize it.

    ``backend`` picks the implementation ("numba" or "numpy"); by default the
    compiled kernels are used when available unless the ``NEGFUSED_NO_NUMBA``
    environment variable is set.
    """
    hp.require(model)
    graph = _resolve_graph(model, data, graph)
    backend = resolve_backend(backend)
    if backend == "numba":
        from negfused import _kernels

        beta_mean, sigma2_mean, beta_draws, sigma2_draws = _kernels.run_chain_numba(
            model, data, hp, graph, settings, seed
        )
    else:
        beta_mean, sigma2_mean, beta_draws, sigma2_draws = _run_chain_numpy(
            model, data, hp, graph, settings, seed
        )
    if settings.max_stored == 0:
        beta_draws = None
        sigma2_draws = None
    return PosteriorSummary(
        model=model,
        beta_mean=beta_mean,
        sigma2_mean=sigma2_mean,
        beta_draws=beta_draws,
        sigma2_draws=sigma2_draws,
        n_retained=settings.n_retained,
        settings=settings,
        seed=seed,
        backend=backend,
    )


def _run_chain_numpy(model, data, hp, graph, settings, seed):
    rng = np.random.default_rng(seed)
    state = initial_state(model, data, hp, graph)
    coef_neg = model == "neg_lasso"
    edge_neg = model == "neg_fused"
    step_graph = graph if model in ("fused", "neg_fused") else None

    p = data.p
    stride = settings.store_stride
    n_store = 0 if stride == 0 else -(settings.n_retained // -stride)
    beta_draws = np.empty((n_store, p))
    sigma2_draws = np.empty(n_store)
    beta_sum = np.zeros(p)
    sigma2_sum = 0.0
    kept = 0
    stored = 0
    for t in range(settings.iterations):
        state = _step(state, data, hp, rng, step_graph, coef_neg, edge_neg)
        if t < settings.burnin or (t - settings.burnin) % settings.thin:
            continue
        beta_sum += state.beta
        sigma2_sum += state.sigma2
        if stride and kept % stride == 0:
            beta_draws[stored] = state.beta
            sigma2_draws[stored] = state.sigma2
            stored += 1
        kept += 1
    return beta_sum / kept, sigma2_sum / kept, beta_draws[:stored], sigma2_draws[:stored]
