"""Bounded CMA-ES minimization in a normalized unit box.

Implements the standard (mu/mu_w, lambda) strategy: rank-based weighted
recombination, cumulative step-size adaptation, and rank-one plus rank-mu
covariance updates. Box bounds are mapped affinely to [0, 1] per dimension
so rotation (radians) and translation (millimeters) parameters share one
sampling scale; candidates are clamped into the box at evaluation time
while the distribution update uses the raw samples.

Runs are bitwise deterministic for a fixed seed and configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BoundsSpec:
    """Per-dimension box bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"bounds shapes disagree: {lo.shape} vs {hi.shape}")
        if not (lo < hi).all():
            raise ValueError("each lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @classmethod
    def transform_box(cls, rotation_rad: float = 0.1,
                      translation_mm: float = 7.5) -> "BoundsSpec":
        """Symmetric bounds for the 6-parameter transform search."""
        hi = np.array([rotation_rad] * 3 + [translation_mm] * 3)
        return cls(-hi, hi)


def to_unit_space(params, bounds: BoundsSpec) -> np.ndarray:
    """Affine map of in-bounds parameters onto [0, 1]^n."""
    p = np.asarray(params, dtype=np.float64)
    x = (p - bounds.lower) / (bounds.upper - bounds.lower)
    return x


def from_unit_space(x, bounds: BoundsSpec) -> np.ndarray:
    """Inverse of to_unit_space."""
    x = np.asarray(x, dtype=np.float64)
    return bounds.lower + x * (bounds.upper - bounds.lower)


@dataclass(frozen=True)
class CmaesConfig:
    """Optimizer settings; sigma0 is the initial step size in unit space."""

    population: int = 100
    sigma0: float = 0.1
    max_generations: int = 150
    stagnation_tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.population < 4:
            raise ValueError(f"population must be >= 4, got {self.population}")
        if self.sigma0 <= 0.0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")


@dataclass
class OptimizationTrace:
    """Per-generation record of a minimize() run.

    best_loss is the running best (non-increasing); gen_best_loss is the
    best within each generation; best_params tracks the (clamped) encoded
    parameters achieving best_loss.
    """

    best_loss: list[float] = field(default_factory=list)
    gen_best_loss: list[float] = field(default_factory=list)
    mean_loss: list[float] = field(default_factory=list)
    best_params: list[np.ndarray] = field(default_factory=list)
    non_finite_evals: int = 0

    @property
    def generations(self) -> int:
        return len(self.best_loss)

    @property
    def final_loss(self) -> float:
        return self.best_loss[-1]

    @property
    def final_params(self) -> np.ndarray:
        return self.best_params[-1]


def _strategy_constants(n: int, lam: int):
    mu = lam // 2
    raw = np.log(0.5 * (lam + 1)) - np.log(np.arange(1, mu + 1))
    weights = raw / raw.sum()
    mueff = 1.0 / np.sum(weights ** 2)
    cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n)
    cs = (mueff + 2.0) / (n + mueff + 5.0)
    c1 = 2.0 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) ** 2 + mueff))
    damps = 1.0 + 2.0 * max(0.0, np.sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + cs
    chi_n = np.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))
    return mu, weights, mueff, cc, cs, c1, cmu, damps, chi_n


def minimize(objective, bounds: BoundsSpec, config: CmaesConfig,
             batch_evaluator=None) -> OptimizationTrace:
    """Minimize objective(params) over the bounded box.

    objective must be deterministic. batch_evaluator, when given, receives
    the whole generation as a list of parameter vectors and must return
    losses in the same order (it may evaluate them concurrently).

    A run performs max(1, max_generations) sampling rounds; a budget of 0
    evaluates only the initial population. It stops early when the loss
    spread within a generation falls below stagnation_tol. Non-finite
    losses are replaced by the worst finite loss of their generation and
    counted in the trace.
    """
    n = bounds.dimension
    lam = config.population
    mu, weights, mueff, cc, cs, c1, cmu, damps, chi_n = _strategy_constants(n, lam)

    rng = np.random.default_rng(config.seed)
    mean = np.full(n, 0.5)
    sigma = config.sigma0
    cov = np.eye(n)
    p_sigma = np.zeros(n)
    p_cov = np.zeros(n)
    eigvals = np.ones(n)
    eigvecs = np.eye(n)

    trace = OptimizationTrace()
    best_loss = np.inf
    best_params = None
    rounds = max(1, config.max_generations)

    for gen in range(rounds):
        z = rng.standard_normal((lam, n))
        y = (z * np.sqrt(eigvals)) @ eigvecs.T
        x = mean + sigma * y
        x_eval = np.clip(x, 0.0, 1.0)
        params = [from_unit_space(xi, bounds) for xi in x_eval]
        if batch_evaluator is not None:
            losses = np.asarray(batch_evaluator(params), dtype=np.float64)
            if losses.shape != (lam,):
                raise ValueError("batch evaluator returned wrong number of losses")
        else:
            losses = np.array([objective(p) for p in params], dtype=np.float64)

        bad = ~np.isfinite(losses)
        if bad.any():
            if bad.all():
                raise RuntimeError("objective returned no finite losses in a generation")
            trace.non_finite_evals += int(bad.sum())
            losses = np.where(bad, losses[~bad].max(), losses)

        order = np.argsort(losses, kind="stable")
        gen_best = float(losses[order[0]])
        if gen_best < best_loss:
            best_loss = gen_best
            best_params = params[order[0]]
        trace.gen_best_loss.append(gen_best)
        trace.best_loss.append(best_loss)
        trace.mean_loss.append(float(losses.mean()))
        trace.best_params.append(np.array(best_params))

        spread = float(losses[order[-1]] - losses[order[0]])
        if gen == rounds - 1 or spread < config.stagnation_tol:
            break

        # recombination on the unclamped samples
        x_old = mean
        x_sel = x[order[:mu]]
        mean = weights @ x_sel
        y_mean = (mean - x_old) / sigma

        # cumulative step-size adaptation
        c_inv_sqrt = eigvecs @ np.diag(1.0 / np.sqrt(eigvals)) @ eigvecs.T
        p_sigma = (1.0 - cs) * p_sigma \
            + np.sqrt(cs * (2.0 - cs) * mueff) * (c_inv_sqrt @ y_mean)
        expected = np.sqrt(1.0 - (1.0 - cs) ** (2.0 * (gen + 1)))
        h_sigma = np.linalg.norm(p_sigma) / expected / chi_n < 1.4 + 2.0 / (n + 1.0)

        # covariance update
        p_cov = (1.0 - cc) * p_cov \
            + h_sigma * np.sqrt(cc * (2.0 - cc) * mueff) * y_mean
        y_sel = (x_sel - x_old) / sigma
        rank_mu = (weights[:, None] * y_sel).T @ y_sel
        c1a = c1 * (1.0 - (0.0 if h_sigma else 1.0) * cc * (2.0 - cc))
        cov = (1.0 - c1a - cmu) * cov + c1 * np.outer(p_cov, p_cov) + cmu * rank_mu
        cov = 0.5 * (cov + cov.T)

        sigma *= float(np.exp((cs / damps) * (np.linalg.norm(p_sigma) / chi_n - 1.0)))

        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals[0] <= 0.0:
            eigvals = np.maximum(eigvals, 1e-30)
            cov = eigvecs @ np.diag(eigvals) @ eigvecs.T

    return trace
