"""Evaluation quantities for generated populations.

Covers subspace recovery (projector-difference Frobenius angle), support
fidelity (mean orthogonal distance), reward quality (suboptimality against
the target value and its three-part decomposition into reward-estimation,
on-support, and off-support errors), moment discrepancies against a
reference Gaussian law, a class-restricted distribution-shift ratio, and
reward histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateShiftError, DimensionError, ValidationError
from .oracle import GaussianDesignOracle, alpha_of, h_of, sample_conditional_latents
from .regression import RidgeEstimate
from .rng import as_generator, derive
from .sampler import SampleBatch
from .world import SubspaceWorld, decompose, true_reward


def subspace_angle(V: np.ndarray, A: np.ndarray) -> float:
    """Squared Frobenius distance between the two column-span projectors."""
    V = np.asarray(V, dtype=float)
    A = np.asarray(A, dtype=float)
    if V.shape != A.shape:
        raise DimensionError(f"shape mismatch: {V.shape} vs {A.shape}")
    for M, name in ((V, "V"), (A, "A")):
        err = np.max(np.abs(M.T @ M - np.eye(M.shape[1])))
        if err > 1e-8:
            raise ValidationError(f"{name} must have orthonormal columns")
    diff = V @ V.T - A @ A.T
    return float(np.sum(diff * diff))


def off_support_deviation(batch, world: SubspaceWorld) -> float:
    """Mean Euclidean distance of the points from the true support."""
    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    _, x_perp = decompose(world, X)
    return float(np.mean(np.linalg.norm(x_perp, axis=1)))


def suboptimality(batch, world: SubspaceWorld, a: float) -> tuple[float, float]:
    """Gap between the target value and the mean realized reward."""
    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    avg_reward = float(np.mean(true_reward(world, X)))
    return a - avg_reward, avg_reward


@dataclass(frozen=True)
class Decomposition:
    """Three error components whose sum upper-bounds the suboptimality."""

    e1: float                 # reward-estimation error on the target law
    e2: float                 # on-support generation error
    e3: float                 # off-support reward magnitude
    e1_se: float = 0.0
    e2_se: float = 0.0

    def __iter__(self):
        return iter((self.e1, self.e2, self.e3))


def subopt_decomposition(
    batch,
    world: SubspaceWorld,
    est: RidgeEstimate,
    oracle: GaussianDesignOracle,
    a: float,
    n_ref: int = 20000,
    *,
    seed,
) -> Decomposition:
    """Estimate the error decomposition with ``n_ref`` reference draws.

    The reference population comes from the label-conditioned latent law
    embedded through the true subspace; the off-support term is reported as
    a magnitude regardless of the world's reward sign convention.
    """
    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    rng = as_generator(seed)
    z_ref = sample_conditional_latents(oracle, a, n_ref, rng)
    x_ref = z_ref @ world.A.T

    gap = x_ref @ (est.theta_hat - world.theta_star)
    e1 = float(np.mean(np.abs(gap)))
    e1_se = float(np.std(np.abs(gap), ddof=1) / math.sqrt(n_ref))

    g_ref = x_ref @ world.theta_star
    x_par, x_perp = decompose(world, X)
    g_gen = x_par @ world.theta_star
    e2 = float(abs(np.mean(g_ref) - np.mean(g_gen)))
    gen_se = np.std(g_gen, ddof=1) / math.sqrt(len(g_gen)) if len(g_gen) > 1 else 0.0
    e2_se = float(math.hypot(np.std(g_ref, ddof=1) / math.sqrt(len(g_ref)), gen_se))

    e3 = float(world.offsupport_coeff * np.mean(np.sum(x_perp * x_perp, axis=1)))
    return Decomposition(e1=e1, e2=e2, e3=e3, e1_se=e1_se, e2_se=e2_se)


def e1_exact_gaussian(
    world: SubspaceWorld,
    est: RidgeEstimate,
    oracle: GaussianDesignOracle,
    a: float,
) -> float:
    """Closed form of the reward-estimation error (folded normal mean)."""
    from .oracle import conditional_latent_law

    mean, cov = conditional_latent_law(oracle, a)
    v = world.A.T @ (est.theta_hat - world.theta_star)
    m = float(v @ mean)
    s = math.sqrt(max(float(v @ cov @ v), 0.0))
    if s == 0.0:
        return abs(m)
    return s * math.sqrt(2 / math.pi) * math.exp(-(m**2) / (2 * s**2)) + m * math.erf(
        m / (s * math.sqrt(2))
    )


def procrustes_align(V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Orthogonal ``U`` minimizing ``||V U - A||_F`` (closed form via SVD)."""
    W, _, Yt = np.linalg.svd(V.T @ A)
    return W @ Yt


def pushforward_discrepancy(batch, V: np.ndarray, oracle, a: float) -> tuple[float, float]:
    """Latent-space moment gaps of the generated batch.

    Projects the batch through the aligned learned frame ``V U`` and
    compares its moments against the noised conditional latent law at the
    batch's early-stop time.  This is the computable stand-in for a
    total-variation comparison of the low-dimensional push-forwards.
    """
    from .oracle import alpha_of, conditional_latent_law, h_of

    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    t0 = batch.schedule.t0 if isinstance(batch, SampleBatch) else 0.0
    U = procrustes_align(V, oracle.world.A)
    Z = X @ V @ U
    mean0, cov0 = conditional_latent_law(oracle, a)
    al = float(alpha_of(t0))
    law = (al * mean0, al**2 * cov0 + float(h_of(t0)) * np.eye(len(mean0)))
    return moment_discrepancy(Z, law)


def moment_discrepancy(batch, law: tuple) -> tuple[float, float]:
    """Mean gap and relative covariance gap against a reference Gaussian law."""
    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    mean, cov = law
    emp_mean = X.mean(axis=0)
    centered = X - emp_mean
    emp_cov = centered.T @ centered / X.shape[0]
    mean_gap = float(np.linalg.norm(emp_mean - mean))
    cov_gap = float(np.linalg.norm(emp_cov - cov) / np.linalg.norm(cov))
    return mean_gap, cov_gap


# ---------------------------------------------------------------------------
# Class-restricted distribution shift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossEvaluator:
    """Named deterministic per-example loss ``fn(X, y) -> (n,) array``."""

    name: str
    fn: object

    def __call__(self, X, y):
        return self.fn(X, y)


def denoising_loss_family(
    scores: dict, schedule, n_draws: int = 16, *, seed: int
) -> list:
    """Per-example denoising losses of the given scores as a loss family.

    One fixed set of ``(t, eps)`` draws (a pure function of ``seed`` and the
    data dimension) is shared by every example and every member, so each
    member is a deterministic function of the example.
    """
    t = as_generator(derive(seed, 3)).uniform(
        schedule.t0, schedule.terminal_time, n_draws
    )

    def draws_for(D: int) -> np.ndarray:
        return as_generator(derive(seed, 7, D)).standard_normal((n_draws, D))

    def make(name, score):
        def fn(X, y):
            X = np.atleast_2d(np.asarray(X, dtype=float))
            n, D = X.shape
            yv = np.broadcast_to(np.asarray(y, dtype=float).ravel(), (n,))
            eps = draws_for(D)
            total = np.zeros(n)
            for k in range(n_draws):
                al, h = float(alpha_of(t[k])), float(h_of(t[k]))
                Xp = al * X + math.sqrt(h) * eps[k]
                resid = score(Xp, yv, t[k]) + eps[k] / math.sqrt(h)
                total += np.sum(resid * resid, axis=1)
            return total / n_draws

        return LossEvaluator(name=name, fn=fn)

    return [make(name, s) for name, s in scores.items()]


def distribution_shift_mc(samples_p1, samples_p2, losses) -> tuple[float, str]:
    """Largest expectation ratio over the loss family; returns (value, name).

    ``samples_p1`` and ``samples_p2`` are ``(X, y)`` pairs of Monte Carlo
    samples from the two distributions being compared.
    """
    X1, y1 = samples_p1
    X2, y2 = samples_p2
    best, best_name = -np.inf, None
    for loss in losses:
        num = float(np.mean(loss(X1, y1)))
        den = float(np.mean(loss(X2, y2)))
        if den <= 0.0:
            raise DegenerateShiftError(f"loss {loss.name!r} has nonpositive mean")
        ratio = num / den
        if ratio > best:
            best, best_name = ratio, loss.name
    if best_name is None:
        raise ValidationError("loss family must be nonempty")
    return best, best_name


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def mean(self) -> float:
        centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        return float(np.sum(centers * self.counts) / max(self.counts.sum(), 1))


def reward_histogram(batch, world: SubspaceWorld, bins: int = 50,
                     range_: tuple | None = None) -> Histogram:
    """Histogram of realized rewards; ``range_`` pins shared bin edges."""
    if bins < 1:
        raise ValidationError("bins must be at least 1")
    X = batch.X if isinstance(batch, SampleBatch) else np.atleast_2d(batch)
    rewards = true_reward(world, X)
    counts, edges = np.histogram(rewards, bins=bins, range=range_)
    return Histogram(edges=edges, counts=counts)


# ---------------------------------------------------------------------------
# Per-cell report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    a: float
    n: int
    subspace_angle: float
    off_support_mean: float
    avg_reward: float
    subopt: float
    e1: float
    e2: float
    e3: float
    distro_shift: float
    mean_gap: float
    cov_gap: float
    histogram_edges: list
    histogram_counts: list
    seed: object
    score_id: str
    distro_shift_kind: str = "known-sigma-surrogate"

    def __post_init__(self):
        scalars = (
            self.subspace_angle, self.off_support_mean, self.avg_reward,
            self.subopt, self.e1, self.e2, self.e3, self.distro_shift,
            self.mean_gap, self.cov_gap,
        )
        if not all(np.isfinite(v) for v in scalars):
            raise ValidationError("metrics report contains non-finite values")
        if abs(self.subopt - (self.a - self.avg_reward)) > 0.0:
            raise ValidationError("subopt must equal a - avg_reward exactly")

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "n": self.n,
            "seed": self.seed,
            "score_id": self.score_id,
            "subspace_angle": self.subspace_angle,
            "off_support_mean": self.off_support_mean,
            "avg_reward": self.avg_reward,
            "subopt": self.subopt,
            "e1": self.e1,
            "e2": self.e2,
            "e3": self.e3,
            "distro_shift": self.distro_shift,
            "distro_shift_kind": self.distro_shift_kind,
            "moment_discrepancy": {"mean_gap": self.mean_gap, "cov_gap": self.cov_gap},
            "histogram": {
                "edges": self.histogram_edges,
                "counts": self.histogram_counts,
            },
        }


def build_metrics_report(
    batch: SampleBatch,
    world: SubspaceWorld,
    est: RidgeEstimate,
    oracle: GaussianDesignOracle,
    V: np.ndarray,
    *,
    n_ref: int = 20000,
    bins: int = 50,
    seed,
) -> MetricsReport:
    """Evaluate one generated batch against its target value."""
    from .oracle import distro_shift_surrogate, noised_conditional_law

    a = batch.a
    subopt, avg_reward = suboptimality(batch, world, a)
    dec = subopt_decomposition(batch, world, est, oracle, a, n_ref, seed=seed)
    law = noised_conditional_law(oracle, a, batch.schedule.t0)
    mean_gap, cov_gap = moment_discrepancy(batch, law)
    hist = reward_histogram(batch, world, bins=bins)
    return MetricsReport(
        a=a,
        n=batch.n,
        subspace_angle=subspace_angle(V, world.A),
        off_support_mean=off_support_deviation(batch, world),
        avg_reward=avg_reward,
        subopt=subopt,
        e1=dec.e1,
        e2=dec.e2,
        e3=dec.e3,
        distro_shift=distro_shift_surrogate(oracle, a)[1],
        mean_gap=mean_gap,
        cov_gap=cov_gap,
        histogram_edges=[float(v) for v in hist.edges],
        histogram_counts=[int(v) for v in hist.counts],
        seed=batch.seed,
        score_id=batch.score_id,
    )
