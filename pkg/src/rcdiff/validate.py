"""Self-contained correctness checks runnable from the command line.

Each check exercises one cross-validation pair: a formula against an
independent numerical oracle, or two mathematically equal computation paths
against each other.  They are smaller, faster versions of the acceptance
tests and are meant as a quick health probe of an installation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .metrics import moment_discrepancy
from .oracle import (
    AnalyticScore,
    DiffusionSchedule,
    GaussianDesignOracle,
    alpha_of,
    analytic_score,
    h_of,
    noised_conditional_law,
    score_via_quadrature_fd,
)
from .regression import projected_trace_full, projected_trace_reduced
from .sampler import run_backward
from .score_model import (
    CoveringScore,
    MlpScore,
    ZeroScore,
    denoising_loss_and_grad,
    denoising_objective,
    exact_objective,
)
from .world import make_world


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def _random_spd(rng, d, scale=1.0):
    G = rng.standard_normal((d, d))
    return scale * (G @ G.T / d + 0.1 * np.eye(d))


def check_schedule_identity() -> tuple:
    t = np.linspace(1e-6, 50.0, 10_000)
    err = float(np.max(np.abs(alpha_of(t) ** 2 + h_of(t) - 1.0)))
    return err < 1e-12, f"max |alpha^2 + h - 1| = {err:.2e}"


def check_trace_identity() -> tuple:
    rng = np.random.default_rng(0)
    d, D = 5, 12
    worst = 0.0
    for _ in range(100):
        lam = float(rng.uniform(0.1, 3.0))
        G = rng.standard_normal((D, d))
        A = np.linalg.qr(G)[0]
        s1 = _random_spd(rng, d)
        s2 = _random_spd(rng, d)
        full = projected_trace_full(lam, A, s1, s2)
        red = projected_trace_reduced(lam, s1, s2)
        worst = max(worst, abs(full - red) / abs(red))
    return worst < 1e-8, f"worst relative gap = {worst:.2e}"


def check_score_quadrature(n_points: int = 10) -> tuple:
    world = make_world(D=2, d=1, sigma=np.array([[0.8]]), seed=0)
    oracle = GaussianDesignOracle(world=world, beta_hat=np.array([0.7]), nu=0.4)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(n_points):
        x = 1.5 * rng.standard_normal(2)
        y = float(1.2 * rng.standard_normal())
        t = float(rng.uniform(0.05, 3.0))
        ref = score_via_quadrature_fd(oracle, x, y, t)
        got = analytic_score(oracle, x, y, t)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1e-6))))
    return worst <= 1e-3, f"worst relative error = {worst:.2e}"


def check_prop1_equivalence(n_mc: int = 40_000) -> tuple:
    world = make_world(D=6, d=3, seed=2)
    oracle = GaussianDesignOracle(world=world, beta_hat=world.beta_star, nu=0.5)
    schedule = DiffusionSchedule(terminal_time=5.0, t0=0.05, eta=0.05)
    perturbed = GaussianDesignOracle(
        world=world, beta_hat=world.beta_star + np.array([0.3, -0.2, 0.1]), nu=0.5
    )
    s1, s2 = AnalyticScore(perturbed), ZeroScore()
    ex1, se_ex1 = exact_objective(s1, oracle, n_mc, schedule, seed=11)
    ex2, se_ex2 = exact_objective(s2, oracle, n_mc, schedule, seed=11)
    dn1, se_dn1 = denoising_objective(s1, oracle, n_mc, schedule, seed=12)
    dn2, se_dn2 = denoising_objective(s2, oracle, n_mc, schedule, seed=12)
    gap = abs((ex1 - ex2) - (dn1 - dn2))
    tol = 3.0 * float(np.hypot(np.hypot(se_ex1, se_ex2), np.hypot(se_dn1, se_dn2)))
    return gap <= tol, f"|delta_exact - delta_denoising| = {gap:.4f} (3sigma = {tol:.4f})"


def check_score_gradients() -> tuple:
    rng = np.random.default_rng(3)
    schedule = DiffusionSchedule(terminal_time=5.0, t0=0.05, eta=0.05)
    D, d, n = 6, 3, 8
    X = rng.standard_normal((n, D))
    y = rng.standard_normal(n)
    results = []
    for model, tol in (
        (CoveringScore(D, d, nu=0.5, seed=4), 1e-4),
        (MlpScore(D, d, hidden=(32, 32), seed=5), 1e-3),
    ):
        for k in model.params:
            model.params[k] = model.params[k] + 0.05 * rng.standard_normal(model.params[k].shape)
        _, grads = denoising_loss_and_grad(model, X, y, schedule, seed=42)
        worst = 0.0
        base = {k: v.copy() for k, v in model.params.items()}
        for _ in range(20):
            dirs = {k: rng.standard_normal(v.shape) for k, v in model.params.items()}
            norm = np.sqrt(sum(float(np.sum(v * v)) for v in dirs.values()))
            an = sum(float(np.sum(grads[k] * dirs[k])) for k in grads) / norm
            h = 1e-5
            for k in model.params:
                model.params[k] = base[k] + h * dirs[k] / norm
            lp, _ = denoising_loss_and_grad(model, X, y, schedule, seed=42)
            for k in model.params:
                model.params[k] = base[k] - h * dirs[k] / norm
            lm, _ = denoising_loss_and_grad(model, X, y, schedule, seed=42)
            for k in model.params:
                model.params[k] = base[k]
            fd = (lp - lm) / (2 * h)
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-12))
        results.append((model.variant, worst, tol))
    ok = all(worst <= tol for _, worst, tol in results)
    detail = ", ".join(f"{v}: {w:.2e} (tol {t:g})" for v, w, t in results)
    return ok, detail


def check_sampler_moments() -> tuple:
    world = make_world(D=4, d=2, seed=7)
    oracle = GaussianDesignOracle(world=world, beta_hat=world.beta_star, nu=0.5)
    schedule = DiffusionSchedule(terminal_time=10.0, t0=0.01, eta=0.005)
    batch = run_backward(AnalyticScore(oracle), a=2.0, n=4096, schedule=schedule, seed=11)
    law = noised_conditional_law(oracle, 2.0, schedule.t0)
    mean_err = float(np.max(np.abs(batch.X.mean(axis=0) - law[0])))
    _, cov_gap = moment_discrepancy(batch, law)
    ok = mean_err <= 0.1 and cov_gap <= 0.10
    return ok, f"max mean error = {mean_err:.4f}, cov gap = {cov_gap:.4f}"


CHECKS = {
    "schedule-identity": check_schedule_identity,
    "trace-identity": check_trace_identity,
    "score-quadrature": check_score_quadrature,
    "prop1-equivalence": check_prop1_equivalence,
    "score-gradients": check_score_gradients,
    "sampler-moments": check_sampler_moments,
}


def run_checks(names=None) -> list:
    selected = list(CHECKS) if names is None else list(names)
    results = []
    for name in selected:
        fn = CHECKS[name]
        start = time.perf_counter()
        passed, detail = fn()
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
