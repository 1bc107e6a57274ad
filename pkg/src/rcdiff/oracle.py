"""Closed-form quantities for the Gaussian design.

With latent ``z ~ N(0, Sigma)``, data ``x = A z``, and labels
``y = beta^T z + N(0, nu^2)``, the forward-noised joint density at time ``t``
admits closed forms for everything this package needs to test itself:

* conditional score:
    ``grad_x log p_t(x, y) = (a/h) A B_t (a A^T x + (h/nu^2) y beta) - x/h``
  with ``a = alpha(t) = exp(-t/2)``, ``h = h(t) = 1 - exp(-t)`` and
    ``B_t = (alpha^2(t) I + (h(t)/nu^2) beta beta^T + h(t) Sigma^{-1})^{-1}``;
* conditional latent law ``z | y = a``:  ``N(mu(a), Gamma)`` with
    ``mu(a) = Sigma beta a / (beta^T Sigma beta + nu^2)`` and
    ``Gamma = Sigma - Sigma beta beta^T Sigma / (beta^T Sigma beta + nu^2)``;
* its noised push-forward at time ``t``:
    ``N(alpha(t) A mu(a), alpha^2(t) A Gamma A^T + h(t) I_D)``;
* the latent second moment ``M(a) = ||mu(a)||^2 + tr(Gamma)``.

The module also carries a quadrature + finite-difference reference for the
score in the d=1 case, kept deliberately independent of the formulas above:
it integrates the latent variable numerically and differentiates the log
density, so it can catch errors in the closed forms.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ValidationError
from .world import SubspaceWorld, _check_spd


def alpha_of(t):
    """Signal scale of the forward noising process (unit drift weight)."""
    return np.exp(-0.5 * np.asarray(t, dtype=float))


def h_of(t):
    """Noise variance of the forward noising process; alpha^2 + h = 1."""
    return -np.expm1(-np.asarray(t, dtype=float))


@dataclass(frozen=True)
class DiffusionSchedule:
    """Time discretization of one generation run.

    ``terminal_time`` is where the backward process starts, ``t0`` the early
    stop (the score diverges at t=0), ``eta`` the Euler step.  ``t0 ==
    terminal_time`` is allowed and makes generation a no-op that returns the
    standard-normal initialization.
    """

    terminal_time: float = 10.0
    t0: float = 0.01
    eta: float = 0.01

    def __post_init__(self):
        if not 0 < self.t0 <= self.terminal_time:
            raise ValidationError("need 0 < t0 <= terminal_time")
        if not 0 < self.eta <= self.t0:
            raise ValidationError("need 0 < eta <= t0")

    def alpha(self, t):
        return alpha_of(t)

    def h(self, t):
        return h_of(t)

    def to_dict(self) -> dict:
        return {"terminal_time": self.terminal_time, "t0": self.t0, "eta": self.eta}

    @classmethod
    def from_dict(cls, d: dict) -> "DiffusionSchedule":
        return cls(float(d["terminal_time"]), float(d["t0"]), float(d["eta"]))


@dataclass(frozen=True)
class GaussianDesignOracle:
    """Closed-form reference for a world, a reward direction, and label noise.

    ``beta_hat`` is the latent-space reward vector entering the labels; for
    a fitted estimate ``theta`` it is ``A^T theta``, and for ground-truth
    checks it is the world's own ``beta_star``.
    """

    world: SubspaceWorld
    beta_hat: np.ndarray          # (d,)
    nu: float

    def __post_init__(self):
        b = np.asarray(self.beta_hat, dtype=float)
        if b.shape != (self.world.d,):
            raise ValidationError("beta_hat dimension does not match world")
        if not self.nu > 0:
            raise ValidationError("nu must be positive")
        _check_spd(self.world.Sigma)
        object.__setattr__(self, "beta_hat", b)
        object.__setattr__(
            self, "_sigma_inv", np.linalg.inv(self.world.Sigma)
        )

    @property
    def sigma_inv(self) -> np.ndarray:
        return self._sigma_inv

    def params_digest(self) -> str:
        payload = b"".join(
            np.ascontiguousarray(a, dtype=float).tobytes()
            for a in (self.world.A, self.world.Sigma, self.beta_hat, [self.nu])
        )
        return hashlib.sha256(payload).hexdigest()[:16]


def b_matrix(oracle: GaussianDesignOracle, t: float) -> np.ndarray:
    """The d x d matrix inverting the noised latent precision at time ``t``."""
    if not t > 0:
        raise ValidationError("b_matrix requires t > 0")
    a2 = float(alpha_of(t)) ** 2
    h = float(h_of(t))
    b = oracle.beta_hat
    M = a2 * np.eye(oracle.world.d) + (h / oracle.nu**2) * np.outer(b, b)
    M += h * oracle.sigma_inv
    B = np.linalg.inv(M)
    return 0.5 * (B + B.T)


def score_inner(oracle: GaussianDesignOracle, u: np.ndarray, y, t: float) -> np.ndarray:
    """Latent head of the score: the map the encoder-decoder class learns.

    ``u`` is the projected input ``A^T x`` (shape (d,) or (n, d)); the full
    score is ``(A inner - x) / h(t)``.
    """
    a = float(alpha_of(t))
    h = float(h_of(t))
    B = b_matrix(oracle, t)
    y = np.asarray(y, dtype=float)
    w = a * np.atleast_2d(u) + (h / oracle.nu**2) * np.outer(y.ravel(), oracle.beta_hat)
    out = a * (w @ B)
    return out[0] if np.ndim(u) == 1 else out


def analytic_score(oracle: GaussianDesignOracle, x: np.ndarray, y, t) -> np.ndarray:
    """Conditional score of the noised joint law at time ``t > 0``.

    Accepts a single point ``x`` of shape (D,) with scalar ``y``, or a batch
    (n, D) with ``y`` scalar or (n,); ``t`` is a scalar or a per-row (n,)
    array.
    """
    if not np.all(np.asarray(t) > 0):
        raise ValidationError("analytic_score requires t > 0 (blows up at t=0)")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    n = X.shape[0]
    yv = np.broadcast_to(np.asarray(y, dtype=float).ravel(), (n,))
    if np.ndim(t) == 0:
        h = float(h_of(t))
        inner = score_inner(oracle, X @ oracle.world.A, yv, float(t))
        out = (inner @ oracle.world.A.T - X) / h
        return out[0] if single else out
    tv = np.broadcast_to(np.asarray(t, dtype=float).ravel(), (n,))
    al, h = alpha_of(tv), h_of(tv)
    b = oracle.beta_hat
    d = oracle.world.d
    M = (
        (al**2)[:, None, None] * np.eye(d)
        + (h / oracle.nu**2)[:, None, None] * np.outer(b, b)
        + h[:, None, None] * oracle.sigma_inv
    )
    B = np.linalg.inv(M)
    U = X @ oracle.world.A
    w = al[:, None] * U + ((h / oracle.nu**2) * yv)[:, None] * b
    inner = al[:, None] * np.einsum("nij,nj->ni", B, w)
    out = (inner @ oracle.world.A.T - X) / h[:, None]
    return out[0] if single else out


def conditional_latent_law(oracle: GaussianDesignOracle, a: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the latent conditioned on label value ``a``."""
    S = oracle.world.Sigma
    b = oracle.beta_hat
    Sb = S @ b
    denom = float(b @ Sb) + oracle.nu**2
    mean = (a / denom) * Sb
    cov = S - np.outer(Sb, Sb) / denom
    return mean, 0.5 * (cov + cov.T)


def sample_conditional_latents(
    oracle: GaussianDesignOracle, a: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` latents from the conditional law (PSD-safe square root)."""
    mean, cov = conditional_latent_law(oracle, a)
    evals, evecs = np.linalg.eigh(cov)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return mean + rng.standard_normal((n, len(mean))) @ root.T


def noised_conditional_law(
    oracle: GaussianDesignOracle, a: float, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Ambient-law moments of conditioned data pushed through the noising to ``t``."""
    if t < 0:
        raise ValidationError("t must be nonnegative")
    mean, cov = conditional_latent_law(oracle, a)
    A = oracle.world.A
    al = float(alpha_of(t))
    m = al * (A @ mean)
    C = al**2 * (A @ cov @ A.T) + float(h_of(t)) * np.eye(oracle.world.D)
    return m, C


def latent_second_moment(oracle: GaussianDesignOracle, a: float) -> float:
    """E ||z||^2 under the conditional latent law; quadratic in ``a``."""
    mean, cov = conditional_latent_law(oracle, a)
    return float(mean @ mean + np.trace(cov))


def distro_shift_surrogate(oracle: GaussianDesignOracle, a: float) -> tuple[float, float]:
    """Known-covariance distribution-shift proxy.

    Returns the conditional second moment (in the form that makes the
    ``a^2`` sensitivity explicit) and the dimensionless surrogate
    ``sqrt(second_moment / tr(Sigma))``, nondecreasing in ``|a|``.
    """
    S = oracle.world.Sigma
    b = oracle.beta_hat
    Sb = S @ b
    s = float(b @ Sb)
    denom = s + oracle.nu**2
    second = (a**2 - denom) * float(Sb @ Sb) / denom**2 + float(np.trace(S))
    return second, math.sqrt(second / float(np.trace(S)))


@dataclass(frozen=True)
class AnalyticScore:
    """Callable adapter exposing the closed-form score to sampler and losses."""

    oracle: GaussianDesignOracle

    def __call__(self, x, y, t):
        return analytic_score(self.oracle, x, y, t)

    @property
    def score_id(self) -> str:
        return "oracle:" + self.oracle.params_digest()


# ---------------------------------------------------------------------------
# Quadrature + finite-difference reference (d = 1 only)
# ---------------------------------------------------------------------------

def log_density_quadrature(oracle: GaussianDesignOracle, x: np.ndarray, y: float, t: float) -> float:
    """log p_t(x, y) up to an x-independent constant, via 1-D quadrature.

    Only the scalar-latent case is supported.  The latent integral is
    located by a grid scan of its exponent (no use of the closed forms) and
    evaluated with adaptive quadrature on a window wide enough that the
    truncated tails are negligible.
    """
    if oracle.world.d != 1:
        raise ValidationError("quadrature reference only supports d = 1")
    x = np.asarray(x, dtype=float)
    a = float(alpha_of(t))
    h = float(h_of(t))
    A = oracle.world.A[:, 0]
    u = float(A @ x)
    x_perp2 = float(x @ x - u * u)
    beta = float(oracle.beta_hat[0])
    sig2 = float(oracle.world.Sigma[0, 0])
    nu2 = oracle.nu**2

    def exponent(z):
        return (
            -((u - a * z) ** 2) / (2 * h)
            - (y - beta * z) ** 2 / (2 * nu2)
            - z**2 / (2 * sig2)
        )

    grid = np.linspace(-60.0, 60.0, 4001)
    vals = exponent(grid)
    k = int(np.argmax(vals))
    z_star = grid[k]
    # Curvature from a centered second difference fixes the window width.
    dz = 1e-3
    curv = max(
        (exponent(z_star + dz) - 2 * exponent(z_star) + exponent(z_star - dz)) / dz**2,
        -1e12,
    )
    width = 14.0 / math.sqrt(max(-curv, 1e-6))
    m_star = exponent(z_star)
    val, _ = integrate.quad(
        lambda z: math.exp(exponent(z) - m_star),
        z_star - width,
        z_star + width,
        epsabs=1e-12,
        epsrel=1e-11,
        limit=200,
    )
    return -x_perp2 / (2 * h) + m_star + math.log(val)


def score_via_quadrature_fd(
    oracle: GaussianDesignOracle, x: np.ndarray, y: float, t: float, step: float = 1e-4
) -> np.ndarray:
    """Gradient of the quadrature log density by Richardson-refined differences."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = 1.0

        def central(hs):
            fp = log_density_quadrature(oracle, x + hs * e, y, t)
            fm = log_density_quadrature(oracle, x - hs * e, y, t)
            return (fp - fm) / (2 * hs)

        d1 = central(step)
        d2 = central(step / 2)
        grad[i] = (4 * d2 - d1) / 3
    return grad
