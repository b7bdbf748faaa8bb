"""Closed-form forward diffusion and reverse-step arithmetic.

The variance schedule is linear in the step index; cumulative signal
coefficients and the fixed reverse-process variances are tabulated once
and shared between training and sampling. Steps are 1-based: t runs from
1 to T inclusive.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray       # (T,) beta_t at index t-1
    alpha_bar: np.ndarray  # (T,) cumulative product of (1 - beta)
    sigma2: np.ndarray     # (T,) fixed reverse variance

    def alpha_bar_at(self, t):
        """alpha_bar for step t, with the t = 0 convention alpha_bar_0 = 1."""
        t = np.asarray(t)
        return np.where(t < 1, 1.0, self.alpha_bar[np.maximum(t, 1) - 1])


def build_schedule(T, beta_min=0.0001, beta_max=0.05):
    """Linear beta schedule with beta_1 = beta_min and beta_T = beta_max."""
    if T < 2:
        raise ConfigError("T must be at least 2")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ConfigError("need 0 < beta_min < beta_max < 1")
    t = np.arange(T, dtype=np.float64)
    beta = beta_min + t / (T - 1) * (beta_max - beta_min)
    alpha_bar = np.cumprod(1.0 - beta)
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    sigma2 = (1.0 - prev) / (1.0 - alpha_bar) * beta
    sigma2[0] = beta[0]
    return NoiseSchedule(T=int(T), beta=beta, alpha_bar=alpha_bar, sigma2=sigma2)


def _check_t(t, T):
    if not (1 <= int(t) <= T):
        raise ConfigError(f"step {t} outside [1, {T}]")
    return int(t)


def q_sample(x0, t, eps, sched):
    """Noisy state at step t: sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise ConfigError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    t = _check_t(t, sched.T)
    ab = sched.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_params(x_t, eps_hat, t, sched):
    """Mean and variance of the reverse step at t given predicted noise."""
    t = _check_t(t, sched.T)
    beta = sched.beta[t - 1]
    ab = sched.alpha_bar[t - 1]
    alpha = 1.0 - beta
    mu = (np.asarray(x_t) - beta / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(alpha)
    return mu, float(sched.sigma2[t - 1])


def reverse_step(x_t, eps_hat, t, sched, z):
    """One ancestral reverse step: x_{t-1} = mu + sigma * z.

    z must be identically zero at t = 1 (no noise is added on the final
    step); passing nonzero z there is a contract violation.
    """
    t = _check_t(t, sched.T)
    z = np.asarray(z)
    if t == 1 and np.any(z != 0.0):
        raise ConfigError("z must be zero at t = 1")
    mu, sigma2 = posterior_params(x_t, eps_hat, t, sched)
    if t == 1:
        return mu
    return mu + np.sqrt(sigma2) * z
