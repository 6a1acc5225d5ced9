"""Noise schedules, forward noising, and reverse-process statistics.

Discrete-time Gaussian diffusion over 2-D fields.  With betas b_1..b_T,
a_t = 1 - b_t and abar_t = prod_{u<=t} a_u (abar_0 := 1):

    forward:    x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps
    clean est.: x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
    posterior:  mean = sqrt(abar_{t-1}) b_t / (1 - abar_t) * x0_hat
                     + sqrt(a_t) (1 - abar_{t-1}) / (1 - abar_t) * x_t
                var  = (1 - abar_{t-1}) / (1 - abar_t) * b_t

All step-indexed operations take t in {1..T}; ``forward_sample`` also accepts
t = 0 and returns x_0 unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StepRangeError
from .fields import MODEL_UNITS, Field, require_same_shape, require_units


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances and their cumulative products.

    ``betas[i]`` is the variance added at step ``i + 1``; ``alphas`` and
    ``alpha_bars`` are aligned the same way.  Use the accessors for
    1-indexed lookups (``alpha_bar`` also accepts t = 0, which is 1 by
    definition).
    """

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)

    def _check_step(self, t: int, lo: int = 1) -> None:
        if not isinstance(t, (int, np.integer)):
            raise StepRangeError(f"step index must be an integer, got {t!r}")
        if t < lo or t > self.T:
            raise StepRangeError(f"step t={t} outside {{{lo}..{self.T}}}")

    def beta(self, t: int) -> float:
        self._check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t: int) -> float:
        self._check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t: int) -> float:
        self._check_step(t, lo=0)
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def linear_schedule(T: int, beta_1: float = 1e-4, beta_T: float = 0.02) -> NoiseSchedule:
    """Evenly spaced variances from beta_1 to beta_T inclusive.

    Parameters
    ----------
    T : int
        Number of diffusion steps, at least 2.
    beta_1, beta_T : float
        First and last per-step variances, 0 < beta_1 <= beta_T < 1.
    """
    if T < 2:
        raise ParameterError(f"schedule needs T >= 2, got T={T}")
    if not (0.0 < beta_1 <= beta_T < 1.0):
        raise ParameterError(
            f"need 0 < beta_1 <= beta_T < 1, got beta_1={beta_1}, beta_T={beta_T}"
        )
    betas = np.linspace(beta_1, beta_T, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_sample(schedule: NoiseSchedule, x0: Field, t: int, noise: Field) -> Field:
    """Jump the clean field straight to step t with the given unit noise."""
    require_units(x0, MODEL_UNITS, "x0")
    require_units(noise, MODEL_UNITS, "noise")
    require_same_shape(x0, noise, "x0 and noise")
    schedule._check_step(t, lo=0)
    abar = schedule.alpha_bar(t)
    values = math.sqrt(abar) * x0.values + math.sqrt(1.0 - abar) * noise.values
    return Field(values, MODEL_UNITS)


def estimate_x0(schedule: NoiseSchedule, x_t: Field, t: int, eps_hat: Field) -> Field:
    """Invert the forward jump using a noise estimate (no clamping here)."""
    require_units(x_t, MODEL_UNITS, "x_t")
    require_units(eps_hat, MODEL_UNITS, "eps_hat")
    require_same_shape(x_t, eps_hat, "x_t and eps_hat")
    schedule._check_step(t)
    abar = schedule.alpha_bar(t)
    root_abar = math.sqrt(abar)
    values = (x_t.values - math.sqrt(1.0 - abar) * eps_hat.values) / root_abar
    return Field(values, MODEL_UNITS)


def posterior_stats(
    schedule: NoiseSchedule, x0_est: Field, x_t: Field, t: int
) -> tuple[Field, float]:
    """Mean field and scalar variance of the reverse-step posterior at t.

    At t = 1 the variance is exactly 0 and the mean collapses to the clean
    estimate (abar_0 = 1 kills the x_t coefficient).
    """
    require_units(x0_est, MODEL_UNITS, "x0_est")
    require_units(x_t, MODEL_UNITS, "x_t")
    require_same_shape(x0_est, x_t, "x0_est and x_t")
    schedule._check_step(t)
    beta = schedule.beta(t)
    alpha = schedule.alpha(t)
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t - 1)
    denom = 1.0 - abar_t
    coeff_x0 = math.sqrt(abar_prev) * beta / denom
    coeff_xt = math.sqrt(alpha) * (1.0 - abar_prev) / denom
    mean = Field(coeff_x0 * x0_est.values + coeff_xt * x_t.values, MODEL_UNITS)
    var = (1.0 - abar_prev) / denom * beta
    return mean, var
