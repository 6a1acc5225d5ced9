"""Blur-guided reverse diffusion with per-step kernel refinement.

One reverse step at index t does, in order:

1. estimate the clean field from the noise prediction (clamped to [-1, 1]
   unless disabled);
2. measure the reblur distance L between the blurred estimate and the blurry
   target, and take its gradients in the kernel and in the estimate;
3. choose the guidance scale s: either the configured override, or
   s = clamp(((x_t - mu) . grad - C) / max(L, floor), s_min, s_max) with mu
   the *unguided* posterior mean;
4. shift the estimate by -s (1 - abar_t) / (sqrt(abar_{t-1}) beta_t) * grad,
   which moves the posterior mean by exactly -s * grad (the coefficients
   cancel against the mean's x0 weight);
5. recompute posterior statistics from the shifted estimate;
6. draw x_{t-1} (deterministically equal to the mean at t = 1);
7. descend the kernel on L at the pre-guidance estimate, with the step size
   decayed as lr * cos^2(pi/2 * (T - t)/T) over the run.

``postcast_deblur`` wraps the loop: start from pure noise and a freshly
initialized kernel, walk t = T..1 against a blurry data-unit target, and
return the data-unit result plus the full per-step trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffusion import NoiseSchedule, estimate_x0, posterior_stats
from .errors import NumericError, ParameterError
from .fields import (
    DATA_UNITS,
    MODEL_UNITS,
    Field,
    clamp01,
    require_units,
    to_data,
    to_model,
)
from .kernel import BlurKernel, distance, grad_wrt_field, grad_wrt_kernel, init_kernel

LR_SCHEDULES = ("cosine", "constant")


@dataclass(frozen=True)
class GuidanceConfig:
    """Knobs for the guided reverse process.

    ``fixed_scale`` (if set) bypasses the automatic scale entirely;
    ``fixed_kernel`` freezes the kernel at its initialization.
    """

    lr: float = 2e-4
    lr_schedule: str = "cosine"
    C: float = 0.0
    s_min: float = 0.0
    s_max: float = 1e6
    loss_floor: float = 1e-12
    clamp_x0: bool = True
    fixed_scale: float | None = None
    fixed_kernel: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError(f"kernel lr must be > 0, got {self.lr}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ParameterError(
                f"unknown lr schedule {self.lr_schedule!r}; expected one of {LR_SCHEDULES}"
            )
        if not self.s_min <= self.s_max:
            raise ParameterError(f"need s_min <= s_max, got [{self.s_min}, {self.s_max}]")
        if self.loss_floor <= 0:
            raise ParameterError(f"loss floor must be > 0, got {self.loss_floor}")
        if self.fixed_scale is not None and not math.isfinite(self.fixed_scale):
            raise ParameterError(f"fixed_scale must be finite, got {self.fixed_scale}")


@dataclass(frozen=True)
class KernelConfig:
    """Initialization of the optimizable blur kernel."""

    size: int = 9
    init_mean: float = 0.6
    init_std: float = 0.1

    def __post_init__(self):
        if self.size < 1 or self.size % 2 == 0:
            raise ParameterError(f"kernel size must be odd and positive, got {self.size}")
        if self.init_std < 0:
            raise ParameterError(f"kernel init std must be >= 0, got {self.init_std}")


@dataclass(frozen=True)
class StepRecord:
    """Diagnostics for one reverse step (kernel mean is post-update)."""

    t: int
    loss: float
    scale: float
    kernel_mean: float


@dataclass
class SamplerTrace:
    """Everything a run produced: the result, the kernel, the step records."""

    records: list
    x0: Field | None = None
    kernel: BlurKernel | None = None


def kernel_lr_at(config: GuidanceConfig, schedule: NoiseSchedule, t: int) -> float:
    """Kernel step size at reverse step t (full lr at t = T)."""
    if config.lr_schedule == "constant":
        return config.lr
    progress = (schedule.T - t) / schedule.T
    return config.lr * math.cos(0.5 * math.pi * progress) ** 2


def auto_scale(
    schedule: NoiseSchedule,
    x_t: Field,
    mu: Field,
    grad_x: Field,
    loss: float,
    config: GuidanceConfig,
) -> float:
    """Guidance scale for the current step.

    A configured ``fixed_scale`` wins regardless of the other inputs.
    Otherwise the scale is the clamped first-order estimate
    ((x_t - mu) . grad - C) / max(loss, floor).
    """
    if config.fixed_scale is not None:
        return float(config.fixed_scale)
    if not math.isfinite(loss):
        raise NumericError(f"reblur loss is non-finite ({loss})")
    inner = float(np.sum((x_t.values - mu.values) * grad_x.values))
    if not math.isfinite(inner):
        raise NumericError(f"guidance inner product is non-finite ({inner})")
    raw = (inner - config.C) / max(loss, config.loss_floor)
    return float(min(max(raw, config.s_min), config.s_max))


def guided_reverse_step(
    schedule: NoiseSchedule,
    denoiser,
    kernel: BlurKernel,
    y_prime: Field,
    x_t: Field,
    t: int,
    config: GuidanceConfig,
    rng,
) -> tuple[Field, StepRecord]:
    """One reverse step; mutates ``kernel`` in place, returns (x_{t-1}, record).

    ``x_t`` and ``y_prime`` are both model-unit fields here.  Non-finite
    values abort with a NumericError naming the stage that produced them.
    """
    require_units(x_t, MODEL_UNITS, "x_t")
    require_units(y_prime, MODEL_UNITS, "y_prime")
    schedule._check_step(t)
    stage_idx, stage_name = 1, "clean estimate"
    try:
        eps_hat = denoiser.predict_noise(x_t, t, schedule)
        x0_est = estimate_x0(schedule, x_t, t, eps_hat)
        if config.clamp_x0:
            x0_est = Field(np.clip(x0_est.values, -1.0, 1.0), MODEL_UNITS)

        stage_idx, stage_name = 2, "reblur distance"
        loss = distance(kernel, x0_est, y_prime)
        grad_x = grad_wrt_field(kernel, x0_est, y_prime)
        grad_k = None if config.fixed_kernel else grad_wrt_kernel(kernel, x0_est, y_prime)

        stage_idx, stage_name = 3, "guidance scale"
        mu_unguided, _ = posterior_stats(schedule, x0_est, x_t, t)
        s = auto_scale(schedule, x_t, mu_unguided, grad_x, loss, config)

        stage_idx, stage_name = 4, "guidance shift"
        abar_t = schedule.alpha_bar(t)
        abar_prev = schedule.alpha_bar(t - 1)
        shift = s * (1.0 - abar_t) / (math.sqrt(abar_prev) * schedule.beta(t))
        x0_guided = Field(x0_est.values - shift * grad_x.values, MODEL_UNITS)

        stage_idx, stage_name = 5, "posterior statistics"
        mu, var = posterior_stats(schedule, x0_guided, x_t, t)

        stage_idx, stage_name = 6, "ancestral draw"
        if t > 1:
            values = mu.values + math.sqrt(var) * rng.standard_normal(mu.shape)
        else:
            values = mu.values
        x_prev = Field(values, MODEL_UNITS)

        stage_idx, stage_name = 7, "kernel update"
        if not config.fixed_kernel:
            kernel.params -= kernel_lr_at(config, schedule, t) * grad_k
            if not np.all(np.isfinite(kernel.params)):
                raise NumericError("kernel parameters went non-finite")
    except NumericError as exc:
        raise NumericError(f"step t={t}, stage {stage_idx} ({stage_name}): {exc}") from exc
    record = StepRecord(t=t, loss=loss, scale=s, kernel_mean=kernel.mean())
    return x_prev, record


def postcast_deblur(
    schedule: NoiseSchedule,
    denoiser,
    y_prime: Field,
    config: GuidanceConfig = GuidanceConfig(),
    seed=0,
    kernel_config: KernelConfig = KernelConfig(),
) -> SamplerTrace:
    """Deblur a data-unit field by guiding an unconditional reverse run.

    Returns a SamplerTrace whose ``x0`` is back in data units, clamped to
    [0, 1], with the refined kernel and one record per step (t = T first).
    On a numeric abort the partial trace is attached to the raised error as
    ``exc.partial_trace``.
    """
    require_units(y_prime, DATA_UNITS, "y_prime")
    rng = np.random.default_rng(seed)
    y_model = to_model(y_prime)
    kernel = init_kernel(
        kernel_config.size, kernel_config.init_mean, kernel_config.init_std, rng
    )
    x = Field(rng.standard_normal(y_prime.shape), MODEL_UNITS)
    records = []
    for t in range(schedule.T, 0, -1):
        try:
            x, record = guided_reverse_step(
                schedule, denoiser, kernel, y_model, x, t, config, rng
            )
        except NumericError as exc:
            exc.partial_trace = SamplerTrace(records=records, x0=None, kernel=kernel)
            raise
        records.append(record)
    x0 = clamp01(to_data(x))
    return SamplerTrace(records=records, x0=x0, kernel=kernel)


# ---------------------------------------------------------------------------
# Unguided ancestral sampling (baseline and distribution checks)
# ---------------------------------------------------------------------------


def unguided_reverse_step(
    schedule: NoiseSchedule, denoiser, x_t: Field, t: int, rng, clamp_x0: bool = True
) -> Field:
    """One plain DDPM ancestral step (no guidance, no kernel)."""
    require_units(x_t, MODEL_UNITS, "x_t")
    schedule._check_step(t)
    eps_hat = denoiser.predict_noise(x_t, t, schedule)
    x0_est = estimate_x0(schedule, x_t, t, eps_hat)
    if clamp_x0:
        x0_est = Field(np.clip(x0_est.values, -1.0, 1.0), MODEL_UNITS)
    mu, var = posterior_stats(schedule, x0_est, x_t, t)
    if t > 1:
        return Field(mu.values + math.sqrt(var) * rng.standard_normal(mu.shape), MODEL_UNITS)
    return mu


def unguided_sample(
    schedule: NoiseSchedule,
    denoiser,
    height: int,
    width: int,
    seed=0,
    clamp_x0: bool = True,
) -> Field:
    """Draw one model-unit field from the prior via the full reverse chain."""
    rng = np.random.default_rng(seed)
    x = Field(rng.standard_normal((height, width)), MODEL_UNITS)
    for t in range(schedule.T, 0, -1):
        x = unguided_reverse_step(schedule, denoiser, x, t, rng, clamp_x0)
    return x
