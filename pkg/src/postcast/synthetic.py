"""Synthetic precipitation-like fields, planted blurs, and the mixture prior.

Fields are sums of anisotropic Gaussian bumps (a Poisson number per field)
over a small positive noise floor, clipped to [0, 1].  ``plant_blur`` pairs a
clean field with a blurry one produced by a known kernel so recovery can be
scored against ground truth; severity plays the role of forecast lead time
(0 is the identity kernel).  ``fit_gmm_prior`` fits the isotropic mixture the
analytic denoiser runs on, via seeded k-means initialization and EM over
flattened model-unit fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .denoisers import GaussianMixtureModel
from .errors import DataError, ParameterError
from .fields import DATA_UNITS, Field, to_model
from .kernel import BlurKernel, convolve

BLUR_FAMILIES = ("gaussian", "motion", "mixed")


@dataclass(frozen=True)
class FieldSpec:
    """Shape and texture of generated fields."""

    height: int = 64
    width: int = 64
    cells_mean: float = 4.0
    amplitude_range: tuple = (0.3, 0.95)
    sigma_range: tuple = (2.0, 9.0)
    anisotropy_range: tuple = (0.35, 1.0)
    background_noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ParameterError(f"grid must be positive, got {self.height}x{self.width}")
        if self.cells_mean < 0:
            raise ParameterError(f"cells_mean must be >= 0, got {self.cells_mean}")
        if self.background_noise < 0:
            raise ParameterError(f"background_noise must be >= 0, got {self.background_noise}")


@dataclass(frozen=True)
class PlantedPair:
    """A clean field, its blurred version, and the kernel that links them."""

    clean: Field
    blurry: Field
    kernel_true: BlurKernel
    lead_index: int


def generate_fields(spec: FieldSpec, count: int) -> list:
    """Generate ``count`` fields deterministically from ``spec.seed``."""
    if count < 0:
        raise ParameterError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(spec.seed)
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    fields = []
    for _ in range(count):
        values = np.abs(rng.normal(0.0, spec.background_noise, size=(spec.height, spec.width)))
        n_cells = rng.poisson(spec.cells_mean)
        for _ in range(n_cells):
            cy = rng.uniform(0, spec.height)
            cx = rng.uniform(0, spec.width)
            amp = rng.uniform(*spec.amplitude_range)
            sig_a = rng.uniform(*spec.sigma_range)
            sig_b = sig_a * rng.uniform(*spec.anisotropy_range)
            theta = rng.uniform(0, math.pi)
            dy = ys - cy
            dx = xs - cx
            u = dx * math.cos(theta) + dy * math.sin(theta)
            v = -dx * math.sin(theta) + dy * math.cos(theta)
            values += amp * np.exp(-0.5 * ((u / sig_a) ** 2 + (v / sig_b) ** 2))
        fields.append(Field(np.clip(values, 0.0, 1.0), DATA_UNITS))
    return fields


# ---------------------------------------------------------------------------
# Planted blurs
# ---------------------------------------------------------------------------


def gaussian_blur_kernel(size: int, sigma: float) -> np.ndarray:
    c = size // 2
    ys, xs = np.mgrid[-c : c + 1, -c : c + 1].astype(np.float64)
    k = np.exp(-0.5 * (ys**2 + xs**2) / sigma**2)
    return k / k.sum()


def motion_blur_kernel(size: int, length: float, angle: float) -> np.ndarray:
    """A line streak through the center, deposited with bilinear weights."""
    c = size // 2
    k = np.zeros((size, size))
    steps = max(int(math.ceil(length * 8)), 1)
    for s in np.linspace(-length / 2, length / 2, steps):
        y = c + s * math.sin(angle)
        x = c + s * math.cos(angle)
        y0, x0 = int(math.floor(y)), int(math.floor(x))
        fy, fx = y - y0, x - x0
        for dy2, wy in ((0, 1 - fy), (1, fy)):
            for dx2, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + dy2, x0 + dx2
                if 0 <= yy < size and 0 <= xx < size:
                    k[yy, xx] += wy * wx
    return k / k.sum()


def plant_blur(
    clean: Field,
    family: str = "gaussian",
    severity: int = 1,
    size: int = 9,
    gain: float = 1.0,
    angle: float | None = None,
) -> PlantedPair:
    """Blur ``clean`` with a known kernel whose strength grows with severity.

    severity 0 always yields the identity (delta) kernel, so the blurry field
    equals the clean one.  Kernels are normalized to sum = ``gain`` (1 keeps
    blurry fields inside [0, 1] with no clipping).
    """
    if family not in BLUR_FAMILIES:
        raise ParameterError(f"unknown blur family {family!r}; expected one of {BLUR_FAMILIES}")
    if severity < 0:
        raise ParameterError(f"severity must be >= 0, got {severity}")
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"kernel size must be odd and positive, got {size}")
    if severity == 0:
        params = np.zeros((size, size))
        params[size // 2, size // 2] = 1.0
    elif family == "gaussian":
        params = gaussian_blur_kernel(size, sigma=0.5 + 0.55 * severity)
    elif family == "motion":
        if angle is None:
            angle = math.radians(20.0 + 35.0 * severity)
        params = motion_blur_kernel(size, length=1.0 + 2.0 * severity, angle=angle)
    else:  # mixed
        if angle is None:
            angle = math.radians(20.0 + 35.0 * severity)
        params = 0.5 * gaussian_blur_kernel(size, sigma=0.5 + 0.55 * severity)
        params = params + 0.5 * motion_blur_kernel(size, length=1.0 + 2.0 * severity, angle=angle)
    kernel = BlurKernel(gain * params)
    blurry = convolve(kernel, clean)
    return PlantedPair(clean=clean, blurry=blurry, kernel_true=kernel, lead_index=severity)


# ---------------------------------------------------------------------------
# Mixture prior fit
# ---------------------------------------------------------------------------


def _kmeans(x: np.ndarray, k: int, rng, iters: int = 10) -> np.ndarray:
    """Plain Lloyd k-means; returns the final assignment labels."""
    n = x.shape[0]
    centers = x[rng.choice(n, size=k, replace=False)].copy()
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for i in range(k):
            members = x[labels == i]
            if len(members):
                centers[i] = members.mean(axis=0)
    return labels


def fit_gmm_prior(fields, k: int, iters: int = 50, seed: int = 0, return_trace: bool = False):
    """Fit an isotropic Gaussian mixture over flattened model-unit fields.

    Data-unit fields are converted internally; the returned mixture always
    lives in model units (it feeds the diffusion denoiser).  With
    ``return_trace`` the per-iteration log-likelihood comes back too, which
    is non-decreasing under EM.
    """
    fields = list(fields)
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(fields) < k:
        raise DataError(f"need at least k={k} fields, got {len(fields)}")
    shape = fields[0].shape
    model_fields = [to_model(f) if f.units == DATA_UNITS else f for f in fields]
    x = np.stack([f.values.ravel() for f in model_fields])
    n, d = x.shape
    rng = np.random.default_rng(seed)

    labels = _kmeans(x, k, rng)
    weights = np.empty(k)
    means = np.empty((k, d))
    variances = np.empty(k)
    for i in range(k):
        members = x[labels == i]
        if len(members) == 0:
            members = x[rng.choice(n, size=1)]
        weights[i] = max(len(members), 1) / n
        means[i] = members.mean(axis=0)
        variances[i] = max(((members - means[i]) ** 2).mean(), 1e-8)
    weights /= weights.sum()

    trace = []
    for _ in range(iters):
        # E-step: scalar responsibilities per (field, component), via logs.
        sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        log_p = (
            np.log(weights)[None, :]
            - 0.5 * d * np.log(2.0 * np.pi * variances)[None, :]
            - sq / (2.0 * variances)[None, :]
        )
        norm = np.logaddexp.reduce(log_p, axis=1)
        trace.append(float(norm.sum()))
        resp = np.exp(log_p - norm[:, None])
        # M-step.
        total = resp.sum(axis=0)
        weights = total / n
        means = (resp.T @ x) / total[:, None]
        sq = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        variances = np.maximum((resp * sq).sum(axis=0) / (d * total), 1e-8)

    gmm = GaussianMixtureModel(
        weights=weights / weights.sum(),
        means=means.reshape(k, *shape),
        sigmas=np.sqrt(variances),
    )
    return (gmm, trace) if return_trace else gmm
