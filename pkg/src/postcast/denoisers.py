"""Noise predictors that drive the reverse diffusion.

Two interchangeable denoisers implement ``predict_noise(x_t, t, schedule)``:

* :class:`GaussianMixtureModel` -- an analytic oracle.  For a mixture prior
  over flattened fields with isotropic components (w_i, m_i, sigma_i), the
  posterior mean of x_0 given x_t is closed form.  With v_i = abar * sigma_i^2
  + (1 - abar) and responsibilities r_i ~ w_i N(x_t; sqrt(abar) m_i, v_i I):

      E[x0 | x_t] = sum_i r_i [ m_i + (sqrt(abar) sigma_i^2 / v_i)(x_t - sqrt(abar) m_i) ]
      eps_hat     = (x_t - sqrt(abar) E[x0 | x_t]) / sqrt(1 - abar)

* :class:`ConvDenoiser` -- a tiny convolutional net (edge-clamped 3x3 convs,
  tanh hidden activations, a per-channel bias scaled by t / T as the time
  input), trained on the usual noise-matching objective E ||eps - eps_hat||^2
  with manual backpropagation.  It exists to show the sampler is oracle-
  agnostic, not to compete with real score networks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.special import logsumexp

from .diffusion import NoiseSchedule, forward_sample
from .errors import (
    DataError,
    GridFileError,
    MagicError,
    ParameterError,
    ShapeError,
    StepRangeError,
    TrainingError,
    TruncationError,
)
from .fields import MODEL_UNITS, Field, require_units
from .kernel import (
    correlate2d_clamped,
    correlate2d_clamped_adjoint,
    correlate2d_clamped_weight_grad,
)


class Denoiser(Protocol):
    def predict_noise(self, x_t: Field, t: int, schedule: NoiseSchedule) -> Field: ...


# ---------------------------------------------------------------------------
# Analytic Gaussian-mixture oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianMixtureModel:
    """Isotropic Gaussian mixture over flattened model-unit fields."""

    weights: np.ndarray  # (k,)
    means: np.ndarray    # (k, H, W)
    sigmas: np.ndarray   # (k,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        m = np.asarray(self.means, dtype=np.float64)
        s = np.asarray(self.sigmas, dtype=np.float64)
        if m.ndim != 3 or w.ndim != 1 or s.ndim != 1:
            raise ShapeError(
                f"expected weights (k,), means (k, H, W), sigmas (k,); got "
                f"{w.shape}, {m.shape}, {s.shape}"
            )
        k = m.shape[0]
        if not (len(w) == len(s) == k and k >= 1):
            raise ShapeError("component counts disagree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
            raise ParameterError("mixture parameters must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ParameterError(f"weights must be >= 0 and sum to 1, got sum {w.sum()!r}")
        if np.any(s <= 0):
            raise ParameterError("sigmas must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "sigmas", s)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def field_shape(self) -> tuple[int, int]:
        return self.means.shape[1:]

    def predict_noise(self, x_t: Field, t: int, schedule: NoiseSchedule) -> Field:
        return gmm_predict_noise(self, schedule, x_t, t)


def _gmm_responsibilities(gmm, abar: float, x: np.ndarray) -> np.ndarray:
    d = x.size
    variances = abar * gmm.sigmas**2 + (1.0 - abar)
    sq = np.sum(
        (x[None, :, :] - np.sqrt(abar) * gmm.means) ** 2, axis=(1, 2)
    )
    log_r = np.log(gmm.weights) - 0.5 * d * np.log(2.0 * np.pi * variances) - sq / (2.0 * variances)
    return np.exp(log_r - logsumexp(log_r))


def gmm_posterior_mean(
    gmm: GaussianMixtureModel, schedule: NoiseSchedule, x_t: Field, t: int
) -> Field:
    """Exact E[x0 | x_t] under the mixture prior and the forward kernel."""
    require_units(x_t, MODEL_UNITS, "x_t")
    if x_t.shape != gmm.field_shape:
        raise ShapeError(f"x_t shape {x_t.shape} != mixture field shape {gmm.field_shape}")
    schedule._check_step(t)
    abar = schedule.alpha_bar(t)
    root_abar = np.sqrt(abar)
    variances = abar * gmm.sigmas**2 + (1.0 - abar)
    resp = _gmm_responsibilities(gmm, abar, x_t.values)
    shrink = root_abar * gmm.sigmas**2 / variances
    comp = gmm.means + shrink[:, None, None] * (x_t.values[None] - root_abar * gmm.means)
    return Field(np.tensordot(resp, comp, axes=1), MODEL_UNITS)


def gmm_predict_noise(
    gmm: GaussianMixtureModel, schedule: NoiseSchedule, x_t: Field, t: int
) -> Field:
    """Noise estimate implied by the posterior mean of x0 (t >= 1 only)."""
    if t == 0:
        raise StepRangeError("t=0 has no noise to predict (alpha_bar_0 = 1)")
    mean_x0 = gmm_posterior_mean(gmm, schedule, x_t, t)
    abar = schedule.alpha_bar(t)
    eps = (x_t.values - np.sqrt(abar) * mean_x0.values) / np.sqrt(1.0 - abar)
    return Field(eps, MODEL_UNITS)


def gmm_sample(gmm: GaussianMixtureModel, rng) -> Field:
    """Draw one model-unit field from the mixture."""
    rng = np.random.default_rng(rng)
    i = rng.choice(gmm.n_components, p=gmm.weights)
    values = gmm.means[i] + gmm.sigmas[i] * rng.standard_normal(gmm.field_shape)
    return Field(values, MODEL_UNITS)


# ---------------------------------------------------------------------------
# Small convolutional denoiser with manual backprop
# ---------------------------------------------------------------------------


@dataclass
class ConvLayer:
    weights: np.ndarray    # (c_out, c_in, k, k)
    bias: np.ndarray       # (c_out,)
    time_bias: np.ndarray  # (c_out,)


@dataclass
class ConvDenoiser:
    """1 -> channels... -> 1 stack of edge-clamped convolutions.

    Hidden activations are tanh; the last layer is linear.  Each layer adds
    ``bias + (t / T) * time_bias`` per channel, which is all the time
    conditioning a net this small can use.
    """

    layers: list

    @property
    def parameter_count(self) -> int:
        return sum(l.weights.size + l.bias.size + l.time_bias.size for l in self.layers)

    def predict_noise(self, x_t: Field, t: int, schedule: NoiseSchedule) -> Field:
        require_units(x_t, MODEL_UNITS, "x_t")
        schedule._check_step(t)
        out, _ = conv_forward(self, x_t.values, t / schedule.T)
        return Field(out, MODEL_UNITS)


def init_conv_denoiser(channels=(8,), kernel_size: int = 3, seed=None) -> ConvDenoiser:
    """Random small net; ``channels`` lists the hidden channel counts."""
    channels = tuple(int(c) for c in channels)
    if len(channels) == 0:
        raise ParameterError("need at least one hidden layer of channels")
    if any(c < 1 for c in channels):
        raise ParameterError(f"channel counts must be positive, got {channels}")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError(f"conv kernel size must be odd, got {kernel_size}")
    rng = np.random.default_rng(seed)
    widths = (1,) + channels + (1,)
    layers = []
    for c_in, c_out in zip(widths[:-1], widths[1:]):
        scale = 1.0 / np.sqrt(c_in * kernel_size * kernel_size)
        layers.append(
            ConvLayer(
                weights=rng.normal(0.0, scale, size=(c_out, c_in, kernel_size, kernel_size)),
                bias=np.zeros(c_out),
                time_bias=rng.normal(0.0, 0.1, size=c_out),
            )
        )
    return ConvDenoiser(layers)


def conv_forward(net: ConvDenoiser, x: np.ndarray, t_frac: float):
    """Run the net on one (H, W) array; returns (output, cache for backprop)."""
    h = x[None, :, :]
    cache = []
    n_layers = len(net.layers)
    for li, layer in enumerate(net.layers):
        c_out = layer.weights.shape[0]
        z = np.empty((c_out,) + x.shape)
        for o in range(c_out):
            acc = np.zeros(x.shape)
            for i in range(h.shape[0]):
                acc += correlate2d_clamped(h[i], layer.weights[o, i])
            z[o] = acc + layer.bias[o] + t_frac * layer.time_bias[o]
        last = li == n_layers - 1
        out = z if last else np.tanh(z)
        cache.append((h, out, last))
        h = out
    return h[0], cache


def conv_backward(net: ConvDenoiser, cache, d_out: np.ndarray, t_frac: float):
    """Backprop ``d_out`` (gradient at the net output) to all parameters.

    Returns a list of ConvLayer-shaped gradient triples, outermost layer last
    (same order as ``net.layers``).
    """
    grads = [None] * len(net.layers)
    dh = d_out[None, :, :]
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        h_in, h_out, last = cache[li]
        dz = dh if last else dh * (1.0 - h_out**2)
        c_out, c_in, k, _ = layer.weights.shape
        dw = np.empty_like(layer.weights)
        dh_in = np.zeros_like(h_in)
        for o in range(c_out):
            for i in range(c_in):
                dw[o, i] = correlate2d_clamped_weight_grad(h_in[i], dz[o], k)
                dh_in[i] += correlate2d_clamped_adjoint(dz[o], layer.weights[o, i])
        db = dz.sum(axis=(1, 2))
        dtb = t_frac * db
        grads[li] = ConvLayer(weights=dw, bias=db, time_bias=dtb)
        dh = dh_in
    return grads


def denoiser_loss_and_grads(net: ConvDenoiser, x_t: np.ndarray, t_frac: float, target: np.ndarray):
    """Mean-squared noise-matching loss and its parameter gradients."""
    out, cache = conv_forward(net, x_t, t_frac)
    r = out - target
    loss = float(np.mean(r * r))
    grads = conv_backward(net, cache, (2.0 / r.size) * r, t_frac)
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 1e-2
    seed: int = 0
    channels: tuple = (8,)
    kernel_size: int = 3


def train_conv_denoiser(dataset, schedule: NoiseSchedule, config: TrainConfig = TrainConfig()):
    """SGD on E ||eps - eps_hat(x_t, t)||^2 over the clean model-unit fields.

    Returns (trained net, per-epoch mean loss trace).  Raises TrainingError
    (carrying the last finite loss) if the loss goes non-finite.
    """
    dataset = list(dataset)
    if not dataset:
        raise DataError("training dataset is empty")
    for f in dataset:
        require_units(f, MODEL_UNITS, "training field")
    if config.epochs < 1 or config.batch_size < 1:
        raise ParameterError("epochs and batch_size must be >= 1")
    if config.learning_rate <= 0:
        raise ParameterError(f"learning rate must be > 0, got {config.learning_rate}")
    rng = np.random.default_rng(config.seed)
    net = init_conv_denoiser(config.channels, config.kernel_size, rng)
    trace = []
    last_finite = None
    for _ in range(config.epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            batch_grads = None
            batch_loss = 0.0
            for idx in batch:
                x0 = dataset[idx]
                t = int(rng.integers(1, schedule.T + 1))
                noise = Field(rng.standard_normal(x0.shape), MODEL_UNITS)
                x_t = forward_sample(schedule, x0, t, noise)
                loss, grads = denoiser_loss_and_grads(
                    net, x_t.values, t / schedule.T, noise.values
                )
                batch_loss += loss
                if batch_grads is None:
                    batch_grads = grads
                else:
                    for acc, g in zip(batch_grads, grads):
                        acc.weights += g.weights
                        acc.bias += g.bias
                        acc.time_bias += g.time_bias
            batch_loss /= len(batch)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"training loss went non-finite (last finite loss {last_finite})",
                    last_loss=last_finite,
                )
            last_finite = batch_loss
            epoch_losses.append(batch_loss)
            lr = config.learning_rate / len(batch)
            for layer, g in zip(net.layers, batch_grads):
                layer.weights -= lr * g.weights
                layer.bias -= lr * g.bias
                layer.time_bias -= lr * g.time_bias
        trace.append(float(np.mean(epoch_losses)))
    return net, trace


# ---------------------------------------------------------------------------
# Serialization: versioned little-endian binary blobs
# ---------------------------------------------------------------------------

DENOISER_MAGIC = b"PCDN"
DENOISER_VERSION = 1
GMM_MAGIC = b"PCGM"
GMM_VERSION = 1


def save_denoiser(path, net: ConvDenoiser) -> None:
    """Write a ConvDenoiser blob: magic, version, layer shapes, f32 params."""
    parts = [DENOISER_MAGIC, struct.pack("<II", DENOISER_VERSION, len(net.layers))]
    for layer in net.layers:
        c_out, c_in, k, _ = layer.weights.shape
        parts.append(struct.pack("<III", c_out, c_in, k))
        for arr in (layer.weights, layer.bias, layer.time_bias):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_denoiser(path) -> ConvDenoiser:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != DENOISER_MAGIC:
        raise MagicError(f"bad denoiser magic {blob[:4]!r}, expected {DENOISER_MAGIC!r}")
    if len(blob) < 12:
        raise TruncationError(f"denoiser blob has {len(blob)} bytes, header needs 12")
    version, n_layers = struct.unpack_from("<II", blob, 4)
    if version != DENOISER_VERSION:
        raise GridFileError(f"unsupported denoiser format version {version}")
    off = 12
    layers = []
    for _ in range(n_layers):
        if off + 12 > len(blob):
            raise TruncationError("denoiser blob ends inside a layer header")
        c_out, c_in, k, = struct.unpack_from("<III", blob, off)
        off += 12
        arrays = []
        for shape in ((c_out, c_in, k, k), (c_out,), (c_out,)):
            count = int(np.prod(shape))
            nbytes = 4 * count
            if off + nbytes > len(blob):
                raise TruncationError(
                    f"denoiser blob truncated: wanted {nbytes} bytes at offset {off}, "
                    f"file has {len(blob)}"
                )
            arrays.append(
                np.frombuffer(blob, dtype="<f4", count=count, offset=off)
                .astype(np.float64)
                .reshape(shape)
            )
            off += nbytes
        layers.append(ConvLayer(*arrays))
    return ConvDenoiser(layers)


def save_gmm(path, gmm: GaussianMixtureModel) -> None:
    """Write a mixture blob: magic, version, (k, H, W), f64 params."""
    k, h, w = gmm.means.shape
    parts = [
        GMM_MAGIC,
        struct.pack("<IIII", GMM_VERSION, k, h, w),
        np.ascontiguousarray(gmm.weights, dtype="<f8").tobytes(),
        np.ascontiguousarray(gmm.sigmas, dtype="<f8").tobytes(),
        np.ascontiguousarray(gmm.means, dtype="<f8").tobytes(),
    ]
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_gmm(path) -> GaussianMixtureModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != GMM_MAGIC:
        raise MagicError(f"bad mixture magic {blob[:4]!r}, expected {GMM_MAGIC!r}")
    if len(blob) < 20:
        raise TruncationError(f"mixture blob has {len(blob)} bytes, header needs 20")
    version, k, h, w = struct.unpack_from("<IIII", blob, 4)
    if version != GMM_VERSION:
        raise GridFileError(f"unsupported mixture format version {version}")
    expected = 20 + 8 * (k + k + k * h * w)
    if len(blob) < expected:
        raise TruncationError(f"mixture blob has {len(blob)} bytes, expected {expected}")
    off = 20
    weights = np.frombuffer(blob, dtype="<f8", count=k, offset=off).copy()
    off += 8 * k
    sigmas = np.frombuffer(blob, dtype="<f8", count=k, offset=off).copy()
    off += 8 * k
    means = np.frombuffer(blob, dtype="<f8", count=k * h * w, offset=off).reshape(k, h, w).copy()
    return GaussianMixtureModel(weights=weights, means=means, sigmas=sigmas)
