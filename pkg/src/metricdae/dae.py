"""Denoising autoencoder pieces: corruption, encoder/decoder and the training losses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .metric import MetricLossResult, metric_loss

CHECKPOINT_FORMAT = "metricdae-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class DaeModel:
    encoder: nn.MlpParams
    decoder: nn.MlpParams
    noise_std: float = 1.0
    metric_weight: float = 1.0

    def __post_init__(self):
        if self.noise_std < 0 or self.metric_weight < 0:
            raise ValueError("noise_std and metric_weight must be >= 0")
        if self.encoder.n_out != self.decoder.n_in:
            raise ValueError(
                f"encoder emits {self.encoder.n_out} dims but decoder takes {self.decoder.n_in}"
            )
        if self.decoder.n_out != self.encoder.n_in:
            raise ValueError(
                f"decoder reconstructs {self.decoder.n_out} features, encoder takes {self.encoder.n_in}"
            )

    @property
    def n_features(self) -> int:
        return self.encoder.n_in

    @property
    def latent_dim(self) -> int:
        return self.encoder.n_out

    def n_params(self) -> int:
        return nn.count_params(self.encoder) + nn.count_params(self.decoder)


def build_model(n_features: int = 88, latent_dim: int = 2, hidden: Sequence[int] = (),
                rng: np.random.Generator | None = None, noise_std: float = 1.0,
                metric_weight: float = 1.0) -> DaeModel:
    """Mirror-image encoder/decoder. ReLU follows hidden layers only; latent and
    reconstruction are linear."""
    rng = np.random.default_rng() if rng is None else rng
    enc_sizes = [n_features, *hidden, latent_dim]
    encoder = nn.init_mlp(enc_sizes, rng)
    decoder = nn.init_mlp(enc_sizes[::-1], rng)
    return DaeModel(encoder, decoder, noise_std, metric_weight)


def corrupt(x, noise_std: float, rng: np.random.Generator, mask_fraction: float = 1.0) -> np.ndarray:
    """Additive N(0, noise_std^2) noise. With ``mask_fraction < 1`` only a random
    subset of entries is perturbed."""
    x = np.asarray(x, dtype=np.float64)
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    if not 0.0 <= mask_fraction <= 1.0:
        raise ValueError("mask_fraction must lie in [0, 1]")
    noise = rng.normal(0.0, 1.0, size=x.shape) * noise_std
    if mask_fraction < 1.0:
        noise *= rng.random(size=x.shape) < mask_fraction
    return x + noise


def _check_features(model: DaeModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"expected an (n, {model.n_features}) matrix, got shape {x.shape}")
    return x


def encode(model: DaeModel, x) -> np.ndarray:
    return nn.forward(model.encoder, _check_features(model, x))[0]


def decode(model: DaeModel, z) -> np.ndarray:
    return nn.forward(model.decoder, z)[0]


@dataclass
class LossBreakdown:
    total: float
    rec: float
    metric: MetricLossResult | None
    enc_grads: nn.GradientBundle
    dec_grads: nn.GradientBundle
    z: np.ndarray = field(repr=False)


def reconstruction_loss(model: DaeModel, x_clean, x_noisy) -> tuple[float, nn.GradientBundle, nn.GradientBundle]:
    """Mean squared reconstruction error of ``x_clean`` from ``x_noisy``.

    Returns ``(loss, encoder_grads, decoder_grads)``.
    """
    res = joint_loss(model, x_clean, x_noisy, labels=None)
    return res.rec, res.enc_grads, res.dec_grads


def joint_loss(model: DaeModel, x_clean, x_noisy, labels=None,
               detach_slope: bool = False) -> LossBreakdown:
    """Reconstruction loss plus ``metric_weight`` times the metric loss on the
    latents of the noisy batch. The metric term is dropped when ``labels`` is None,
    the weight is 0 or the batch has a single row."""
    x_clean = _check_features(model, x_clean)
    x_noisy = _check_features(model, x_noisy)
    if x_clean.shape != x_noisy.shape:
        raise ValueError(f"clean {x_clean.shape} and noisy {x_noisy.shape} batches differ")

    z, enc_tape = nn.forward(model.encoder, x_noisy)
    x_hat, dec_tape = nn.forward(model.decoder, z)
    err = x_hat - x_clean
    rec = float(np.mean(err * err))
    dec_grads, grad_z = nn.backward(model.decoder, dec_tape, 2.0 * err / err.size)

    met = None
    total = rec
    if labels is not None and model.metric_weight > 0 and z.shape[0] >= 2:
        met = metric_loss(z, labels, detach_slope=detach_slope)
        if not met.skipped:
            total = rec + model.metric_weight * met.l_met
            grad_z = grad_z + model.metric_weight * met.grad_z
    enc_grads, _ = nn.backward(model.encoder, enc_tape, grad_z)
    return LossBreakdown(total, rec, met, enc_grads, dec_grads, z)


def joint_grad_check(model: DaeModel, x_clean, x_noisy, labels=None, h: float = 1e-5) -> float:
    """Worst relative error of :func:`joint_loss` parameter gradients against
    central differences. Probes that flip a hidden ReLU are skipped."""
    if model.n_params() == 0:
        return 0.0
    res = joint_loss(model, x_clean, x_noisy, labels)
    arrays = model.encoder.arrays() + model.decoder.arrays()
    analytic = res.enc_grads.arrays() + res.dec_grads.arrays()

    def loss():
        return joint_loss(model, x_clean, x_noisy, labels).total

    def pattern():
        z, t1 = nn.forward(model.encoder, x_noisy)
        _, t2 = nn.forward(model.decoder, z)
        return t1.relu_pattern() + t2.relu_pattern()

    has_relu = any(l.activation == "relu" for l in model.encoder.layers + model.decoder.layers)
    return nn.grad_check(arrays, loss, analytic, h=h, pattern_fn=pattern if has_relu else None)


# -- checkpoint files --------------------------------------------------------

def _mlp_to_json(params: nn.MlpParams) -> list[dict]:
    return [
        {"shape": list(l.weight.shape), "activation": l.activation,
         "weight": l.weight.tolist(), "bias": l.bias.tolist()}
        for l in params.layers
    ]


def _mlp_from_json(layers: list[dict]) -> nn.MlpParams:
    out = []
    for entry in layers:
        w = np.array(entry["weight"], dtype=np.float64).reshape(entry["shape"])
        out.append(nn.Dense(w, np.array(entry["bias"], dtype=np.float64), entry["activation"]))
    return nn.MlpParams(out)


def save_checkpoint(path, model: DaeModel, extra: dict | None = None) -> None:
    """Write a JSON checkpoint. Floats are written with ``repr`` so values round-trip exactly."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "noise_std": model.noise_std,
        "metric_weight": model.metric_weight,
        "encoder": _mlp_to_json(model.encoder),
        "decoder": _mlp_to_json(model.decoder),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[DaeModel, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    model = DaeModel(_mlp_from_json(doc["encoder"]), _mlp_from_json(doc["decoder"]),
                     doc["noise_std"], doc["metric_weight"])
    return model, doc.get("extra", {})
