"""Trainable mask estimator: a small feedforward net mapping log-magnitude
features with frame context to per-bin speech presence probability.

Hidden layers are rectified linear with (inverted) dropout during training;
the output layer is logistic, so predictions live strictly in (0, 1).
Training minimizes mean binary cross-entropy by mini-batch gradient descent
with momentum and is bit-reproducible given the seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, TrainingDivergedError

FEATURE_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    epochs: int = 30
    batch_size: int = 128
    seed: int = 0
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise InputError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise InputError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise InputError(f"momentum must be in [0, 1), got {self.momentum}")


@dataclass
class MaskNet:
    """Feedforward mask estimator.

    weights[i] has shape (fan_out, fan_in); biases[i] has shape (fan_out,).
    context is the one-sided frame context the feature extractor used, kept
    with the net so inference can rebuild matching features.
    """

    weights: list
    biases: list
    context: int
    dropout_rate: float = 0.5

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise InputError("weights and biases must be non-empty and aligned")
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != b.shape[0]:
                raise InputError(f"layer shapes disagree: {w.shape} vs {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise InputError("weights must be finite")

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    @property
    def output_dim(self):
        return self.weights[-1].shape[0]

    @property
    def layer_dims(self):
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    @classmethod
    def initialize(cls, freq_bins, context=1, hidden=(512, 512), seed=0,
                   dropout_rate=0.5):
        """He-initialized net for freq_bins outputs and (2*context+1)-frame
        log-magnitude input features."""
        rng = np.random.default_rng(seed)
        dims = [freq_bins * (2 * context + 1), *hidden, freq_bins]
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, context, dropout_rate)


def featurize(spec, channel=0, context=1):
    """Log-magnitude features with frame context, shape (T, F * (2c + 1)).

    Row n concatenates log(|y(:, n')| + floor) for n' = n-c .. n+c (lowest
    offset first); frames beyond the edges replicate the boundary frame.
    The floor is FEATURE_FLOOR_REL times the spectrogram's peak magnitude.
    """
    if context < 0:
        raise InputError(f"context must be >= 0, got {context}")
    mag = np.abs(spec.data[:, :, channel])
    floor = FEATURE_FLOOR_REL * max(mag.max(), 1e-300)
    logmag = np.log(mag + floor)
    f, t = logmag.shape
    blocks = []
    for off in range(-context, context + 1):
        idx = np.clip(np.arange(t) + off, 0, t - 1)
        blocks.append(logmag[:, idx].T)
    return np.concatenate(blocks, axis=1)


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_full(net, features, dropout_rng=None):
    """All layer activations; inverted dropout applied when an rng is given.

    Returns (acts, pre, drop) where drop[i] is the mask applied after hidden
    layer i (None when dropout was off)."""
    acts = [features]
    pre = []
    drop = []
    h = features
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre.append(z)
        if i < n_layers - 1:
            h = _relu(z)
            if dropout_rng is not None and net.dropout_rate > 0.0:
                keep = 1.0 - net.dropout_rate
                mask = (dropout_rng.uniform(size=h.shape) < keep) / keep
                h = h * mask
                drop.append(mask)
            else:
                drop.append(None)
            acts.append(h)
        else:
            h = _sigmoid(z)
            acts.append(h)
    return acts, pre, drop


def forward(net, features):
    """Deterministic inference (dropout disabled) -> mask values (F, T).

    Outputs are clipped away from {0, 1} by 1e-12 so the strict (0, 1)
    codomain survives float saturation of the logistic.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != net.input_dim:
        raise InputError(
            f"features must be (T, {net.input_dim}), got shape {features.shape}"
        )
    acts, _, _ = _forward_full(net, features)
    return np.clip(acts[-1].T, 1e-12, 1.0 - 1e-12)


def _bce_loss(logits, targets):
    # softplus(z) - t*z, stable for both signs of z
    return float(np.mean(np.logaddexp(0.0, logits) - targets * logits))


def _backward(net, acts, pre, drop, targets):
    """Gradients of mean BCE w.r.t. every weight and bias."""
    n, f = targets.shape
    probs = acts[-1]
    delta = (probs - targets) / (n * f)
    grads_w, grads_b = [], []
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w.append(delta.T @ acts[i])
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = delta @ net.weights[i]
            if drop[i - 1] is not None:
                delta = delta * drop[i - 1]
            delta = delta * (pre[i - 1] > 0.0)
    grads_w.reverse()
    grads_b.reverse()
    return grads_w, grads_b


def dataset_loss(net, dataset):
    """Mean BCE over a dataset of (features, target) pairs, dropout off."""
    total, count = 0.0, 0
    for feats, targets in dataset:
        _, pre, _ = _forward_full(net, feats)
        total += np.sum(np.logaddexp(0.0, pre[-1]) - targets * pre[-1])
        count += targets.size
    return total / count


def loss_and_gradients(net, features, targets):
    """Mean BCE and its analytic gradients, dropout off (for verification
    against finite differences as much as for debugging)."""
    acts, pre, drop = _forward_full(net, features)
    loss = _bce_loss(pre[-1], targets)
    grads_w, grads_b = _backward(net, acts, pre, drop, targets)
    return loss, grads_w, grads_b


def train(net, dataset, cfg=None):
    """Mini-batch gradient descent with momentum on binary cross-entropy.

    dataset: sequence of (features (T, D), binary targets (T, F)) pairs.
    Returns (net, loss_trace) where loss_trace[0] is the pre-training
    dataset loss (dropout off) and loss_trace[e] the loss after epoch e.
    Raises TrainingDivergedError (reporting the epoch) on non-finite loss.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise InputError("dataset must contain at least one example")
    feats = np.concatenate([np.asarray(f, dtype=np.float64) for f, _ in dataset])
    targets = np.concatenate([np.asarray(t, dtype=np.float64) for _, t in dataset])
    if feats.shape[0] != targets.shape[0]:
        raise InputError("features and targets disagree on frame count")
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise InputError("targets must be binary")
    if feats.shape[1] != net.input_dim or targets.shape[1] != net.output_dim:
        raise InputError(
            f"dataset dims ({feats.shape[1]}, {targets.shape[1]}) do not match "
            f"net ({net.input_dim}, {net.output_dim})"
        )
    rng = np.random.default_rng(cfg.seed)
    velocity_w = [np.zeros_like(w) for w in net.weights]
    velocity_b = [np.zeros_like(b) for b in net.biases]
    n = feats.shape[0]
    loss_trace = [dataset_loss(net, [(feats, targets)])]
    net = MaskNet([w.copy() for w in net.weights], [b.copy() for b in net.biases],
                  net.context, cfg.dropout_rate)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            acts, pre, drop = _forward_full(net, feats[sel], dropout_rng=rng)
            loss = _bce_loss(pre[-1], targets[sel])
            if not np.isfinite(loss):
                raise TrainingDivergedError("training loss is not finite", epoch=epoch)
            grads_w, grads_b = _backward(net, acts, pre, drop, targets[sel])
            for i in range(len(net.weights)):
                velocity_w[i] = cfg.momentum * velocity_w[i] - cfg.learning_rate * grads_w[i]
                velocity_b[i] = cfg.momentum * velocity_b[i] - cfg.learning_rate * grads_b[i]
                net.weights[i] += velocity_w[i]
                net.biases[i] += velocity_b[i]
        epoch_loss = dataset_loss(net, [(feats, targets)])
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError("training loss is not finite", epoch=epoch)
        loss_trace.append(epoch_loss)
    return net, loss_trace


def predict_masks(net, spec, context=None):
    """Per-channel speech masks (F, T, M) from a trained net.

    Uses the net's stored context by default; featurize + forward per channel.
    """
    from .mask import MaskTensor

    context = net.context if context is None else context
    out = np.empty((spec.num_bins, spec.num_frames, spec.num_channels))
    for m in range(spec.num_channels):
        out[:, :, m] = forward(net, featurize(spec, m, context))
    return MaskTensor(np.clip(out, 0.0, 1.0), "speech")
