"""End-to-end gradient training of a detector pair on raw features.

Each view gets a small dense network with rectifier hidden layers and a
sigmoid scalar output. Training maximizes the unsupervised F-beta on
minibatches, with a sigmoid "wall" penalty holding the mean rates below
0.5 and a magnitude penalty on the output logits to prevent railing.
Backpropagation is written out by hand: the metric's per-example
gradient is ``(c1 * p_other - c2) / n`` with the two closed-form batch
constants, then reverse mode through the layers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import TrainingDiverged
from .metric import MetricParams, fbeta_hat_moments

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LOGIT_CLAMP = 30.0
PROB_EPS = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class Mlp:
    """Dense layers with rectifier hidden activations and a sigmoid scalar output."""

    weights: list  # per layer, shape (out, in)
    biases: list   # per layer, shape (out,)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp(weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])


@dataclass
class MlpPair:
    """One network per view; the product of the two outputs is the joint score."""

    net_s: Mlp
    net_q: Mlp
    seed: int

    def copy(self) -> "MlpPair":
        return MlpPair(net_s=self.net_s.copy(), net_q=self.net_q.copy(), seed=self.seed)


def init_mlp(layer_sizes: Sequence[int], rng: np.random.Generator) -> Mlp:
    """Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out))."""
    if len(layer_sizes) < 2 or layer_sizes[-1] != 1:
        raise ValueError("layer sizes must end in a scalar output layer")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        a = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-a, a, size=fan_out))
    return Mlp(weights=weights, biases=biases)


def init_mlp_pair(d_s: int, d_q: int, hidden: Sequence[int] = (8, 8), seed: int = 0) -> MlpPair:
    rng = np.random.Generator(np.random.PCG64(seed))
    net_s = init_mlp([d_s, *hidden, 1], rng)
    net_q = init_mlp([d_q, *hidden, 1], rng)
    return MlpPair(net_s=net_s, net_q=net_q, seed=seed)


def _forward_cached(net: Mlp, x: np.ndarray):
    """Batch forward pass keeping activations for the backward pass."""
    acts = [x]
    pre = None
    h = x
    n_layers = len(net.weights)
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        pre = h @ w.T + b
        if k < n_layers - 1:
            h = np.maximum(pre, 0.0)
            acts.append(h)
    logits = pre[:, 0]
    p = np.clip(sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS)
    return p, logits, acts


def forward(net: Mlp, x) -> np.ndarray:
    """Anomaly probability for a feature vector or a batch of rows."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != net.weights[0].shape[1]:
        raise ValueError(
            f"input has {arr.shape[1]} features, network expects {net.weights[0].shape[1]}")
    p, _, _ = _forward_cached(net, arr)
    return float(p[0]) if single else p


def _backward(net: Mlp, acts: list, dlogits: np.ndarray):
    """Gradients of all layer parameters given d(objective)/d(output logits)."""
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    delta = dlogits[:, None]
    for k in range(len(net.weights) - 1, -1, -1):
        grads_w[k] = delta.T @ acts[k]
        grads_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ net.weights[k]) * (acts[k] > 0.0)
    return grads_w, grads_b


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the gradient training loop."""

    params: MetricParams
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 256
    lambda_wall: float = 1.0
    lambda_mag: float = 0.0
    wall_temperature: float = 50.0
    validation_fraction: float = 0.2
    early_stop_patience: int = 10
    seed: int = 0
    hidden: tuple = (8, 8)

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 2:
            raise ValueError("learning_rate must be positive and batch_size >= 2")
        if self.epochs < 0 or self.early_stop_patience < 1:
            raise ValueError("epochs must be >= 0 and early_stop_patience >= 1")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.wall_temperature <= 0 or self.lambda_wall < 0 or self.lambda_mag < 0:
            raise ValueError("wall_temperature must be positive, penalty weights nonnegative")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_fbeta: float
    val_mu_s: float
    val_mu_q: float
    val_mu_sq: float


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    stopping_reason: str = "not-started"


def _metric_grad_constants(mu_s: float, mu_q: float, mu_sq: float,
                           beta: float, alpha: float):
    """(fhat, c1, c2_s, c2_q); factored so the covariance never divides 0/0."""
    cov = mu_sq - mu_s * mu_q
    if cov == 0.0:
        # exactly at the random-guess point: the metric term contributes
        # zero value and, by convention, zero gradient
        return 0.0, 0.0, 0.0, 0.0
    boost = (1.0 - mu_sq) / ((1.0 - mu_s) * (1.0 - mu_q))
    if math.isinf(beta):
        pref = 1.0 / alpha
        kappa_term = 0.0
    else:
        pref = (1.0 + beta * beta) / (mu_sq + alpha * beta * beta)
        kappa_term = 1.0 / (mu_sq + alpha * beta * beta)
    g = pref * boost  # fhat / cov, computed without the 0/0
    fhat = g * cov
    c1 = g - fhat * (1.0 / (1.0 - mu_sq) + kappa_term)
    c2_s = g * (mu_q - mu_sq) / (1.0 - mu_s)
    c2_q = g * (mu_s - mu_sq) / (1.0 - mu_q)
    return fhat, c1, c2_s, c2_q


def loss_and_grads(pair: MlpPair, s_batch: np.ndarray, q_batch: np.ndarray,
                   config: TrainConfig):
    """Training loss and analytic gradients for one minibatch.

    Loss = -fbeta_hat + lambda_wall * wall(mu_s, mu_q) + lambda_mag *
    mean(clamped logits squared). Returns (loss, (grads_s, grads_q),
    stats dict).
    """
    s = np.asarray(s_batch, dtype=np.float64)
    q = np.asarray(q_batch, dtype=np.float64)
    if s.shape[0] != q.shape[0] or s.shape[0] < 2:
        raise ValueError("batch must contain >= 2 aligned examples")
    n = s.shape[0]
    p_s, logit_s, acts_s = _forward_cached(pair.net_s, s)
    p_q, logit_q, acts_q = _forward_cached(pair.net_q, q)
    mu_s = float(p_s.mean())
    mu_q = float(p_q.mean())
    mu_sq = float((p_s * p_q).mean())

    fhat, c1, c2_s, c2_q = _metric_grad_constants(
        mu_s, mu_q, mu_sq, config.params.beta, config.params.alpha)
    dfhat_dps = (c1 * p_q - c2_s) / n
    dfhat_dpq = (c1 * p_s - c2_q) / n

    t = config.wall_temperature
    wall = 0.0
    dwall_dps = np.zeros(n)
    dwall_dpq = np.zeros(n)
    if config.lambda_wall > 0:
        for mu, out in ((mu_s, "s"), (mu_q, "q")):
            u = t * (mu - 0.5)
            sig = float(sigmoid(np.array([u]))[0])
            wall += mu * sig
            dmu = sig + mu * t * sig * (1.0 - sig)
            if out == "s":
                dwall_dps += dmu / n
            else:
                dwall_dpq += dmu / n

    clamped_s = np.clip(logit_s, -LOGIT_CLAMP, LOGIT_CLAMP)
    clamped_q = np.clip(logit_q, -LOGIT_CLAMP, LOGIT_CLAMP)
    mag = float((clamped_s ** 2 + clamped_q ** 2).mean())
    dmag_dlogit_s = 2.0 * clamped_s * (np.abs(logit_s) < LOGIT_CLAMP) / n
    dmag_dlogit_q = 2.0 * clamped_q * (np.abs(logit_q) < LOGIT_CLAMP) / n

    loss = -fhat + config.lambda_wall * wall + config.lambda_mag * mag
    if not math.isfinite(loss):
        raise TrainingDiverged(f"loss became non-finite ({loss})")

    dloss_dps = -dfhat_dps + config.lambda_wall * dwall_dps
    dloss_dpq = -dfhat_dpq + config.lambda_wall * dwall_dpq
    dlogit_s = dloss_dps * p_s * (1.0 - p_s) + config.lambda_mag * dmag_dlogit_s
    dlogit_q = dloss_dpq * p_q * (1.0 - p_q) + config.lambda_mag * dmag_dlogit_q

    grads_s = _backward(pair.net_s, acts_s, dlogit_s)
    grads_q = _backward(pair.net_q, acts_q, dlogit_q)
    stats = {"fbeta_hat": fhat, "mu_s": mu_s, "mu_q": mu_q, "mu_sq": mu_sq,
             "c1": c1, "c2_s": c2_s, "c2_q": c2_q}
    return loss, (grads_s, grads_q), stats


def fbeta_grads(pair: MlpPair, s_batch, q_batch, params: MetricParams):
    """Gradients of the raw metric alone (no penalties); for gradient checks."""
    config = TrainConfig(params=params, lambda_wall=0.0, lambda_mag=0.0)
    loss, grads, stats = loss_and_grads(pair, s_batch, q_batch, config)
    neg = lambda gs: [(-gw, -gb) for gw, gb in zip(*gs)]
    return -loss, (neg(grads[0]), neg(grads[1])), stats


class _Adam:
    def __init__(self, shapes, lr: float):
        self.lr = lr
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, params: list, grads: list) -> None:
        self.t += 1
        bc1 = 1.0 - ADAM_BETA1 ** self.t
        bc2 = 1.0 - ADAM_BETA2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def _flatten_params(pair: MlpPair) -> list:
    out = []
    for net in (pair.net_s, pair.net_q):
        out.extend(net.weights)
        out.extend(net.biases)
    return out


def _flatten_grads(grads) -> list:
    (gw_s, gb_s), (gw_q, gb_q) = grads
    return [*gw_s, *gb_s, *gw_q, *gb_q]


def train(data, config: TrainConfig, pair: Optional[MlpPair] = None) -> tuple[MlpPair, TrainHistory]:
    """Minibatch gradient training with validation-based early stopping.

    ``data`` is a PairedDataset (or any object with ``s``/``q`` feature
    matrices). A seeded validation split is held out; each epoch the full
    validation metric is recorded and the parameters of the best epoch
    are restored at the end. A non-finite loss aborts training, keeping
    the history with ``stopping_reason='diverged'``.
    """
    s = np.asarray(data.s, dtype=np.float64)
    q = np.asarray(data.q, dtype=np.float64)
    n = s.shape[0]
    if n < 2 * config.batch_size:
        raise ValueError(f"need at least 2*batch_size={2 * config.batch_size} examples, got {n}")
    rng = np.random.Generator(np.random.PCG64(config.seed))
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * config.validation_fraction)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]

    if pair is None:
        pair = init_mlp_pair(s.shape[1], q.shape[1], hidden=config.hidden,
                             seed=int(rng.integers(0, 2 ** 31)))
    history = TrainHistory()
    if config.epochs == 0:
        history.stopping_reason = "no-epochs"
        return pair, history

    params = _flatten_params(pair)
    opt = _Adam([p.shape for p in params], lr=config.learning_rate)
    best_val = -math.inf
    best_params = None
    stale = 0
    history.stopping_reason = "max-epochs"

    for epoch in range(config.epochs):
        order = rng.permutation(train_idx.size)
        idx = train_idx[order]
        losses = []
        diverged = False
        for start in range(0, idx.size, config.batch_size):
            batch = idx[start:start + config.batch_size]
            if batch.size < 2:
                continue
            try:
                loss, grads, _ = loss_and_grads(pair, s[batch], q[batch], config)
            except TrainingDiverged:
                diverged = True
                break
            losses.append(loss)
            opt.step(params, _flatten_grads(grads))

        p_s = forward(pair.net_s, s[val_idx])
        p_q = forward(pair.net_q, q[val_idx])
        v_mu_s = float(p_s.mean())
        v_mu_q = float(p_q.mean())
        v_mu_sq = float((p_s * p_q).mean())
        val_f = float(fbeta_hat_moments(v_mu_s, v_mu_q, v_mu_sq,
                                        beta=config.params.beta, alpha=config.params.alpha))
        history.epochs.append(EpochStats(
            epoch=epoch, train_loss=float(np.mean(losses)) if losses else math.nan,
            val_fbeta=val_f, val_mu_s=v_mu_s, val_mu_q=v_mu_q, val_mu_sq=v_mu_sq))

        if val_f > best_val:
            best_val = val_f
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
        if diverged:
            history.stopping_reason = "diverged"
            break
        if stale > config.early_stop_patience:
            history.stopping_reason = "early-stop"
            break

    if best_params is not None:
        for p, bp in zip(params, best_params):
            p[...] = bp
    return pair, history


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _net_to_dict(net: Mlp) -> dict:
    n_hidden = len(net.weights) - 1
    return {
        "layer_sizes": net.layer_sizes,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "activations": ["relu"] * n_hidden + ["sigmoid"],
    }


def save_mlp_pair(pair: MlpPair, path, config_echo: Optional[dict] = None) -> None:
    """Write the pair as a JSON document (row-major weights per layer)."""
    doc = {
        "net_s": _net_to_dict(pair.net_s),
        "net_q": _net_to_dict(pair.net_q),
        "seed": pair.seed,
        "config": config_echo or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_mlp_pair(path) -> MlpPair:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))

    def net(d):
        return Mlp(weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
                   biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]])

    return MlpPair(net_s=net(doc["net_s"]), net_q=net(doc["net_q"]), seed=int(doc.get("seed", 0)))
