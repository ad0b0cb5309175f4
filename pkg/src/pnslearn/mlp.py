"""A small fully connected regressor in numpy with hand-written backprop.

Hidden layers run affine -> activation [-> batch-norm] [-> dropout]; the output
unit is squashed by a sigmoid or clamped to [0, 1]. All trainable parameters
live in one flat float64 buffer (the per-layer arrays are views into it), so an
optimizer step is a handful of vector operations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from pnslearn import N_OBSERVED, N_SUBGROUPS
from pnslearn.errors import MalformedInputError, TrainingDivergedError
from pnslearn.oracle import key_bits
from pnslearn.scm import ScmKind

ACTIVATIONS = ("relu", "leakyrelu", "mish")
LOSSES = ("mse", "smooth_l1")
OUTPUTS = ("sigmoid", "clamp")

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
PLATEAU_MIN_DELTA = 1e-6
CHECKPOINT_FORMAT = "pnslearn-mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Activation:
    kind: str = "mish"
    alpha: float = 0.01

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise MalformedInputError(f"unknown activation {self.kind!r}")
        if self.kind == "leakyrelu" and self.alpha <= 0:
            raise MalformedInputError("LeakyReLU alpha must be positive")


def softplus(s):
    s = np.asarray(s, dtype=float)
    # log1p(exp(s)) == s to double precision above 20; the cap only avoids overflow.
    return np.where(s > 20.0, s, np.log1p(np.exp(np.minimum(s, 20.0))))


def sigmoid(s):
    s = np.asarray(s, dtype=float)
    e = np.exp(-np.abs(s))
    return np.where(s >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def mish(s):
    s = np.asarray(s, dtype=float)
    return s * np.tanh(softplus(s))


def mish_grad(s):
    s = np.asarray(s, dtype=float)
    t = np.tanh(softplus(s))
    return t + s * (1.0 - t * t) * sigmoid(s)


def activate(act: Activation, s):
    if act.kind == "relu":
        return np.maximum(s, 0.0)
    if act.kind == "leakyrelu":
        return np.where(s >= 0, s, act.alpha * s)
    return mish(s)


def activate_grad(act: Activation, s):
    if act.kind == "relu":
        return (s > 0).astype(float)
    if act.kind == "leakyrelu":
        return np.where(s >= 0, 1.0, act.alpha)
    return mish_grad(s)


def loss_and_grad(kind: str, pred, target, beta: float = 0.3):
    """Mean loss over the batch and its gradient with respect to `pred`."""
    e = pred - target
    n = len(e)
    if kind == "mse":
        return float(np.mean(e * e)), 2.0 * e / n
    if kind == "smooth_l1":
        a = np.abs(e)
        small = a < beta
        value = np.where(small, 0.5 * e * e / beta, a - 0.5 * beta)
        grad = np.where(small, e / beta, np.sign(e))
        return float(np.mean(value)), grad / n
    raise MalformedInputError(f"unknown loss {kind!r}")


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple[int, ...] = (N_OBSERVED, 64, 32, 16, 1)
    activation: Activation = field(default_factory=Activation)
    learning_rate: float = 1e-3
    epochs: int = 2000
    batch_size: int = 64
    loss: str = "mse"
    huber_beta: float = 0.3
    weight_decay: float = 0.0
    dropout_rates: tuple[float, ...] = ()
    use_batchnorm: bool = False
    lr_schedule: str | None = None
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    output: str = "sigmoid"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.activation, dict):
            object.__setattr__(self, "activation", Activation(**self.activation))
        elif isinstance(self.activation, str):
            object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "layer_sizes", tuple(int(v) for v in self.layer_sizes))
        object.__setattr__(self, "dropout_rates", tuple(float(v) for v in self.dropout_rates))
        n_hidden = len(self.layer_sizes) - 2
        if n_hidden < 0 or self.layer_sizes[-1] != 1 or min(self.layer_sizes) < 1:
            raise MalformedInputError(f"bad layer sizes {self.layer_sizes}")
        if self.dropout_rates and len(self.dropout_rates) != n_hidden:
            raise MalformedInputError("need one dropout rate per hidden layer")
        if any(not 0.0 <= r < 1.0 for r in self.dropout_rates):
            raise MalformedInputError("dropout rates must lie in [0, 1)")
        if self.loss not in LOSSES:
            raise MalformedInputError(f"unknown loss {self.loss!r}")
        if self.output not in OUTPUTS:
            raise MalformedInputError(f"unknown output mode {self.output!r}")
        if self.lr_schedule not in (None, "plateau"):
            raise MalformedInputError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.plateau_patience < 1 or not 0.0 < self.plateau_factor < 1.0:
            raise MalformedInputError("plateau patience must be >= 1 and factor in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0 or self.huber_beta <= 0:
            raise MalformedInputError("epochs, batch_size, learning_rate and huber_beta must be positive")
        if self.weight_decay < 0:
            raise MalformedInputError("weight_decay must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        d["dropout_rates"] = list(self.dropout_rates)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "MlpConfig":
        return cls(**data)


def preset_config(scm: str = "confounder", activation: str = "mish", **overrides) -> MlpConfig:
    """The shared setup for the three simple SCMs, or the enriched mediator setup."""
    if ScmKind(scm) is ScmKind.MEDIATOR:
        cfg = MlpConfig(
            activation=Activation(activation),
            loss="smooth_l1",
            huber_beta=0.3,
            weight_decay=1e-3,
            dropout_rates=(0.20, 0.20, 0.15),
            use_batchnorm=True,
            lr_schedule="plateau",
            plateau_patience=5,
            plateau_factor=0.5,
            output="clamp",
        )
    else:
        cfg = MlpConfig(activation=Activation(activation))
    return replace(cfg, **overrides)


class MlpModel:
    def __init__(self, layer_sizes, activation: Activation, output: str = "sigmoid",
                 use_batchnorm: bool = False, dropout_rates=()):
        self.layer_sizes = tuple(layer_sizes)
        self.activation = activation
        self.output = output
        self.use_batchnorm = use_batchnorm
        self.dropout_rates = tuple(dropout_rates)
        self.history: list[tuple[int, float, float, float]] = []

        shapes = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        hidden = self.layer_sizes[1:-1]
        if use_batchnorm:
            for width in hidden:
                shapes += [(width,), (width,)]
        self._shapes = shapes
        self.theta = np.zeros(sum(int(np.prod(s)) for s in shapes))
        self._bind()
        self.running_mean = [np.zeros(w) for w in hidden] if use_batchnorm else []
        self.running_var = [np.ones(w) for w in hidden] if use_batchnorm else []

    def _bind(self):
        views, offset = [], 0
        for shape in self._shapes:
            size = int(np.prod(shape))
            views.append(self.theta[offset:offset + size].reshape(shape))
            offset += size
        n_layers = len(self.layer_sizes) - 1
        self.weights = views[0:2 * n_layers:2]
        self.biases = views[1:2 * n_layers:2]
        bn = views[2 * n_layers:]
        self.gammas = bn[0::2]
        self.betas = bn[1::2]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @classmethod
    def from_config(cls, cfg: MlpConfig) -> "MlpModel":
        return cls(cfg.layer_sizes, cfg.activation, cfg.output, cfg.use_batchnorm, cfg.dropout_rates)

    def initialize(self, rng: np.random.Generator) -> "MlpModel":
        # Kaiming-uniform with negative slope sqrt(5) (bound 1/sqrt(fan_in)) for
        # weights and biases, identity batch-norm. He-uniform's larger scale
        # extrapolates much worse to unsampled subgroups.
        for w, b in zip(self.weights, self.biases):
            bound = 1.0 / np.sqrt(w.shape[0])
            w[...] = rng.uniform(-bound, bound, size=w.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        for g, bt in zip(self.gammas, self.betas):
            g[...] = 1.0
            bt[...] = 0.0
        return self

    def copy(self) -> "MlpModel":
        other = MlpModel(self.layer_sizes, self.activation, self.output, self.use_batchnorm, self.dropout_rates)
        other.theta[...] = self.theta
        other.running_mean = [m.copy() for m in self.running_mean]
        other.running_var = [v.copy() for v in self.running_var]
        other.history = list(self.history)
        return other

    def forward(self, X, train: bool = False, rng: np.random.Generator | None = None,
                update_stats: bool = True, return_cache: bool = False):
        """Outputs for a batch. `train` uses batch statistics and dropout (if rng given)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layer_sizes[0]:
            raise MalformedInputError(f"expected inputs of shape (n, {self.layer_sizes[0]}), got {X.shape}")
        cache = []
        h = X
        for l in range(self.n_hidden):
            entry = {"h_in": h}
            a = h @ self.weights[l] + self.biases[l]
            g = activate(self.activation, a)
            entry["a"] = a
            out = g
            if self.use_batchnorm:
                if train:
                    n = len(g)
                    mu = g.mean(axis=0)
                    var = g.var(axis=0)
                    if update_stats:
                        unbiased = var * n / (n - 1) if n > 1 else var
                        self.running_mean[l] = (1 - BN_MOMENTUM) * self.running_mean[l] + BN_MOMENTUM * mu
                        self.running_var[l] = (1 - BN_MOMENTUM) * self.running_var[l] + BN_MOMENTUM * unbiased
                else:
                    mu, var = self.running_mean[l], self.running_var[l]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                xhat = (g - mu) * inv_std
                entry.update(xhat=xhat, inv_std=inv_std, batch_stats=train)
                out = self.gammas[l] * xhat + self.betas[l]
            if train and rng is not None and self.dropout_rates and self.dropout_rates[l] > 0:
                p = self.dropout_rates[l]
                mask = (rng.random(out.shape) >= p) / (1.0 - p)
                entry["mask"] = mask
                out = out * mask
            cache.append(entry)
            h = out
        a_out = (h @ self.weights[-1] + self.biases[-1])[:, 0]
        if self.output == "sigmoid":
            y = sigmoid(a_out)
        else:
            y = np.clip(a_out, 0.0, 1.0)
        if return_cache:
            return y, {"hidden": cache, "h_last": h, "a_out": a_out, "y": y}
        return y

    def backward(self, cache, dy) -> np.ndarray:
        """Gradient of the loss with respect to `theta`, given dLoss/dOutput."""
        grad = np.zeros_like(self.theta)
        g_model = MlpModel.__new__(MlpModel)
        g_model._shapes = self._shapes
        g_model.layer_sizes = self.layer_sizes
        g_model.theta = grad
        g_model._bind()

        if self.output == "sigmoid":
            da = dy * cache["y"] * (1.0 - cache["y"])
        else:
            a = cache["a_out"]
            da = dy * ((a >= 0.0) & (a <= 1.0))
        da = da[:, None]
        g_model.weights[-1][...] = cache["h_last"].T @ da
        g_model.biases[-1][...] = da.sum(axis=0)
        dh = da @ self.weights[-1].T

        for l in reversed(range(self.n_hidden)):
            entry = cache["hidden"][l]
            if "mask" in entry:
                dh = dh * entry["mask"]
            if self.use_batchnorm:
                xhat = entry["xhat"]
                g_model.gammas[l][...] = (dh * xhat).sum(axis=0)
                g_model.betas[l][...] = dh.sum(axis=0)
                dxhat = dh * self.gammas[l]
                if entry["batch_stats"]:
                    n = len(dxhat)
                    dg = entry["inv_std"] / n * (
                        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
                    )
                else:
                    dg = dxhat * entry["inv_std"]
            else:
                dg = dh
            da = dg * activate_grad(self.activation, entry["a"])
            g_model.weights[l][...] = entry["h_in"].T @ da
            g_model.biases[l][...] = da.sum(axis=0)
            if l > 0:
                dh = da @ self.weights[l].T
        return grad

    def predict(self, X) -> np.ndarray:
        return self.forward(X, train=False)

    def to_dict(self) -> dict:
        params = {}
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            params[f"W{l}"] = w.tolist()
            params[f"b{l}"] = b.tolist()
        for l, (g, bt) in enumerate(zip(self.gammas, self.betas)):
            params[f"bn_scale{l}"] = g.tolist()
            params[f"bn_shift{l}"] = bt.tolist()
            params[f"bn_running_mean{l}"] = self.running_mean[l].tolist()
            params[f"bn_running_var{l}"] = self.running_var[l].tolist()
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "activation": asdict(self.activation),
            "output": self.output,
            "use_batchnorm": self.use_batchnorm,
            "dropout_rates": list(self.dropout_rates),
            "params": params,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
            raise MalformedInputError("not a version-1 pnslearn MLP checkpoint")
        model = cls(data["layer_sizes"], Activation(**data["activation"]), data["output"],
                    data["use_batchnorm"], data["dropout_rates"])
        p = data["params"]

        def load(target, name):
            value = np.array(p[name], dtype=float)
            if value.shape != target.shape:
                raise ValueError(f"{name} has shape {value.shape}, expected {target.shape}")
            target[...] = value
            return target

        try:
            for l in range(len(model.weights)):
                load(model.weights[l], f"W{l}")
                load(model.biases[l], f"b{l}")
            for l in range(len(model.gammas)):
                load(model.gammas[l], f"bn_scale{l}")
                load(model.betas[l], f"bn_shift{l}")
                model.running_mean[l] = load(np.empty_like(model.running_mean[l]), f"bn_running_mean{l}")
                model.running_var[l] = load(np.empty_like(model.running_var[l]), f"bn_running_var{l}")
        except (KeyError, ValueError) as exc:
            raise MalformedInputError(f"checkpoint parameters do not match the layer sizes: {exc}") from exc
        if not np.all(np.isfinite(model.theta)):
            raise MalformedInputError("checkpoint has non-finite parameters")
        if any(np.any(v <= 0) for v in model.running_var):
            raise MalformedInputError("checkpoint has non-positive running variance")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator, use_batchnorm: bool):
    order = rng.permutation(n)
    batches = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    # Batch statistics are undefined for a single row.
    if use_batchnorm and len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def evaluate_loss(model: MlpModel, cfg: MlpConfig, X, y) -> float:
    return loss_and_grad(cfg.loss, model.forward(X), y, cfg.huber_beta)[0]


def train(cfg: MlpConfig, train_set, val_set) -> MlpModel:
    """Mini-batch Adam; returns the parameters with the lowest validation loss.

    The per-epoch log (epoch, train_loss, val_loss, lr) is kept on `model.history`.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise MalformedInputError("training and validation sets must be nonempty")
    if cfg.layer_sizes[0] != N_OBSERVED:
        raise MalformedInputError(f"first layer must have {N_OBSERVED} inputs")
    X, y = train_set.features, np.asarray(train_set.labels, dtype=float)
    Xv, yv = val_set.features, np.asarray(val_set.labels, dtype=float)

    init_ss, shuffle_ss, dropout_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    model = MlpModel.from_config(cfg).initialize(np.random.default_rng(init_ss))
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)

    m = np.zeros_like(model.theta)
    v = np.zeros_like(model.theta)
    step = 0
    lr = cfg.learning_rate
    best = None
    best_val = np.inf
    sched_best = np.inf
    bad_epochs = 0
    history = []

    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for idx in _epoch_batches(len(y), cfg.batch_size, shuffle_rng, cfg.use_batchnorm):
            pred, cache = model.forward(X[idx], train=True, rng=dropout_rng, return_cache=True)
            loss, dpred = loss_and_grad(cfg.loss, pred, y[idx], cfg.huber_beta)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
            total += loss * len(idx)
            g = model.backward(cache, dpred)
            if cfg.weight_decay:
                g += cfg.weight_decay * model.theta
            step += 1
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1 ** step)
            v_hat = v / (1 - ADAM_BETA2 ** step)
            model.theta -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        train_loss = total / len(y)
        val_loss = evaluate_loss(model, cfg, Xv, yv)
        if not (np.isfinite(val_loss) and np.all(np.isfinite(model.theta))):
            raise TrainingDivergedError(f"non-finite parameters or validation loss at epoch {epoch}")
        history.append((epoch, train_loss, val_loss, lr))
        if val_loss < best_val:
            best_val = val_loss
            best = model.copy()

        if cfg.lr_schedule == "plateau":
            if val_loss < sched_best - PLATEAU_MIN_DELTA:
                sched_best = val_loss
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.plateau_patience:
                    lr *= cfg.plateau_factor
                    bad_epochs = 0

    best.history = history
    return best


def all_subgroup_features() -> np.ndarray:
    return key_bits(np.arange(N_SUBGROUPS)).astype(np.float64)


def predict_all(model: MlpModel, keys=None) -> np.ndarray:
    """Eval-mode predictions for the given keys (default: every subgroup, key order)."""
    keys = np.arange(N_SUBGROUPS) if keys is None else np.asarray(keys)
    return model.predict(key_bits(keys).astype(np.float64))


def write_history_csv(history, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,val_loss,lr\n")
        for epoch, tl, vl, lr in history:
            fh.write(f"{epoch},{tl!r},{vl!r},{lr!r}\n")
