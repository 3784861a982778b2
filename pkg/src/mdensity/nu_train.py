"""Trainable nu fields and the denoising objective.

Under GPS the loss of every ``(sigma, M)`` model depends on the data only
through ``ybar = x + eps_bar`` with ``eps_bar ~ N(0, sigma_eff^2 I)``:

    L = E || eps_bar - sigma_eff^2 nu(x + eps_bar) ||^2

so one trained field serves the whole class ``[sigma_eff]``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import DataSource, InvalidParameterError, NoiseModel, corrupt_array, mean_rows
from .gps import GpsScore, NuField
from .rng import stream

CHECKPOINT_VERSION = 1
OPTIMIZERS = ("adam", "adagrad")


class TrainingDiverged(RuntimeError):
    pass


# --- networks --------------------------------------------------------------------

class MlpNu(NuField):
    """Feed-forward ``nu_theta: R^d -> R^d`` with tanh hidden layers and a linear output.

    ``weights[l]`` has shape ``(fan_out, fan_in)``; a layer computes
    ``h @ W.T + b``.
    """

    kind = "explicit"
    activation = "tanh"

    def __init__(self, weights, biases, sigma_eff: float | None = None):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.sigma_eff = sigma_eff
        self.layer_sizes = [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]
        self.d = self.layer_sizes[0]
        self._check_shapes()

    def _check_shapes(self):
        if self.layer_sizes[-1] != self.d:
            raise InvalidParameterError(f"explicit nu must map R^d to R^d, got sizes {self.layer_sizes}")

    @classmethod
    def initialize(cls, layer_sizes, rng: np.random.Generator, sigma_eff: float | None = None):
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            ws.append(rng.standard_normal((fan_out, fan_in)) / math.sqrt(fan_in))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, sigma_eff)

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return type(self)([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                          self.sigma_eff)

    def _forward(self, x):
        hs = [np.asarray(x, dtype=float)]
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            hs.append(np.tanh(hs[-1] @ w.T + b))
        return hs, hs[-1] @ self.weights[-1].T + self.biases[-1]

    def evaluate(self, ybar):
        ybar = np.asarray(ybar, dtype=float)
        lead = ybar.shape[:-1]
        _, out = self._forward(ybar.reshape(-1, self.d))
        return out.reshape(lead + (self.d,))

    def backward(self, hs, grad_out) -> list[np.ndarray]:
        """Parameter gradients given ``dL/d(output)``, in :attr:`params` order."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for l in range(len(self.weights) - 1, -1, -1):
            grads[2 * l] = g.T @ hs[l]
            grads[2 * l + 1] = g.sum(axis=0)
            if l:
                g = (g @ self.weights[l]) * (1.0 - hs[l] ** 2)
        return grads

    def loss_and_grad(self, x, eps, sigma_eff: float):
        """Denoising loss on a batch and its gradient with respect to :attr:`params`."""
        s2 = sigma_eff**2
        hs, nu = self._forward(x + eps)
        resid = eps - s2 * nu
        n = len(x)
        loss = float(np.sum(resid**2) / n)
        return loss, self.backward(hs, (-2.0 * s2 / n) * resid)


class ImplicitMlpNu(MlpNu):
    """``nu = grad phi`` for a scalar tanh network ``phi_theta: R^d -> R``.

    Parameter gradients of the denoising loss go through the input gradient
    (a second reverse pass), written out by hand.
    """

    kind = "implicit"
    has_potential = True

    def _check_shapes(self):
        if self.layer_sizes[-1] != 1:
            raise InvalidParameterError(f"implicit phi must end in one unit, got sizes {self.layer_sizes}")

    def _input_grad(self, hs):
        n = len(hs[0])
        u = np.broadcast_to(self.weights[-1], (n, self.weights[-1].shape[1]))
        us, ss = [None] * len(self.weights), [None] * len(self.weights)
        us[-1] = u
        for l in range(len(self.weights) - 1, 0, -1):
            ss[l] = us[l] * (1.0 - hs[l] ** 2)
            us[l - 1] = ss[l] @ self.weights[l - 1]
        return us, ss

    def potential(self, ybar):
        ybar = np.asarray(ybar, dtype=float)
        _, out = self._forward(ybar.reshape(-1, self.d))
        return out.reshape(ybar.shape[:-1])

    def evaluate(self, ybar):
        ybar = np.asarray(ybar, dtype=float)
        hs, _ = self._forward(ybar.reshape(-1, self.d))
        us, _ = self._input_grad(hs)
        return us[0].reshape(ybar.shape)

    def loss_and_grad(self, x, eps, sigma_eff: float):
        s2 = sigma_eff**2
        n_layers = len(self.weights)
        hs, _ = self._forward(x + eps)
        us, ss = self._input_grad(hs)
        resid = eps - s2 * us[0]
        n = len(x)
        loss = float(np.sum(resid**2) / n)

        gw = [np.zeros_like(w) for w in self.weights]
        gb = [np.zeros_like(b) for b in self.biases]
        hbar = [None] * n_layers
        ubar = (-2.0 * s2 / n) * resid
        for l in range(1, n_layers):
            # u_{l-1} = s_l @ W_l  (weights index l-1)
            gw[l - 1] += ss[l].T @ ubar
            sbar = ubar @ self.weights[l - 1].T
            t = 1.0 - hs[l] ** 2
            ubar = sbar * t
            hbar[l] = -2.0 * hs[l] * (sbar * us[l])
        gw[-1] += ubar.sum(axis=0, keepdims=True)
        zbar = None
        for l in range(n_layers - 1, 0, -1):
            if zbar is not None:
                hbar[l] = hbar[l] + zbar @ self.weights[l]
            zbar = hbar[l] * (1.0 - hs[l] ** 2)
            gw[l - 1] += zbar.T @ hs[l - 1]
            gb[l - 1] += zbar.sum(axis=0)
        grads = []
        for w, b in zip(gw, gb):
            grads += [w, b]
        return loss, grads


def make_net(layer_sizes, rng, sigma_eff=None, implicit: bool = False) -> MlpNu:
    cls = ImplicitMlpNu if implicit else MlpNu
    return cls.initialize(layer_sizes, rng, sigma_eff)


def _set_params(net: MlpNu, flat: list[np.ndarray]):
    net.weights = list(flat[0::2])
    net.biases = list(flat[1::2])


# --- losses ------------------------------------------------------------------------

def denoising_loss(nu: NuField, x, eps, sigma_eff: float) -> float:
    """``mean_n || eps - sigma_eff^2 nu(x + eps) ||^2`` for explicitly supplied noise."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x.shape != eps.shape or x.shape[-1] != nu.d:
        raise ValueError(f"shape mismatch: x {x.shape}, eps {eps.shape}, d={nu.d}")
    resid = eps - sigma_eff**2 * nu.evaluate(x + eps)
    return float(np.mean(np.sum(resid**2, axis=-1)))


def loss_via_bundles(nu: NuField, model: NoiseModel, x, rng, per_sample: bool = False):
    """Monte Carlo ``E||x - xhat(y)||^2`` with ``y`` drawn through all M channels."""
    x = np.asarray(x, dtype=float)
    y = corrupt_array(x, model, rng)
    err = np.sum((x - GpsScore(nu, model).xhat(y)) ** 2, axis=-1)
    return err if per_sample else float(err.mean())


def coupled_bundles(x, eps_bar, model: NoiseModel, rng) -> np.ndarray:
    """Bundles ``(n, M, d)`` whose measurement mean is ``x + eps_bar`` for any ``(sigma, M)``.

    Rows are ``x + eps_bar + sigma (z_m - zbar)``: the centred part is free and
    only the shared residual ``eps_bar`` reaches the Bayes estimate.
    """
    x = np.asarray(x, dtype=float)
    z = rng.standard_normal(x.shape[:-1] + (model.m, x.shape[-1]))
    centred = z - mean_rows(z)[..., None, :]
    return (x + eps_bar)[..., None, :] + model.sigma * centred


def coupled_bundle_loss(nu: NuField, model: NoiseModel, x, eps_bar, rng) -> float:
    y = coupled_bundles(x, eps_bar, model, rng)
    return float(np.mean(np.sum((x - GpsScore(nu, model).xhat(y)) ** 2, axis=-1)))


# --- training --------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    """Desk-scale training settings; Adam with a cosine learning-rate decay by default.

    ``schedule="linear"`` moves the rate from ``lr`` to ``lr_final`` over
    ``schedule_horizon`` updates (default ``steps``) and then holds it, which
    together with ``optimizer="adagrad"`` expresses a ramp-up schedule.

    ``corruption="coupled"`` draws ``eps_bar ~ N(0, sigma_eff^2 I)`` directly;
    ``"bundle"`` draws all M channels of ``(sigma, m)`` and averages them.
    """

    sigma_eff: float
    steps: int = 20000
    batch_size: int = 128
    lr: float = 1e-3
    lr_final: float = 1e-5
    schedule: str = "cosine"
    schedule_horizon: int | None = None
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    eval_interval: int = 500
    eval_size: int = 8192
    hidden: tuple = (128, 128)
    implicit: bool = False
    corruption: str = "coupled"
    sigma: float | None = None
    m: int | None = None

    def __post_init__(self):
        if not self.sigma_eff > 0:
            raise InvalidParameterError("sigma_eff must be positive")
        if self.steps < 0 or self.batch_size < 1 or self.eval_interval < 1 or self.eval_size < 1:
            raise InvalidParameterError("steps >= 0, batch_size, eval_interval, eval_size >= 1")
        if not (self.lr > 0 and self.lr_final > 0):
            raise InvalidParameterError("learning rates must be positive")
        if self.schedule not in ("cosine", "constant", "linear"):
            raise InvalidParameterError(f"unknown schedule {self.schedule!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.schedule_horizon is not None and self.schedule_horizon < 1:
            raise InvalidParameterError("schedule_horizon must be positive")
        if self.corruption not in ("coupled", "bundle"):
            raise InvalidParameterError(f"unknown corruption {self.corruption!r}")
        if self.corruption == "bundle" and self.noise_model is None:
            raise InvalidParameterError("bundle corruption needs sigma and m")
        if self.noise_model is not None and not self.noise_model.in_class(self.sigma_eff):
            raise InvalidParameterError("(sigma, m) is not in the class [sigma_eff]")

    @property
    def noise_model(self) -> NoiseModel | None:
        if self.sigma is None or self.m is None:
            return None
        return NoiseModel(self.sigma, self.m)

    def learning_rate(self, step: int) -> float:
        horizon = self.schedule_horizon or self.steps
        if self.schedule == "constant" or horizon <= 1:
            return self.lr
        frac = min(step / (horizon - 1), 1.0)
        if self.schedule == "linear":
            return self.lr + frac * (self.lr_final - self.lr)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1 + math.cos(math.pi * frac))


@dataclass
class TrainResult:
    net: MlpNu
    log: list[dict] = field(default_factory=list)
    best_step: int = 0
    best_eval: float = float("nan")
    final: MlpNu | None = None

    def log_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["step", "train_loss", "eval_loss", "lr"], lineterminator="\n")
        writer.writeheader()
        for row in self.log:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def log_digest(self) -> str:
        return hashlib.sha256(self.log_csv().encode()).hexdigest()


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            out.append(p - lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


class Adagrad:
    def __init__(self, params, eps=1e-10):
        self.eps = eps
        self.acc = [np.zeros_like(p) for p in params]

    def update(self, params, grads, lr):
        out = []
        for p, g, a in zip(params, grads, self.acc):
            a += g * g
            out.append(p - lr * g / (np.sqrt(a) + self.eps))
        return out



def _noise(cfg: TrainConfig, x, rng) -> np.ndarray:
    if cfg.corruption == "coupled":
        return cfg.sigma_eff * rng.standard_normal(x.shape)
    y = corrupt_array(x, cfg.noise_model, rng)
    return mean_rows(y) - x


def train(cfg: TrainConfig, data: DataSource, net: MlpNu | None = None) -> TrainResult:
    """Adam on the denoising loss; keeps the checkpoint with the lowest held-out loss.

    Streams: 0 data, 1 noise, 2 initialization, 3 the fixed evaluation set.
    """
    data_rng, noise_rng, init_rng, eval_rng = (stream(cfg.seed, k) for k in range(4))
    if net is None:
        out_size = 1 if cfg.implicit else data.d
        net = make_net([data.d, *cfg.hidden, out_size], init_rng, cfg.sigma_eff, cfg.implicit)
    elif net.d != data.d:
        raise InvalidParameterError(f"net input dimension {net.d} != data dimension {data.d}")
    net = net.copy()
    net.sigma_eff = cfg.sigma_eff
    x_eval = data.sample(cfg.eval_size, eval_rng)
    eps_eval = cfg.sigma_eff * eval_rng.standard_normal(x_eval.shape)

    def evaluate():
        return denoising_loss(net, x_eval, eps_eval, cfg.sigma_eff)

    best = net.copy()
    best_eval = evaluate()
    result = TrainResult(best, [{"step": 0, "train_loss": float("nan"), "eval_loss": best_eval,
                                 "lr": cfg.learning_rate(0)}], 0, best_eval)
    if cfg.optimizer == "adam":
        opt = Adam(net.params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    else:
        opt = Adagrad(net.params)
    running, count = 0.0, 0
    for step in range(1, cfg.steps + 1):
        x = data.sample(cfg.batch_size, data_rng)
        eps = _noise(cfg, x, noise_rng)
        loss, grads = net.loss_and_grad(x, eps, cfg.sigma_eff)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"training loss became {loss} at step {step}")
        lr = cfg.learning_rate(step - 1)
        _set_params(net, opt.update(net.params, grads, lr))
        running += loss
        count += 1
        if step % cfg.eval_interval == 0 or step == cfg.steps:
            ev = evaluate()
            if not math.isfinite(ev):
                raise TrainingDiverged(f"eval loss became {ev} at step {step}")
            result.log.append({"step": step, "train_loss": running / count, "eval_loss": ev, "lr": lr})
            running, count = 0.0, 0
            if ev < result.best_eval:
                result.net, result.best_step, result.best_eval = net.copy(), step, ev
    result.final = net
    return result


# --- gradient check ----------------------------------------------------------------

def gradient_check(net: MlpNu, x, eps, sigma_eff: float, h: float = 1e-5) -> float:
    """Largest ``|analytic - central difference| / (|analytic| + 1e-8)`` over all parameters."""
    _, grads = net.loss_and_grad(x, eps, sigma_eff)
    probe = net.copy()
    params = probe.params
    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            _set_params(probe, params)
            up = probe.loss_and_grad(x, eps, sigma_eff)[0]
            flat[i] = old - h
            down = probe.loss_and_grad(x, eps, sigma_eff)[0]
            flat[i] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(gflat[i] - fd) / (abs(gflat[i]) + 1e-8))
    return worst


# --- checkpoints --------------------------------------------------------------------

def checkpoint_dict(net: MlpNu, log_digest: str = "") -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "kind": net.kind,
        "d": net.d,
        "layer_sizes": net.layer_sizes,
        "activation": net.activation,
        "sigma_eff": net.sigma_eff,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "train_log_digest": log_digest,
    }


def save_checkpoint(net: MlpNu, path, log_digest: str = "") -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(net, log_digest), fh)


def load_checkpoint(path) -> MlpNu:
    with open(path, encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidParameterError(f"unsupported checkpoint version {blob.get('version')!r}")
    if blob.get("activation") != "tanh":
        raise InvalidParameterError(f"unsupported activation {blob.get('activation')!r}")
    cls = ImplicitMlpNu if blob.get("kind") == "implicit" else MlpNu
    net = cls(blob["weights"], blob["biases"], blob["sigma_eff"])
    if net.layer_sizes != blob["layer_sizes"]:
        raise InvalidParameterError("layer_sizes do not match the stored weights")
    return net


def config_dict(cfg: TrainConfig) -> dict:
    out = asdict(cfg)
    out["hidden"] = list(cfg.hidden)
    return out
