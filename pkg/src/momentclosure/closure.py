"""Moment-closure models: the trivial P_N closure plus three learned heads.

LM learns the unclosed moment m_{N+1} directly; LG learns coefficients that
contract against the gradients of the retained moments (so the target needs no
output normalization); LG_HYPER is the LG head restricted to the last two or
three slots with its outputs mapped into the hyperbolic region.

Training is plain mini-batch Adam on hand-written backprop, deterministic for
a fixed seed.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, split_and_normalize
from .errors import TrainingDivergedError
from .hyperbolic import constrain_output_n1, constrain_outputs
from .mlp import AdamState, Mlp, Normalizer, adam_step, backward, forward, forward_cached, init_mlp


class ClosureKind(str, enum.Enum):
    PN = "pn"
    LM = "lm"
    LG = "lg"
    LG_HYPER = "lg-hyper"


@dataclass
class TrainConfig:
    lr0: float = 1e-3
    epochs: int = 1000
    lr_decay_factor: float = 0.35
    lr_decay_every: int = 100
    batch_size: int = 1024
    val_fraction: float = 0.10
    rng_seed: int = 0
    hidden_layers: int = 5
    hidden_width: int = 256

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        for name in ("lr0", "epochs", "lr_decay_factor", "lr_decay_every", "batch_size",
                     "hidden_layers", "hidden_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def to_dict(self) -> dict:
        return {
            "lr0": self.lr0, "epochs": self.epochs,
            "lr_decay_factor": self.lr_decay_factor,
            "lr_decay_every": self.lr_decay_every,
            "batch_size": self.batch_size, "val_fraction": self.val_fraction,
            "rng_seed": self.rng_seed, "hidden_layers": self.hidden_layers,
            "hidden_width": self.hidden_width,
        }


@dataclass
class ClosureModel:
    kind: ClosureKind
    N: int
    K: int = 0
    mlp: Mlp | None = None
    normalizer: Normalizer | None = None
    epsilon: float = 1e-6
    lm_target_mean: np.ndarray | None = None
    lm_target_std: np.ndarray | None = None
    train_config: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind is ClosureKind.LG_HYPER:
            if self.N == 2 or self.N < 1:
                raise ValueError("hyperbolic head needs N = 1 or N >= 3")
            if self.K != 0:
                raise ValueError("hyperbolic head is deterministic-only (K = 0)")
        if self.mlp is not None and self.mlp.layer_dims[-1] != self.output_dim:
            raise ValueError(
                f"{self.kind.value} head expects output dim {self.output_dim}, "
                f"mlp has {self.mlp.layer_dims[-1]}"
            )

    @property
    def input_dim(self) -> int:
        return (self.K + 1) * (self.N + 1)

    @property
    def output_dim(self) -> int:
        if self.kind is ClosureKind.LG:
            return (self.K + 1) * (self.N + 1)
        if self.kind is ClosureKind.LM:
            return self.K + 1
        if self.kind is ClosureKind.LG_HYPER:
            return 3 if self.N >= 3 else 1
        return 0  # PN has no network

    @property
    def needs_network(self) -> bool:
        return self.kind is not ClosureKind.PN

    def _net_out(self, m2d: np.ndarray) -> np.ndarray:
        if self.mlp is None:
            raise ValueError(f"{self.kind.value} closure has no trained network")
        return forward(self.mlp, self.normalizer.normalize(m2d))

    def coefficient_field(self, m2d: np.ndarray) -> np.ndarray:
        """Gradient coefficients, shape (rows, N+1, K+1); zero where inactive."""
        m2d = np.atleast_2d(np.asarray(m2d, dtype=float))
        rows = m2d.shape[0]
        if m2d.shape[1] != self.input_dim:
            raise ValueError(f"expected {self.input_dim} moment columns, got {m2d.shape[1]}")
        coeffs = np.zeros((rows, self.N + 1, self.K + 1))
        if self.kind is ClosureKind.PN:
            return coeffs
        if self.kind is ClosureKind.LG:
            coeffs[:] = self._net_out(m2d).reshape(rows, self.N + 1, self.K + 1)
            return coeffs
        if self.kind is ClosureKind.LG_HYPER:
            raw = self._net_out(m2d)
            if self.N >= 3:
                coeffs[:, self.N - 2 :, 0] = constrain_outputs(raw, self.N, self.epsilon)
            else:
                coeffs[:, 0, 0] = constrain_output_n1(raw[:, 0], self.epsilon)
            return coeffs
        raise ValueError(f"{self.kind.value} closure has no gradient coefficients")

    def lm_field(self, m2d: np.ndarray) -> np.ndarray:
        """LM prediction of m_{N+1}, shape (rows, K+1), on the physical scale."""
        if self.kind is not ClosureKind.LM:
            raise ValueError("lm_field is defined for the LM closure")
        m2d = np.atleast_2d(np.asarray(m2d, dtype=float))
        out = self._net_out(m2d)
        return out * self.lm_target_std + self.lm_target_mean

    def predict_closure_gradient(self, m: np.ndarray, dx_m: np.ndarray) -> np.ndarray:
        """dx m_{N+1} = sum_k coeff_k (Hadamard) dx m_k, per gPC component."""
        if self.kind not in (ClosureKind.LG, ClosureKind.LG_HYPER):
            raise ValueError("gradient prediction is defined for LG-type closures")
        m = np.asarray(m, dtype=float)
        single = m.ndim == 1
        m2d = np.atleast_2d(m)
        g2d = np.atleast_2d(np.asarray(dx_m, dtype=float))
        if g2d.shape != m2d.shape:
            raise ValueError(f"moment/gradient shape mismatch: {m2d.shape} vs {g2d.shape}")
        coeffs = self.coefficient_field(m2d)
        g3 = g2d.reshape(g2d.shape[0], self.N + 1, self.K + 1)
        pred = np.sum(coeffs * g3, axis=1)
        return pred[0] if single else pred


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    """sqrt(sum |truth - pred|^2 / sum |truth|^2); plain norm of pred if truth = 0."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth)
    err = np.linalg.norm(truth - pred)
    return float(err / denom) if denom > 0 else float(np.linalg.norm(pred))


# ---------------------------------------------------------------------------
# training

def _active_slots(kind: ClosureKind, N: int) -> list[int]:
    if kind is ClosureKind.LG:
        return list(range(N + 1))
    if N >= 3:
        return [N - 2, N - 1, N]
    return [0]


def _lg_hyper_chain(raw: np.ndarray, dcoeffs: np.ndarray, N: int, eps: float) -> np.ndarray:
    """Pull loss gradients w.r.t. constrained coefficients back to raw outputs."""
    if N >= 3:
        alpha = math.sqrt((N - 1) / 2.0)
        beta = math.sqrt(N / 2.0)
        gamma = math.sqrt((N + 1) / 2.0)
        u, s, w = raw[:, 0], raw[:, 1], raw[:, 2]
        dl_du = -gamma * (w - 2.0 * beta * u) / alpha
        dl_dw = -gamma * u / alpha
        sig = 1.0 / (1.0 + np.exp(-s))
        out = np.empty_like(raw)
        out[:, 0] = dcoeffs[:, 0] + dcoeffs[:, 1] * dl_du
        out[:, 1] = dcoeffs[:, 1] * sig
        out[:, 2] = dcoeffs[:, 2] + dcoeffs[:, 1] * dl_dw
        return out
    sig = 1.0 / (1.0 + np.exp(-raw))
    return dcoeffs * sig


def lg_contract(
    kind: ClosureKind, out: np.ndarray, g: np.ndarray, N: int, K: int, eps: float
) -> np.ndarray:
    """Closure-gradient prediction from raw network outputs and active gradients."""
    if kind is ClosureKind.LG_HYPER:
        coeff = (constrain_outputs(out, N, eps) if N >= 3
                 else constrain_output_n1(out[:, 0], eps)[:, None])
    else:
        coeff = out
    b = out.shape[0]
    c3 = coeff.reshape(b, -1, K + 1)
    g3 = g.reshape(b, -1, K + 1)
    return np.sum(c3 * g3, axis=1)


def batch_loss(
    kind: ClosureKind,
    out: np.ndarray,
    g: np.ndarray | None,
    y: np.ndarray,
    N: int,
    K: int,
    eps: float,
) -> tuple[float, np.ndarray]:
    """Mean-squared batch loss and its gradient w.r.t. the raw network output."""
    b = out.shape[0]
    if kind is ClosureKind.LM:
        resid = out - y
        return float(np.mean(np.sum(resid**2, axis=1))), 2.0 / b * resid
    resid = lg_contract(kind, out, g, N, K, eps) - y  # (b, K+1)
    loss = float(np.mean(np.sum(resid**2, axis=1)))
    g3 = g.reshape(b, -1, K + 1)
    dcoeff = (2.0 / b) * (resid[:, None, :] * g3).reshape(b, -1)
    if kind is ClosureKind.LG_HYPER:
        return loss, _lg_hyper_chain(out, dcoeff, N, eps)
    return loss, dcoeff


def train(
    kind: ClosureKind,
    dataset: Dataset,
    config: TrainConfig,
) -> tuple[ClosureModel, dict]:
    """Fit a closure head on a reference dataset; returns (model, history).

    History arrays are per-epoch: learning rate, mean batch loss, and relative
    L2 errors of the head's prediction on the train and validation splits.
    """
    if kind is ClosureKind.PN:
        raise ValueError("the P_N closure takes no training")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    N, K = dataset.N, dataset.K

    train_ds, val_ds, normalizer = split_and_normalize(
        dataset, config.val_fraction, config.rng_seed
    )
    model = ClosureModel(kind, N, K, normalizer=normalizer,
                         train_config=config.to_dict(), seed=config.rng_seed)

    x_train = normalizer.normalize(train_ds.features)
    x_val = normalizer.normalize(val_ds.features)

    if kind is ClosureKind.LM:
        y_raw = train_ds.lm_targets
        model.lm_target_mean = y_raw.mean(axis=0)
        model.lm_target_std = np.maximum(y_raw.std(axis=0), 1e-8)
        y_train = (y_raw - model.lm_target_mean) / model.lm_target_std
        y_val_raw = val_ds.lm_targets
        g_train = g_val = None
    else:
        slots = _active_slots(kind, N)
        cols = np.concatenate([np.arange(k * (K + 1), (k + 1) * (K + 1)) for k in slots])
        g_train = train_ds.gradient_features[:, cols]
        g_val = val_ds.gradient_features[:, cols]
        y_train = train_ds.lg_targets
        y_val_raw = val_ds.lg_targets

    rng = np.random.default_rng(config.rng_seed)
    dims = [model.input_dim] + [config.hidden_width] * config.hidden_layers + [model.output_dim]
    model.mlp = init_mlp(dims, rng)
    params = model.mlp.parameters()
    state = AdamState.for_params(params)

    n = x_train.shape[0]
    history = {"lr": [], "train_loss": [], "train_rel_l2": [], "val_rel_l2": []}

    def split_metric(x, g, y_raw):
        out = forward(model.mlp, x)
        if kind is ClosureKind.LM:
            pred = out * model.lm_target_std + model.lm_target_mean
            return relative_l2(pred, y_raw)
        return relative_l2(lg_contract(kind, out, g, N, K, model.epsilon), y_raw)

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            xb = x_train[idx]
            out, cache = forward_cached(model.mlp, xb)
            gb = None if kind is ClosureKind.LM else g_train[idx]
            loss, upstream = batch_loss(kind, out, gb, y_train[idx], N, K, model.epsilon)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, start // config.batch_size, lr)
            grads = backward(model.mlp, cache, upstream)
            adam_step(params, grads, state, lr)
            losses.append(loss)
        history["lr"].append(lr)
        history["train_loss"].append(float(np.mean(losses)))
        history["train_rel_l2"].append(split_metric(x_train, g_train, y_train
                                                    if kind is not ClosureKind.LM
                                                    else train_ds.lm_targets))
        history["val_rel_l2"].append(split_metric(x_val, g_val, y_val_raw))
    return model, history


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model: ClosureModel, path) -> None:
    doc = {
        "kind": model.kind.value,
        "N": model.N,
        "K": model.K,
        "epsilon": model.epsilon,
        "seed": model.seed,
        "train_config": model.train_config,
        "layer_dims": model.mlp.layer_dims if model.mlp else None,
        "weights": [w.tolist() for w in model.mlp.weights] if model.mlp else None,
        "biases": [b.tolist() for b in model.mlp.biases] if model.mlp else None,
        "normalizer": (
            {"mean": model.normalizer.mean.tolist(), "std": model.normalizer.std.tolist()}
            if model.normalizer
            else None
        ),
        "lm_target_mean": (
            model.lm_target_mean.tolist() if model.lm_target_mean is not None else None
        ),
        "lm_target_std": (
            model.lm_target_std.tolist() if model.lm_target_std is not None else None
        ),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> ClosureModel:
    with open(path) as fh:
        doc = json.load(fh)
    mlp = None
    if doc["layer_dims"] is not None:
        mlp = Mlp(
            list(doc["layer_dims"]),
            [np.asarray(w, dtype=float) for w in doc["weights"]],
            [np.asarray(b, dtype=float) for b in doc["biases"]],
        )
    normalizer = None
    if doc["normalizer"] is not None:
        normalizer = Normalizer(
            np.asarray(doc["normalizer"]["mean"], dtype=float),
            np.asarray(doc["normalizer"]["std"], dtype=float),
        )
    return ClosureModel(
        ClosureKind(doc["kind"]),
        doc["N"],
        doc["K"],
        mlp=mlp,
        normalizer=normalizer,
        epsilon=doc["epsilon"],
        lm_target_mean=(
            np.asarray(doc["lm_target_mean"], dtype=float)
            if doc["lm_target_mean"] is not None
            else None
        ),
        lm_target_std=(
            np.asarray(doc["lm_target_std"], dtype=float)
            if doc["lm_target_std"] is not None
            else None
        ),
        train_config=doc.get("train_config") or {},
        seed=doc.get("seed", 0),
    )


def save_history_csv(history: dict, path) -> None:
    keys = ["lr", "train_loss", "train_rel_l2", "val_rel_l2"]
    with open(path, "w") as fh:
        fh.write("epoch," + ",".join(keys) + "\n")
        for e in range(len(history["lr"])):
            fh.write(f"{e}," + ",".join(f"{history[k][e]:.17g}" for k in keys) + "\n")
