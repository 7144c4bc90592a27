"""Optimization: losses, AdamW, plateau scheduling, early stopping,
seed ensembling and decision-threshold selection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .metrics import DataError, pr_auc

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class NumericalError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    lr: float = 2e-4
    weight_decay: float = 2e-4
    max_epochs: int = 50
    early_stop_patience: int = 8
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    clip_norm: float = 1.0
    loss: str = "focal"  # or "bce"
    focal_gamma: float = 2.0
    focal_alpha: float = 1.0
    contrastive_enabled: bool = True
    contrastive_weight: float = 0.1
    contrastive_temperature: float = 0.2
    seeds: tuple = (0, 1, 2, 3, 4)
    threshold_objective: str = "f1"  # f1 | f0.5 | recall_at_min_precision
    min_precision: float = 0.75
    batch_size: int = 8
    persona_mode: str = "on"

    def __post_init__(self):
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("learning rate must be positive, weight decay non-negative")
        if self.early_stop_patience < 1 or self.plateau_patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.contrastive_temperature <= 0:
            raise ConfigError("contrastive temperature must be positive")
        if self.loss not in ("focal", "bce"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.threshold_objective not in ("f1", "f0.5", "recall_at_min_precision"):
            raise ConfigError(f"unknown threshold objective {self.threshold_objective!r}")
        if self.persona_mode not in ("on", "off"):
            raise ConfigError(f"persona_mode must be on/off, got {self.persona_mode!r}")

    def to_json(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        if "seeds" in obj:
            obj["seeds"] = tuple(obj["seeds"])
        return cls(**obj)


@dataclass
class Checkpoint:
    params: M.ModelParams
    train_config: TrainConfig
    best_val_pr_auc: float
    threshold: float
    seed: int
    epoch: int


def focal_loss(logit, y, gamma=2.0, alpha=1.0):
    """alpha * (1 - p_t)^gamma * (-log p_t), stabilized via softplus.

    gamma=0, alpha=1 recovers plain BCE exactly.
    """
    z = logit if y == 1 else T.mul(logit, T.Tensor(np.asarray(-1.0, dtype=logit.dtype)))
    nll = T.softplus(T.mul(z, T.Tensor(np.asarray(-1.0, dtype=logit.dtype))))
    if gamma == 0.0:
        out = nll
    else:
        p_t = T.sigmoid(z)
        one = T.Tensor(np.asarray(1.0, dtype=logit.dtype))
        out = T.mul(T.pow_const(T.sub(one, p_t), gamma), nll)
    if alpha != 1.0:
        out = T.mul(out, T.Tensor(np.asarray(alpha, dtype=logit.dtype)))
    return out


def bce_loss(logit, y):
    return focal_loss(logit, y, gamma=0.0, alpha=1.0)


def info_nce(session_reps, labels, temperature=0.2):
    """Supervised contrastive loss over L2-normalized session representations.

    session_reps: (B, d) Tensor. Anchors without a same-label partner are
    skipped; batches where no anchor has a positive contribute zero.
    """
    labels = np.asarray(labels, dtype=int)
    B = session_reps.shape[0]
    if B < 2:
        log.warning("info_nce: batch of %d has no pairs, contributing 0", B)
        return T.Tensor(np.asarray(0.0, dtype=session_reps.dtype))
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    pos_counts = same.sum(axis=1)
    anchors = pos_counts > 0
    if not anchors.any():
        return T.Tensor(np.asarray(0.0, dtype=session_reps.dtype))
    dtype = session_reps.dtype
    normed = T.l2_normalize_rows(session_reps)
    sims = T.mul(
        T.matmul(normed, T.transpose(normed)),
        T.Tensor(np.asarray(1.0 / temperature, dtype=dtype)),
    )
    mask = np.zeros((B, B), dtype=dtype)
    np.fill_diagonal(mask, -1e9)
    masked = T.add(sims, T.Tensor(mask))
    e = T.exp(masked)
    log_den = T.log(T.matmul(e, T.Tensor(np.ones((B, 1), dtype=dtype))))
    weights = np.zeros((B, B), dtype=dtype)
    n_anchors = int(anchors.sum())
    for i in np.flatnonzero(anchors):
        weights[i, same[i]] = 1.0 / (n_anchors * pos_counts[i])
    row_w = weights.sum(axis=1, keepdims=True).astype(dtype)
    term_den = T.tsum(T.mul(log_den, T.Tensor(row_w)))
    term_pos = T.tsum(T.mul(masked, T.Tensor(weights)))
    return T.sub(term_den, term_pos)


class AdamW:
    def __init__(self, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {}

    def step(self, named_params):
        for name, p in named_params:
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient for parameter {name}")
            st = self.state.setdefault(
                name, {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data), "t": 0}
            )
            # decoupled decay, applied before the Adam update
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            st["t"] += 1
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * (g * g)
            mhat = st["m"] / (1 - self.beta1 ** st["t"])
            vhat = st["v"] / (1 - self.beta2 ** st["t"])
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def clip_gradients(named_params, max_norm):
    """Scale all grads so the global norm is at most max_norm; returns pre-clip norm."""
    total = 0.0
    grads = []
    for _, p in named_params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
            grads.append(p)
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in grads:
            p.grad *= scale
    return norm


def _fbeta(p, r, beta):
    b2 = beta * beta
    denom = b2 * p + r
    return (1 + b2) * p * r / denom if denom else 0.0


def _threshold_stats(probs, labels, thr):
    pred = probs >= thr
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return p, r


def select_threshold(probs, labels, objective="f1", min_precision=0.75):
    """Scan midpoints of sorted unique probs plus {0, 1}; lowest threshold wins ties."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if labels.sum() in (0, labels.size):
        raise DataError("threshold selection needs both classes in validation")
    uniq = np.unique(probs)
    candidates = [0.0] + [(a + b) / 2 for a, b in zip(uniq, uniq[1:])] + [1.0]
    if objective == "recall_at_min_precision":
        best = None
        for thr in candidates:
            p, r = _threshold_stats(probs, labels, thr)
            if p >= min_precision:
                key = (r, -thr)
                if best is None or key > best[0]:
                    best = (key, thr)
        if best is not None:
            return best[1]
        log.warning("no threshold reaches precision %.2f; falling back to max-F1", min_precision)
        objective = "f1"
    beta = 1.0 if objective == "f1" else 0.5
    best = None
    for thr in candidates:
        p, r = _threshold_stats(probs, labels, thr)
        score = _fbeta(p, r, beta)
        key = (score, -thr)
        if best is None or key > best[0]:
            best = (key, thr)
    return best[1]


def _graph_loss(out, label, config):
    if config.loss == "bce":
        return bce_loss(out.logit, label)
    return focal_loss(out.logit, label, config.focal_gamma, config.focal_alpha)


def predict_probs(params, graphs, persona_mode=True):
    return np.array(
        [M.forward(g, g.persona, params, train=False, persona_mode=persona_mode).prob for g in graphs]
    )


def fit(train_graphs, val_graphs, config, model_config, seed=0):
    """Train one model; returns the checkpoint with the best validation PR-AUC."""
    if not train_graphs or not val_graphs:
        raise ConfigError("fit requires non-empty train and validation splits")
    val_labels = np.array([g.label for g in val_graphs])
    if val_labels.sum() in (0, val_labels.size):
        raise ConfigError("validation split must contain both classes")
    persona_on = config.persona_mode == "on"
    params = M.ModelParams(model_config, seed=seed)
    opt = AdamW(config.lr, config.weight_decay)
    rng = np.random.default_rng(seed + 1)
    best_auc = -1.0
    best_snapshot = params.snapshot()
    best_epoch = 0
    since_improve = 0
    plateau_wait = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_graphs))
        for start in range(0, len(order), config.batch_size):
            batch = [train_graphs[i] for i in order[start : start + config.batch_size]]
            params.zero_grad()
            with T.Tape() as tape:
                outs = [
                    M.forward(g, g.persona, params, train=True, rng=rng, persona_mode=persona_on)
                    for g in batch
                ]
                terms = [_graph_loss(o, g.label, config) for o, g in zip(outs, batch)]
                loss = terms[0]
                for term in terms[1:]:
                    loss = T.add(loss, term)
                loss = T.mul(loss, T.Tensor(np.asarray(1.0 / len(batch), dtype=loss.dtype)))
                if config.contrastive_enabled and len(batch) >= 2:
                    reps = T.concat_rows([o.session_rep for o in outs])
                    aux = info_nce(reps, [g.label for g in batch], config.contrastive_temperature)
                    loss = T.add(
                        loss,
                        T.mul(aux, T.Tensor(np.asarray(config.contrastive_weight, dtype=loss.dtype))),
                    )
                T.backward(loss)
            clip_gradients(params.named(), config.clip_norm)
            opt.step(params.named())
            tape.clear()

        probs = predict_probs(params, val_graphs, persona_on)
        auc = pr_auc(probs, val_labels)
        if auc > best_auc + 1e-12:
            best_auc = auc
            best_snapshot = params.snapshot()
            best_epoch = epoch
            since_improve = 0
            plateau_wait = 0
        else:
            since_improve += 1
            plateau_wait += 1
            if plateau_wait >= config.plateau_patience:
                opt.lr *= config.plateau_factor
                plateau_wait = 0
            if since_improve >= config.early_stop_patience:
                break

    params.load_snapshot(best_snapshot)
    probs = predict_probs(params, val_graphs, persona_on)
    threshold = select_threshold(probs, val_labels, config.threshold_objective, config.min_precision)
    return Checkpoint(
        params=params,
        train_config=config,
        best_val_pr_auc=best_auc,
        threshold=threshold,
        seed=seed,
        epoch=best_epoch,
    )


def ensemble_predict(checkpoints, graph, persona=None):
    """Arithmetic mean of member probabilities."""
    if not checkpoints:
        raise ConfigError("ensemble needs at least one checkpoint")
    arch = checkpoints[0].params.config.to_json()
    for ck in checkpoints[1:]:
        if ck.params.config.to_json() != arch:
            raise ConfigError("ensemble members have mismatched architectures")
    persona = graph.persona if persona is None else persona
    persona_on = checkpoints[0].train_config.persona_mode == "on"
    probs = [
        M.forward(graph, persona, ck.params, train=False, persona_mode=persona_on).prob
        for ck in checkpoints
    ]
    return float(np.mean(probs))


def train_ensemble(train_graphs, val_graphs, config, model_config):
    """Fit one member per seed and select the ensemble threshold on validation."""
    members = [fit(train_graphs, val_graphs, config, model_config, seed=s) for s in config.seeds]
    val_probs = np.array([ensemble_predict(members, g) for g in val_graphs])
    val_labels = np.array([g.label for g in val_graphs])
    threshold = select_threshold(val_probs, val_labels, config.threshold_objective, config.min_precision)
    return members, threshold
