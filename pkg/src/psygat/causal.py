"""Post-hoc causal attribution: windowed star graphs per PEU instance,
an edge scorer over frozen session-model representations, and ranked
explanations evaluated with Hit@K / MRR.

The scorer only ever sees detached node representations, so training it
cannot touch the session model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .metrics import ranking_metrics
from .peu import CATEGORIES, NUM_CATEGORIES
from .train import AdamW


class DataError(ValueError):
    pass


@dataclass
class CausalConfig:
    window: int = 3
    past_only: bool = False
    hidden: int = 64
    focal_alpha: float = 0.75
    focal_gamma: float = 2.0
    lr: float = 1e-3
    weight_decay: float = 0.0
    epochs: int = 40
    batch_instances: int = 32

    def __post_init__(self):
        if self.window < 1:
            raise DataError(f"window must be >= 1, got {self.window}")

    @property
    def position_dim(self):
        return 2 * self.window + 1

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass
class CausalInstance:
    session_id: str
    target_index: int
    target_category: int
    candidate_indices: list
    labels: list  # binary, aligned with candidates

    @property
    def has_cause(self):
        return any(self.labels)


def extract_instances(session, peus, window, past_only=False):
    """One instance per (utterance, active PEU category) pair.

    Candidates are the in-window utterances around the target; labels come
    from the session's causal annotations, defaulting to all-zero.
    """
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    sources_by_key = {}
    for rec in session.causes:
        key = (int(rec["target"]), rec["category"])
        sources_by_key.setdefault(key, set()).update(int(s) for s in rec["sources"])
    instances = []
    for t in range(peus.T):
        for cat in peus.rows[t].active_categories():
            hi = t if past_only else min(peus.T - 1, t + window)
            candidates = [j for j in range(max(0, t - window), hi + 1) if j != t]
            if not candidates:
                continue
            sources = sources_by_key.get((t, CATEGORIES[cat]), set())
            instances.append(
                CausalInstance(
                    session_id=session.id,
                    target_index=t,
                    target_category=cat,
                    candidate_indices=candidates,
                    labels=[1 if j in sources else 0 for j in candidates],
                )
            )
    return instances


class ScorerParams:
    """Pairwise MLP over [h_target, h_candidate, target PEU, relative position]."""

    def __init__(self, config, model_hidden=128, seed=0, dtype=np.float32):
        self.config = config
        self.model_hidden = model_hidden
        self.input_dim = 2 * model_hidden + NUM_CATEGORIES + config.position_dim
        rng = np.random.default_rng(seed)

        def xavier(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)

        self.tensors = {
            "w1": T.Tensor(xavier(self.input_dim, config.hidden), name="w1"),
            "b1": T.Tensor(np.zeros(config.hidden, dtype=dtype), name="b1"),
            "w2": T.Tensor(xavier(config.hidden, 1), name="w2"),
            "b2": T.Tensor(np.zeros(1, dtype=dtype), name="b2"),
        }

    def named(self):
        return self.tensors.items()

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def astype(self, dtype):
        clone = ScorerParams.__new__(ScorerParams)
        clone.config = self.config
        clone.model_hidden = self.model_hidden
        clone.input_dim = self.input_dim
        clone.tensors = {k: T.Tensor(v.data.astype(dtype), name=k) for k, v in self.tensors.items()}
        return clone


def instance_features(instance, node_reps, peu_rows, window):
    """Feature matrix, one row per candidate edge."""
    t = instance.target_index
    if t >= node_reps.shape[0]:
        raise DataError(f"no node representation for target utterance {t}")
    dtype = node_reps.dtype
    rows = []
    target_peu = np.asarray(peu_rows[t], dtype=dtype)
    for j in instance.candidate_indices:
        if j >= node_reps.shape[0]:
            raise DataError(f"no node representation for candidate utterance {j}")
        pos = np.zeros(2 * window + 1, dtype=dtype)
        pos[j - t + window] = 1.0
        rows.append(np.concatenate([node_reps[t], node_reps[j], target_peu, pos]))
    return np.stack(rows)


def edge_logits(features, scorer):
    x = T.Tensor(features.astype(scorer.tensors["w1"].dtype))
    h = T.elu(T.add_bias(T.matmul(x, scorer.tensors["w1"]), scorer.tensors["b1"]))
    out = T.add_bias(T.matmul(h, scorer.tensors["w2"]), scorer.tensors["b2"])
    return T.reshape(out, (features.shape[0],))


def score_edges(instance, node_reps, peu_rows, scorer):
    """Independent causal probability per candidate edge."""
    feats = instance_features(instance, node_reps, peu_rows, scorer.config.window)
    logits = edge_logits(feats, scorer)
    return 1.0 / (1.0 + np.exp(-np.clip(logits.data, -60, 60)))


def causal_loss(logits, labels, alpha=0.75, gamma=2.0):
    """Mean over edges of alpha * (1 - p_t)^gamma * BCE, on logits for stability."""
    labels = np.asarray(labels)
    dtype = logits.dtype
    sign = np.where(labels == 1, 1.0, -1.0).astype(dtype)
    z = T.mul(logits, T.Tensor(sign))
    nll = T.softplus(T.mul(z, T.Tensor(np.asarray(-1.0, dtype=dtype))))
    if gamma != 0.0:
        one = T.Tensor(np.ones_like(nll.data))
        nll = T.mul(T.pow_const(T.sub(one, T.sigmoid(z)), gamma), nll)
    loss = T.tmean(nll)
    if alpha != 1.0:
        loss = T.mul(loss, T.Tensor(np.asarray(alpha, dtype=dtype)))
    return loss


def session_node_reps(graph, params):
    """Detached per-utterance representations from a frozen session model."""
    out = M.forward(graph, graph.persona, params, train=False)
    return out.node_reps.data.copy()


def train_scorer(instances, reps_by_session, peus_by_session, config, seed=0):
    """Fit the edge scorer on labeled instances; session model stays untouched."""
    train_set = [i for i in instances if i.candidate_indices]
    if not train_set:
        raise DataError("no causal instances to train on")
    scorer = ScorerParams(config, model_hidden=next(iter(reps_by_session.values())).shape[1],
                          seed=seed)
    opt = AdamW(config.lr, config.weight_decay)
    rng = np.random.default_rng(seed)
    feats = {
        id(i): instance_features(i, reps_by_session[i.session_id],
                                 peus_by_session[i.session_id], config.window)
        for i in train_set
    }
    for _ in range(config.epochs):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_instances):
            batch = [train_set[k] for k in order[start : start + config.batch_instances]]
            scorer.zero_grad()
            with T.Tape() as tape:
                x = np.concatenate([feats[id(i)] for i in batch])
                y = np.concatenate([np.asarray(i.labels) for i in batch])
                logits = edge_logits(x, scorer)
                loss = causal_loss(logits, y, config.focal_alpha, config.focal_gamma)
                T.backward(loss)
            opt.step(scorer.named())
            tape.clear()
    return scorer


def rank_candidates(instance, probs):
    """Candidate order by descending probability; ties go to the earlier utterance."""
    order = sorted(range(len(probs)), key=lambda k: (-probs[k], instance.candidate_indices[k]))
    return order


def rank_and_evaluate(instances, reps_by_session, peus_by_session, scorer):
    """Ranking metrics over instances with at least one annotated cause.

    Returns (RankingReport, per-instance explanation records, skipped count).
    """
    ranked_labels = []
    explanations = []
    skipped = 0
    for inst in instances:
        probs = score_edges(inst, reps_by_session[inst.session_id],
                            peus_by_session[inst.session_id], scorer)
        order = rank_candidates(inst, probs)
        explanations.append(
            {
                "session": inst.session_id,
                "target": inst.target_index,
                "category": CATEGORIES[inst.target_category],
                "ranked": [
                    {"utt": inst.candidate_indices[k], "prob": float(probs[k]),
                     "is_cause": bool(inst.labels[k])}
                    for k in order
                ],
            }
        )
        if inst.has_cause:
            ranked_labels.append([inst.labels[k] for k in order])
        else:
            skipped += 1
    if not ranked_labels:
        raise DataError("no instances with annotated causes to evaluate")
    return ranking_metrics(ranked_labels), explanations, skipped
