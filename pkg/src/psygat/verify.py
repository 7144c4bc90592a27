"""Finite-difference verification of every differentiable operation and of
the full session model, in float64.
"""

from __future__ import annotations

import numpy as np

from . import model as M
from . import tensor as T
from .graph import SessionGraph

OP_TOL = 1e-4
END_TO_END_TOL = 1e-3


def _rand(rng, *shape):
    return T.Tensor(rng.standard_normal(shape), dtype=np.float64)


def _fw(op, rng):
    """Wrap an op in a fixed random linear functional so grads are nontrivial.

    The weighting tensor is drawn once, keeping f deterministic across the
    repeated evaluations finite differencing needs.
    """
    cache = {}

    def f():
        out = op()
        if "c" not in cache:
            cache["c"] = T.Tensor(rng.standard_normal(out.shape), dtype=np.float64)
        return T.tsum(T.mul(out, cache["c"]))

    return f


def _check(f, params, eps=1e-5, max_coords=16, rng=None):
    return T.grad_check(f, params, eps=eps, max_coords=max_coords, rng=rng)


def _op_checks(rng):
    m, k, n = (int(rng.integers(1, 9)) for _ in range(3))
    a, b = _rand(rng, m, k), _rand(rng, k, n)
    yield "matmul", _fw(lambda: T.matmul(a, b), rng), [a, b]

    x, y = _rand(rng, m, n), _rand(rng, m, n)
    yield "add", _fw(lambda: T.add(x, y), rng), [x, y]
    yield "sub", _fw(lambda: T.sub(x, y), rng), [x, y]
    yield "mul", _fw(lambda: T.mul(x, y), rng), [x, y]

    s = _rand(rng, n)
    yield "add_bias", _fw(lambda: T.add_bias(x, s), rng), [x, s]
    r = _rand(rng, m)
    yield "scale_rows", _fw(lambda: T.scale_rows(x, r), rng), [x, r]

    z = _rand(rng, m, n)
    yield "leaky_relu", _fw(lambda: T.leaky_relu(z, 0.2), rng), [z]
    yield "elu", _fw(lambda: T.elu(z), rng), [z]
    yield "sigmoid", _fw(lambda: T.sigmoid(z), rng), [z]
    yield "tanh", _fw(lambda: T.tanh(z), rng), [z]
    yield "softplus", _fw(lambda: T.softplus(z), rng), [z]
    yield "exp", _fw(lambda: T.exp(z), rng), [z]

    pos = T.Tensor(rng.uniform(0.5, 2.0, (m, n)), dtype=np.float64)
    yield "log", _fw(lambda: T.log(pos), rng), [pos]
    yield "pow_const", _fw(lambda: T.pow_const(pos, 2.5), rng), [pos]

    # one- or two-column rows make the normalized output (nearly) constant in
    # the input, so fd returns pure rounding noise; use wider rows
    ln_n = int(rng.integers(4, 9))
    zl = _rand(rng, m, ln_n)
    g, bta = _rand(rng, ln_n), _rand(rng, ln_n)
    yield "layer_norm", _fw(lambda: T.layer_norm(zl, g, bta), rng), [zl, g, bta]

    e = int(rng.integers(2, 9))
    logits = _rand(rng, e)
    seg = np.sort(rng.integers(0, max(1, e // 2), e))
    yield "segment_softmax", _fw(lambda: T.segment_softmax(logits, seg), rng), [logits]

    xe = _rand(rng, e, n)
    nseg = int(seg.max()) + 1
    yield "segment_sum", _fw(lambda: T.segment_sum(xe, seg, nseg), rng), [xe]

    idx = rng.integers(0, m, e)
    yield "gather_rows", _fw(lambda: T.gather_rows(x, idx), rng), [x]

    yield "concat_cols", _fw(lambda: T.concat_cols([x, y]), rng), [x, y]
    yield "concat_rows", _fw(lambda: T.concat_rows([x, y]), rng), [x, y]
    lo = int(rng.integers(0, n))
    hi = int(rng.integers(lo + 1, n + 1))
    yield "slice_cols", _fw(lambda: T.slice_cols(x, lo, hi), rng), [x]
    yield "reshape", _fw(lambda: T.reshape(x, (n, m)), rng), [x]
    yield "transpose", _fw(lambda: T.transpose(x), rng), [x]
    yield "tsum", lambda: T.tsum(x), [x]
    yield "tmean", lambda: T.tmean(x), [x]

    # single-column rows make x/||x|| locally constant and fd pure noise;
    # the op is only ever applied to wide embedding matrices
    xn = _rand(rng, m, int(rng.integers(2, 9)))
    yield "l2_normalize_rows", _fw(lambda: T.l2_normalize_rows(xn), rng), [xn]

    # fd needs the same dropout mask on every call, hence a fresh fixed-seed rng
    yield "dropout", _fw(lambda: T.dropout(x, 0.3, np.random.default_rng(7), train=True), rng), [x]


def check_ops(trials=100, seed=0):
    """Max relative fd error per op over randomized small shapes."""
    worst = {}
    for trial in range(trials):
        rng = np.random.default_rng(seed * 100_003 + trial)
        crng = np.random.default_rng(trial)
        for name, f, params in _op_checks(rng):
            err = _check(f, params, rng=crng)
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def _tiny_graph(rng, n_nodes=4, text_dim=12):
    peu = rng.integers(0, 2, (n_nodes, 8)).astype(np.float64)
    peu[:, 7] = rng.integers(-1, 2, n_nodes)
    edge = np.diff(peu, axis=0)
    edge[:, 7] /= 2.0
    return SessionGraph(
        session_id="gc",
        node_text=rng.standard_normal((n_nodes, text_dim)),
        node_peu=peu,
        edge_attr=edge,
        persona=1,
        label=1,
    )


def check_model(seed=0, n_nodes=4):
    """End-to-end fd check of the full forward on a small graph, float64."""
    rng = np.random.default_rng(seed)
    cfg = M.ModelConfig(text_dim=12, hidden=16, heads=2, persona_dim=4, head_hidden=8,
                        dropout=0.0)
    params = M.ModelParams(cfg, seed=seed, dtype=np.float64)
    graph = _tiny_graph(rng, n_nodes, cfg.text_dim)

    def f():
        out = M.forward(graph, 1, params, train=False)
        return out.logit

    leaves = list(params.tensors.values())
    # eps=1e-4: smaller steps push fd into rounding noise on the many
    # low-sensitivity coordinates (unused LN offsets etc.)
    return T.grad_check(f, leaves, eps=1e-4, max_coords=3, rng=np.random.default_rng(seed))


def run_suite(trials=100, seed=0):
    """(name, max_rel_err, tolerance, passed) rows for ops plus the full model."""
    rows = []
    for name, err in sorted(check_ops(trials, seed).items()):
        rows.append((name, err, OP_TOL, err < OP_TOL))
    e2e = check_model(seed)
    rows.append(("full_model_forward", e2e, END_TO_END_TOL, e2e < END_TO_END_TOL))
    return rows
