"""Graph attention classifier over a fixed shared topology.

Architecture: a stack of attention layers (four in the default pipeline),
each followed by batch normalization, LeakyReLU (slope 0.01), and dropout;
then a readout over nodes (mean by default, flatten as an alternative) and
a fully connected head producing per-class log-probabilities.

Two LeakyReLU slopes appear on purpose: the attention logits use the
conventional 0.2 inside each layer, while the post-batch-norm activation
uses 0.01. The attention layer itself applies no extra nonlinearity (the
activation lives after the batch norm), so values are aggregated linearly:
h'_i = sum over incoming edges (j -> i) of alpha_ij * (W h_j), with the
alpha computed as a softmax over each destination's incident edges of
LeakyReLU(a . [W h_i || W h_j]).
"""

import json

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_FORMAT = "gatomics-checkpoint"
CHECKPOINT_VERSION = 1


class GatLayerParams:
    """One attention layer: projection W (f_in x f_out) and attention vector a (2*f_out)."""

    def __init__(self, W, a, name="layer"):
        self.W = W if isinstance(W, Tensor) else Tensor(W, requires_grad=True)
        self.a = a if isinstance(a, Tensor) else Tensor(a, requires_grad=True)
        self.W.name = f"{name}.W"
        self.a.name = f"{name}.a"
        f_in, f_out = self.W.shape
        if self.a.shape != (2 * f_out,):
            raise ValueError(f"attention vector must have length {2 * f_out}, "
                             f"got {self.a.shape}")

    @property
    def f_out(self):
        return self.W.shape[1]


class BatchNormParams:
    """Per-channel scale/shift plus running statistics.

    Running statistics store the same population (biased) variance used to
    normalize in training, so momentum = 1 makes an eval pass reproduce the
    training-mode output on the same batch.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5, name="bn"):
        if not (0.0 < momentum <= 1.0):
            raise ValueError(f"momentum must lie in (0, 1], got {momentum}")
        if eps <= 0.0:
            raise ValueError("epsilon must be positive")
        self.gamma = Tensor(np.ones(channels), requires_grad=True, name=f"{name}.gamma")
        self.beta = Tensor(np.zeros(channels), requires_grad=True, name=f"{name}.beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps


class GatModel:
    """Parameter container for the full classifier."""

    def __init__(self, layers, head_w, head_b, dims, n_classes, readout="mean",
                 n_nodes=None, dropout_rate=0.5, attn_slope=0.2, act_slope=0.01,
                 seed=None, extra_dim=0):
        if readout not in ("mean", "flatten"):
            raise ValueError(f"readout must be 'mean' or 'flatten', got {readout!r}")
        if readout == "flatten" and n_nodes is None:
            raise ValueError("flatten readout requires n_nodes")
        self.layers = layers  # list of (GatLayerParams, BatchNormParams)
        self.head_w = head_w
        self.head_b = head_b
        self.dims = list(dims)
        self.n_classes = n_classes
        self.extra_dim = int(extra_dim)
        self.readout = readout
        self.n_nodes = n_nodes
        self.dropout_rate = dropout_rate
        self.attn_slope = attn_slope
        self.act_slope = act_slope
        self.seed = seed

    def parameters(self):
        params = []
        for gat, bn in self.layers:
            params.extend([gat.W, gat.a, bn.gamma, bn.beta])
        params.extend([self.head_w, self.head_b])
        return params


def init_params(seed, dims, n_classes, readout="mean", n_nodes=None,
                dropout_rate=0.5, attn_slope=0.2, act_slope=0.01,
                bn_momentum=0.1, bn_eps=1e-5, extra_dim=0):
    """Glorot-uniform initialization, fully determined by the seed.

    ``dims`` is ``[f_in, h1, ..., hL]``; the default pipeline uses four
    hidden entries. Weight entries are uniform in +-sqrt(6/(fan_in+fan_out)),
    the attention vector treats its output as a single unit, batch-norm
    starts at identity, and the head bias starts at zero.
    """
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError("dims must list positive sizes [f_in, h1, ...]")
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if readout == "flatten" and n_nodes is None:
        raise ValueError("flatten readout requires n_nodes")
    rng = np.random.default_rng(seed)
    layers = []
    for l in range(len(dims) - 1):
        f_in, f_out = dims[l], dims[l + 1]
        w_bound = np.sqrt(6.0 / (f_in + f_out))
        a_bound = np.sqrt(6.0 / (2 * f_out + 1))
        W = rng.uniform(-w_bound, w_bound, size=(f_in, f_out))
        a = rng.uniform(-a_bound, a_bound, size=2 * f_out)
        gat = GatLayerParams(Tensor(W, requires_grad=True),
                             Tensor(a, requires_grad=True), name=f"layer{l}")
        bn = BatchNormParams(f_out, momentum=bn_momentum, eps=bn_eps, name=f"bn{l}")
        layers.append((gat, bn))
    read_dim = dims[-1] if readout == "mean" else dims[-1] * int(n_nodes)
    read_dim += int(extra_dim)  # appended raw features enter at the head
    h_bound = np.sqrt(6.0 / (read_dim + n_classes))
    head_w = Tensor(rng.uniform(-h_bound, h_bound, size=(read_dim, n_classes)),
                    requires_grad=True, name="head.W")
    head_b = Tensor(np.zeros(n_classes), requires_grad=True, name="head.b")
    return GatModel(layers, head_w, head_b, dims, n_classes, readout=readout,
                    n_nodes=n_nodes, dropout_rate=dropout_rate,
                    attn_slope=attn_slope, act_slope=act_slope, seed=seed,
                    extra_dim=extra_dim)


def _check_incoming(edge_dst, n_nodes):
    if n_nodes < 1 or edge_dst.size == 0:
        raise ValueError("empty graph")
    incoming = np.bincount(edge_dst, minlength=n_nodes)
    if incoming.min() == 0:
        missing = int(np.argmin(incoming))
        raise ValueError(f"node {missing} has no incoming edges; "
                         "edge index must include self-loops")


def _gat_layer_node_major(h, params, edge_src, edge_dst, n_nodes, slope):
    """Attention layer on node-major features (nodes, batch, f_in).

    Returns ``(h', alpha)`` with alpha of shape (edges, batch).
    """
    f_out = params.f_out
    proj = ad.matmul(h, params.W)                      # (N, S, f_out)
    score_dst = ad.matmul(proj, ad.slice_vec(params.a, 0, f_out))        # (N, S)
    score_src = ad.matmul(proj, ad.slice_vec(params.a, f_out, 2 * f_out))
    logits = ad.leaky_relu(
        ad.add(ad.take_nodes(score_dst, edge_dst), ad.take_nodes(score_src, edge_src)),
        slope)                                         # (E, S)
    alpha = ad.segment_softmax(logits, edge_dst)
    h_next = ad.attention_aggregate(alpha, proj, edge_src, edge_dst, n_nodes)
    return h_next, alpha


def gat_layer_forward(h, params, edge_src, edge_dst, n_nodes, slope=0.2):
    """One attention layer on batched node features.

    ``h`` is (batch, nodes, f_in); the edge index must contain a self-loop
    for every node (a node with no incoming edge would receive no message
    and is rejected). Returns ``(h', alpha)``: the new features
    (batch, nodes, f_out) and the per-edge attention coefficients
    (batch, edges) as a plain array.
    """
    edge_src = np.asarray(edge_src, dtype=np.int64)
    edge_dst = np.asarray(edge_dst, dtype=np.int64)
    if not isinstance(h, Tensor):
        h = Tensor(h)
    if h.ndim != 3:
        raise ValueError("node features must be (batch, nodes, channels)")
    _check_incoming(edge_dst, n_nodes)
    h_nm = ad.transpose2(h)                            # (N, S, f_in)
    out, alpha = _gat_layer_node_major(h_nm, params, edge_src, edge_dst,
                                       n_nodes, slope)
    return ad.transpose2(out), alpha.data.T.copy()


def batch_norm_forward(x, params, training):
    """Normalize per channel over all rows, then scale and shift.

    Training mode uses the batch statistics and folds them into the running
    statistics with the configured momentum; eval mode uses the running
    statistics only.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim != 2:
        raise ValueError("batch norm input must be (rows, channels)")
    if training:
        if x.shape[0] < 2:
            raise ValueError("training-mode batch norm needs at least 2 rows")
        mean = ad.mean_over_axis(x, axis=0)
        var = ad.variance_over_axis(x, axis=0)
        m = params.momentum
        params.running_mean = (1.0 - m) * params.running_mean + m * mean.data
        params.running_var = (1.0 - m) * params.running_var + m * var.data
        inv = ad.powf(ad.add_scalar(var, params.eps), -0.5)
        normalized = ad.mul(ad.sub(x, mean), inv)
    else:
        inv = 1.0 / np.sqrt(params.running_var + params.eps)
        normalized = ad.mul(ad.sub(x, Tensor(params.running_mean)), Tensor(inv))
    return ad.add(ad.mul(normalized, params.gamma), params.beta)


def model_forward(model, feats, edge_src, edge_dst, training=False, rng=None,
                  collect_attention=False, extra=None):
    """Full forward pass: per-sample class log-probabilities (batch x K).

    Eval mode is a pure function of the inputs and parameters; training mode
    needs an explicit ``rng`` for the dropout masks. With
    ``collect_attention`` the per-layer attention coefficient arrays
    (batch x edges) are returned alongside the output. Models built with
    ``extra_dim > 0`` require ``extra`` (batch x extra_dim): raw per-sample
    values appended to the readout before the head.
    """
    if isinstance(feats, Tensor):
        if feats.ndim != 3:
            raise ValueError("inputs must be (batch, nodes, channels)")
        h = ad.transpose2(feats) if feats.requires_grad else \
            Tensor(np.ascontiguousarray(np.swapaxes(feats.data, 0, 1)))
    else:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 3:
            raise ValueError("inputs must be (batch, nodes, channels)")
        h = Tensor(np.ascontiguousarray(np.swapaxes(feats, 0, 1)))
    edge_src = np.asarray(edge_src, dtype=np.int64)
    edge_dst = np.asarray(edge_dst, dtype=np.int64)
    # node-major layout inside: h is (nodes, batch, channels)
    n_nodes, batch, channels = h.shape
    if channels != model.dims[0]:
        raise ValueError(f"input channels {channels} != model input dim {model.dims[0]}")
    if model.readout == "flatten" and n_nodes != model.n_nodes:
        raise ValueError(f"flatten readout built for {model.n_nodes} nodes, "
                         f"got {n_nodes}")
    _check_incoming(edge_dst, n_nodes)
    attention = []
    for gat, bn in model.layers:
        h, alpha = _gat_layer_node_major(h, gat, edge_src, edge_dst, n_nodes,
                                         model.attn_slope)
        if collect_attention:
            attention.append(alpha.data.T.copy())
        rows = ad.reshape(h, (n_nodes * batch, gat.f_out))
        rows = batch_norm_forward(rows, bn, training)
        rows = ad.leaky_relu(rows, model.act_slope)
        rows = ad.dropout(rows, model.dropout_rate, rng=rng, training=training)
        h = ad.reshape(rows, (n_nodes, batch, gat.f_out))
    if model.readout == "mean":
        read = ad.mean_over_axis(h, axis=0)
    else:
        read = ad.reshape(ad.transpose2(h), (batch, n_nodes * model.dims[-1]))
    if model.extra_dim:
        if extra is None:
            raise ValueError(f"model expects {model.extra_dim} appended values "
                             "per sample (extra=...)")
        extra = np.asarray(extra, dtype=np.float64)
        if extra.shape != (batch, model.extra_dim):
            raise ValueError(f"extra must be ({batch}, {model.extra_dim}), "
                             f"got {extra.shape}")
        read = ad.concat_cols(read, Tensor(extra))
    elif extra is not None:
        raise ValueError("model was built without an extra_dim")
    logits = ad.add(ad.matmul(read, model.head_w), model.head_b)
    log_probs = ad.log_softmax_rows(logits)
    if collect_attention:
        return log_probs, attention
    return log_probs


def predict(model, feats, edge_src, edge_dst, extra=None):
    """Eval-mode class predictions (first index wins ties)."""
    log_probs = model_forward(model, feats, edge_src, edge_dst, training=False,
                              extra=extra)
    return np.argmax(log_probs.data, axis=1)


def save_model(model, path):
    """Write a versioned JSON checkpoint; reload is bit-exact."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "dims": model.dims,
        "n_classes": model.n_classes,
        "extra_dim": model.extra_dim,
        "readout": model.readout,
        "n_nodes": model.n_nodes,
        "dropout_rate": model.dropout_rate,
        "attn_slope": model.attn_slope,
        "act_slope": model.act_slope,
        "seed": model.seed,
        "layers": [
            {
                "W": gat.W.data.tolist(),
                "a": gat.a.data.tolist(),
                "gamma": bn.gamma.data.tolist(),
                "beta": bn.beta.data.tolist(),
                "running_mean": bn.running_mean.tolist(),
                "running_var": bn.running_var.tolist(),
                "momentum": bn.momentum,
                "eps": bn.eps,
            }
            for gat, bn in model.layers
        ],
        "head": {"W": model.head_w.data.tolist(), "b": model.head_b.data.tolist()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    layers = []
    for l, entry in enumerate(payload["layers"]):
        gat = GatLayerParams(Tensor(np.array(entry["W"]), requires_grad=True),
                             Tensor(np.array(entry["a"]), requires_grad=True),
                             name=f"layer{l}")
        bn = BatchNormParams(len(entry["gamma"]), momentum=entry["momentum"],
                             eps=entry["eps"], name=f"bn{l}")
        bn.gamma.data = np.array(entry["gamma"])
        bn.beta.data = np.array(entry["beta"])
        bn.running_mean = np.array(entry["running_mean"])
        bn.running_var = np.array(entry["running_var"])
        layers.append((gat, bn))
    head_w = Tensor(np.array(payload["head"]["W"]), requires_grad=True, name="head.W")
    head_b = Tensor(np.array(payload["head"]["b"]), requires_grad=True, name="head.b")
    return GatModel(layers, head_w, head_b, payload["dims"], payload["n_classes"],
                    readout=payload["readout"], n_nodes=payload["n_nodes"],
                    dropout_rate=payload["dropout_rate"],
                    attn_slope=payload["attn_slope"], act_slope=payload["act_slope"],
                    seed=payload["seed"], extra_dim=payload.get("extra_dim", 0))
