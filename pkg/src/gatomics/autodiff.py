"""Dense float64 tensors with a recorded-operation tape for exact
reverse-mode gradients.

A :class:`Tape` is a context manager; while active (one per thread), every
primitive that touches a gradient-requiring tensor appends a record with the
vector-Jacobian closures of its inputs. :func:`backward` walks the records in
reverse execution order, visiting each exactly once, and accumulates
gradients into the ``.grad`` slots of the leaves.

Every forward primitive validates that its output is finite and raises
otherwise. There is no general broadcasting: elementwise binary ops accept
equal shapes or a trailing per-channel vector (row-wise bias form).

Layout convention for the graph ops: nodes and edges live on axis 0, so
node tensors are (nodes, ...) and per-edge tensors (edges, ...). Segmented
ops group edge entries by a destination id; internally they sort once and
reduce with ``np.add.reduceat`` on axis 0, which keeps results deterministic
(fixed summation order) and fast.
"""

import threading
from dataclasses import dataclass

import numpy as np

_STATE = threading.local()


def _active_tape():
    return getattr(_STATE, "tape", None)


class Tensor:
    """A float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


class Tape:
    """Execution-ordered operation record; activate with ``with Tape() as t:``."""

    def __init__(self):
        self._records = []  # (output Tensor, [(parent Tensor, vjp fn), ...])

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active in this thread")
        _STATE.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _STATE.tape = None
        return False

    def __len__(self):
        return len(self._records)


def _finite_or_raise(data, op):
    # one-pass screen: any nan/inf in the array makes the sum non-finite
    if not np.isfinite(np.sum(data)) and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")


def _emit(data, pairs, op):
    """Build the output tensor and record the op if a tape is active."""
    _finite_or_raise(data, op)
    out = Tensor(data)
    tape = _active_tape()
    tracked = [(p, fn) for p, fn in pairs if p.requires_grad]
    if tape is not None and tracked:
        out.requires_grad = True
        tape._records.append((out, tracked))
    return out


def backward(tape, loss, leaves=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` for every reached leaf.

    ``loss`` must be a scalar produced on ``tape``. Leaves passed explicitly
    that are not on any path to the loss receive a zero gradient.

    vjp closures may return views or the upstream gradient itself; ownership
    is tracked so borrowed arrays are never mutated in place.
    """
    if loss.ndim != 0:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    out_ids = {id(out) for out, _ in tape._records}
    if id(loss) not in out_ids:
        raise ValueError("loss was not produced on this tape")
    grads = {id(loss): (np.ones((), dtype=np.float64), True)}
    holders = {id(loss): loss}
    for out, pairs in reversed(tape._records):
        entry = grads.pop(id(out), None)
        holders.pop(id(out), None)
        if entry is None:
            continue
        g = entry[0]
        for parent, vjp in pairs:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                acc, owned = grads[key]
                if owned:
                    acc += contrib
                else:
                    grads[key] = (acc + contrib, True)
            else:
                grads[key] = (contrib, False)
                holders[key] = parent
    for key, t in holders.items():
        if t.requires_grad:
            g = np.asarray(grads[key][0])
            t.grad = g.copy() if t.grad is None else t.grad + g
    if leaves is not None:
        for t in leaves:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra primitives


def _binary_shapes(a, b, op):
    if a.shape == b.shape:
        return "same"
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return "channel"  # b broadcast along every leading axis of a
    raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to_channel(g):
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


def add(a, b):
    mode = _binary_shapes(a, b, "add")
    data = a.data + b.data
    db = (lambda g: g) if mode == "same" else _reduce_to_channel
    return _emit(data, [(a, lambda g: g), (b, db)], "add")


def sub(a, b):
    mode = _binary_shapes(a, b, "sub")
    data = a.data - b.data
    db = (lambda g: -g) if mode == "same" else (lambda g: -_reduce_to_channel(g))
    return _emit(data, [(a, lambda g: g), (b, db)], "sub")


def mul(a, b):
    mode = _binary_shapes(a, b, "mul")
    ad, bd = a.data, b.data
    data = ad * bd
    da = lambda g: g * bd
    if mode == "same":
        db = lambda g: g * ad
    else:
        db = lambda g: _reduce_to_channel(g * ad)
    return _emit(data, [(a, da), (b, db)], "mul")


def add_scalar(a, c):
    c = float(c)
    return _emit(a.data + c, [(a, lambda g: g)], "add_scalar")


def mul_scalar(a, c):
    c = float(c)
    return _emit(a.data * c, [(a, lambda g: g * c)], "mul_scalar")


def powf(a, exponent):
    exponent = float(exponent)
    x = a.data
    if exponent != round(exponent) and np.any(x < 0.0):
        raise ValueError("powf with a fractional exponent needs nonnegative input")
    if exponent < 0.0 and np.any(x == 0.0):
        raise ValueError("powf with a negative exponent needs nonzero input")
    data = x ** exponent
    return _emit(data, [(a, lambda g: g * exponent * x ** (exponent - 1.0))], "powf")


def matmul(a, b):
    """a @ b for a of rank 2 or 3 and b a matrix or vector."""
    ad, bd = a.data, b.data
    if ad.ndim not in (2, 3):
        raise ValueError(f"matmul: left operand must be rank 2 or 3, got {ad.ndim}")
    if bd.ndim == 2:
        if ad.shape[-1] != bd.shape[0]:
            raise ValueError(f"matmul: inner dims {ad.shape} @ {bd.shape}")
        data = ad @ bd
        da = lambda g: g @ bd.T
        if ad.ndim == 2:
            db = lambda g: ad.T @ g
        else:
            db = lambda g: np.tensordot(ad, g, axes=([0, 1], [0, 1]))
    elif bd.ndim == 1:
        if ad.shape[-1] != bd.shape[0]:
            raise ValueError(f"matmul: inner dims {ad.shape} @ {bd.shape}")
        data = ad @ bd
        da = lambda g: g[..., None] * bd
        db = lambda g: np.tensordot(g, ad, axes=(tuple(range(g.ndim)),
                                                 tuple(range(g.ndim))))
    else:
        raise ValueError(f"matmul: right operand must be rank 1 or 2, got {bd.ndim}")
    return _emit(data, [(a, da), (b, db)], "matmul")


def leaky_relu(a, slope):
    x = a.data
    slope = float(slope)
    positive = x > 0.0  # bool mask: 8x lighter on the tape than a float factor
    data = np.where(positive, x, slope * x)

    def vjp(g):
        return np.where(positive, g, slope * g)

    return _emit(data, [(a, vjp)], "leaky_relu")


def exp(a):
    with np.errstate(over="ignore"):  # overflow becomes the finite-check error
        data = np.exp(a.data)
    return _emit(data, [(a, lambda g: g * data)], "exp")


def log(a):
    x = a.data
    if np.any(x <= 0.0):
        raise ValueError("log requires strictly positive input")
    return _emit(np.log(x), [(a, lambda g: g / x)], "log")


def reshape(a, shape):
    old = a.shape
    return _emit(a.data.reshape(shape), [(a, lambda g: g.reshape(old))], "reshape")


def transpose2(a):
    """Swap the first two axes."""
    if a.ndim < 2:
        raise ValueError("transpose2 needs at least 2 axes")
    data = np.swapaxes(a.data, 0, 1).copy()
    return _emit(data, [(a, lambda g: np.swapaxes(g, 0, 1))], "transpose2")


def concat_rows(a, b):
    """Concatenate along axis 0 (all trailing dims must match)."""
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"concat_rows: trailing shapes differ: {a.shape} vs {b.shape}")
    split = a.shape[0]
    data = np.concatenate([a.data, b.data], axis=0)
    return _emit(data, [(a, lambda g: g[:split]),
                        (b, lambda g: g[split:])], "concat_rows")


def concat_cols(a, b):
    """Concatenate two rank-2 tensors along axis 1."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols: incompatible shapes {a.shape} and {b.shape}")
    split = a.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)
    return _emit(data, [(a, lambda g: g[:, :split]),
                        (b, lambda g: g[:, split:])], "concat_cols")


def slice_vec(a, start, stop):
    """Contiguous slice of a 1-D tensor."""
    if a.ndim != 1:
        raise ValueError("slice_vec expects a 1-D tensor")
    n = a.shape[0]

    def vjp(g):
        z = np.zeros(n)
        z[start:stop] = g
        return z

    return _emit(a.data[start:stop].copy(), [(a, vjp)], "slice_vec")


def mean_over_axis(a, axis=None):
    x = a.data
    shape = x.shape
    data = x.mean(axis=axis)
    if axis is None:
        count = x.size
        vjp = lambda g: np.full(shape, float(g) / count)
    else:
        count = shape[axis]
        vjp = lambda g: np.broadcast_to(np.expand_dims(g, axis) / count, shape)
    return _emit(data, [(a, vjp)], "mean_over_axis")


def variance_over_axis(a, axis):
    """Population variance along one axis."""
    x = a.data
    mean = x.mean(axis=axis, keepdims=True)
    centered = x - mean
    count = x.shape[axis]
    data = (centered ** 2).mean(axis=axis)

    def vjp(g):
        return 2.0 * centered * np.expand_dims(g, axis) / count

    return _emit(data, [(a, vjp)], "variance_over_axis")


def log_softmax_rows(a):
    if a.ndim != 2:
        raise ValueError("log_softmax_rows expects a rank-2 tensor")
    x = a.data
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    data = shifted - lse
    softmax = np.exp(data)

    def vjp(g):
        return g - softmax * g.sum(axis=1, keepdims=True)

    return _emit(data, [(a, vjp)], "log_softmax_rows")


def dropout(a, rate, rng=None, training=False):
    """Inverted dropout: zero with probability ``rate``, scale by 1/(1-rate).

    Identity in eval mode. Randomness comes only from the explicit ``rng``
    generator, which is required in training mode.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout requires an explicit rng")
    scale = 1.0 / (1.0 - rate)
    keep = rng.random(a.shape) >= rate
    data = np.where(keep, a.data * scale, 0.0)

    def vjp(g):
        return np.where(keep, g * scale, 0.0)

    return _emit(data, [(a, vjp)], "dropout")


def take_per_row(a, idx):
    """out[i] = a[i, idx[i]] for a rank-2 tensor."""
    if a.ndim != 2:
        raise ValueError("take_per_row expects a rank-2 tensor")
    idx = np.asarray(idx, dtype=np.int64)
    rows, cols = a.shape
    if idx.shape != (rows,):
        raise ValueError("take_per_row: one index per row required")
    if idx.size and (idx.min() < 0 or idx.max() >= cols):
        raise IndexError("take_per_row: index out of range")
    r = np.arange(rows)

    def vjp(g):
        z = np.zeros((rows, cols))
        z[r, idx] = g
        return z

    return _emit(a.data[r, idx].copy(), [(a, vjp)], "take_per_row")


# ---------------------------------------------------------------------------
# graph ops: nodes/edges on axis 0, edge entries grouped by destination id


def _segment_layout(segment_ids):
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("segment ids must be a non-empty 1-D array")
    if ids.min() < 0:
        raise ValueError("unknown segment id (negative)")
    if np.all(ids[1:] >= ids[:-1]):
        order = None
        sorted_ids = ids
    else:
        order = np.argsort(ids, kind="stable")
        sorted_ids = ids[order]
    new_seg = np.empty(ids.size, dtype=bool)
    new_seg[0] = True
    np.not_equal(sorted_ids[1:], sorted_ids[:-1], out=new_seg[1:])
    starts = np.flatnonzero(new_seg)
    ordinal = np.cumsum(new_seg) - 1  # segment ordinal of each sorted entry
    present = sorted_ids[starts]
    return order, starts, ordinal, present


def _segment_sum(arr, layout, num_segments):
    """Sum axis-0 entries into their segments; absent segments give zeros."""
    order, starts, _, present = layout
    src = arr if order is None else arr[order]
    sums = np.add.reduceat(src, starts, axis=0)
    if present.size == num_segments:
        return sums
    z = np.zeros((num_segments,) + arr.shape[1:])
    z[present] = sums
    return z


def take_nodes(x, idx):
    """Gather rows (axis 0) of a node tensor: out[e] = x[idx[e]]."""
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]
    if idx.size == 0:
        raise ValueError("take_nodes: empty index")
    if idx.min() < 0 or idx.max() >= n:
        raise IndexError("take_nodes: index out of range")
    layout = _segment_layout(idx)
    return _emit(x.data[idx], [(x, lambda g: _segment_sum(g, layout, n))],
                 "take_nodes")


def segment_softmax(logits, segment_ids):
    """Softmax within each segment along axis 0.

    The per-segment maximum is subtracted before exponentiation, so outputs
    are invariant to a constant shift within a segment.
    """
    if logits.shape[0] != np.asarray(segment_ids).shape[0]:
        raise ValueError("segment ids must match axis 0 of the logits")
    order, starts, ordinal, _ = _segment_layout(segment_ids)
    xs = logits.data if order is None else logits.data[order]
    seg_max = np.maximum.reduceat(xs, starts, axis=0)
    e = np.exp(xs - seg_max[ordinal])
    seg_sum = np.add.reduceat(e, starts, axis=0)
    ys = e / seg_sum[ordinal]
    if order is None:
        data = ys
    else:
        data = np.empty_like(ys)
        data[order] = ys

    def vjp(g):
        gs = g if order is None else g[order]
        dot = np.add.reduceat(gs * ys, starts, axis=0)
        dxs = ys * (gs - dot[ordinal])
        if order is None:
            return dxs
        out = np.empty_like(dxs)
        out[order] = dxs
        return out

    return _emit(data, [(logits, vjp)], "segment_softmax")


def segment_weighted_sum(weights, values, segment_ids, num_segments):
    """out[s] = sum over entries e with segment_ids[e] == s of
    weights[e] * values[e].

    ``weights`` is (entries,) or (entries, batch); ``values`` carries one
    extra trailing channel axis. Segments without entries yield zero rows.
    """
    idx = np.asarray(segment_ids, dtype=np.int64)
    if weights.ndim not in (1, 2) or values.ndim != weights.ndim + 1:
        raise ValueError("segment_weighted_sum expects (E,[S]) weights and an "
                         "extra channel axis on values")
    if weights.shape != values.shape[:-1]:
        raise ValueError("weights and values disagree on entry/batch dims")
    if idx.shape != (weights.shape[0],):
        raise ValueError("segment ids must match the entry axis")
    if idx.size and (idx.min() < 0 or idx.max() >= num_segments):
        raise ValueError("unknown segment id")
    w, v = weights.data, values.data
    layout = _segment_layout(idx)
    prod = w[..., None] * v
    data = _segment_sum(prod, layout, num_segments)

    def vjp_w(g):
        return (g[idx] * v).sum(axis=-1)

    def vjp_v(g):
        return g[idx] * w[..., None]

    return _emit(data, [(weights, vjp_w), (values, vjp_v)],
                 "segment_weighted_sum")


def attention_aggregate(alpha, proj, edge_src, edge_dst, num_nodes):
    """Fused neighborhood aggregation: out[i] = sum over edges (j -> i) of
    alpha_e * proj[j].

    Semantically identical to
    ``segment_weighted_sum(alpha, take_nodes(proj, edge_src), edge_dst, n)``
    but the per-edge gather is recomputed during backward instead of being
    stored on the tape, which keeps the peak memory at one edge-sized array.
    ``alpha`` is (edges, batch) and ``proj`` (nodes, batch, channels).
    """
    src = np.asarray(edge_src, dtype=np.int64)
    dst = np.asarray(edge_dst, dtype=np.int64)
    if alpha.ndim != 2 or proj.ndim != 3:
        raise ValueError("attention_aggregate expects (E,S) alpha, (N,S,F) proj")
    if src.shape != (alpha.shape[0],) or dst.shape != (alpha.shape[0],):
        raise ValueError("edge index must match the entry axis of alpha")
    if proj.shape[0] != num_nodes:
        raise ValueError("proj must have one row per node")
    if src.size and (src.min() < 0 or src.max() >= num_nodes):
        raise IndexError("edge source out of range")
    if dst.size and (dst.min() < 0 or dst.max() >= num_nodes):
        raise IndexError("edge destination out of range")
    a, p = alpha.data, proj.data
    dst_layout = _segment_layout(dst)
    src_layout = _segment_layout(src)
    data = _segment_sum(a[:, :, None] * p[src], dst_layout, num_nodes)

    def vjp_alpha(g):
        return (g[dst] * p[src]).sum(axis=-1)

    def vjp_proj(g):
        return _segment_sum(a[:, :, None] * g[dst], src_layout, num_nodes)

    return _emit(data, [(alpha, vjp_alpha), (proj, vjp_proj)],
                 "attention_aggregate")


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tolerance: float
    worst_param: str
    worst_index: int
    worst_analytic: float
    worst_numeric: float

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance

    def summary(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: max relative error {self.max_rel_error:.3e} "
                f"(tolerance {self.tolerance:.1e}) over {self.n_checked} entries; "
                f"worst at {self.worst_param}[{self.worst_index}] "
                f"analytic={self.worst_analytic:.6e} numeric={self.worst_numeric:.6e}")


def grad_check(fn, params, h=1e-5, tolerance=1e-4, rng=None, max_entries=None):
    """Compare tape gradients of ``fn()`` against central finite differences.

    ``fn`` must be a deterministic closure over ``params`` returning a scalar
    Tensor (dropout disabled or its mask frozen); non-determinism is detected
    by evaluating twice and raises. With ``max_entries`` set, a seeded random
    subsample of at least 200 entries is checked instead of every entry.
    """
    base1 = float(fn().data)
    base2 = float(fn().data)
    if base1 != base2:
        raise RuntimeError("grad_check requires a deterministic function "
                           "(freeze dropout masks or disable dropout)")

    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = fn()
        backward(tape, loss, leaves=params)
    analytic = [p.grad.copy() for p in params]

    entries = [(k, i) for k, p in enumerate(params) for i in range(p.size)]
    if max_entries is not None and len(entries) > max_entries:
        if rng is None:
            raise ValueError("subsampling entries requires a seeded rng")
        n_pick = min(len(entries), max(200, int(max_entries)))
        chosen = rng.choice(len(entries), size=n_pick, replace=False)
        entries = [entries[int(c)] for c in sorted(chosen)]

    worst = (-1.0, "", 0, 0.0, 0.0)
    for k, i in entries:
        p = params[k]
        flat = p.data.reshape(-1)
        saved = flat[i]
        flat[i] = saved + h
        f_plus = float(fn().data)
        flat[i] = saved - h
        f_minus = float(fn().data)
        flat[i] = saved
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[k].reshape(-1)[i])
        rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        if rel > worst[0]:
            name = p.name or f"param{k}"
            worst = (rel, name, i, a, numeric)
    return GradCheckReport(worst[0], len(entries), tolerance,
                           worst[1], worst[2], worst[3], worst[4])
