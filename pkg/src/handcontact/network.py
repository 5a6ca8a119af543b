"""Bidirectional LSTM contact classifier in plain numpy.

Per frame: a two-layer ReLU + LayerNorm encoder, then a stack of
bidirectional LSTM layers, then a three-layer perceptron giving one logit.
All parameters live in one flat float64 vector so the optimizer and the
checkpoint format see a single array; ``SeqModel.params`` holds named views.
"""
from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

LN_EPS = 1e-5
CHECKPOINT_MAGIC = b"HCMODEL1"
DIRECTIONS = ("fwd", "bwd")


@dataclass(frozen=True)
class ModelConfig:
    n_features: int = 12
    encoder_size: int = 64
    hidden_size: int = 64
    n_layers: int = 2
    head_sizes: tuple = (64, 32)

    def __post_init__(self):
        if min(self.n_features, self.encoder_size, self.hidden_size, self.n_layers) < 1:
            raise ValueError("model sizes must be >= 1")
        object.__setattr__(self, "head_sizes", tuple(int(h) for h in self.head_sizes))


def parameter_shapes(cfg: ModelConfig) -> list:
    D, E, H = cfg.n_features, cfg.encoder_size, cfg.hidden_size
    shapes = [
        ("enc.W1", (D, E)), ("enc.b1", (E,)), ("enc.g1", (E,)), ("enc.s1", (E,)),
        ("enc.W2", (E, E)), ("enc.b2", (E,)), ("enc.g2", (E,)), ("enc.s2", (E,)),
    ]
    n_in = E
    for layer in range(cfg.n_layers):
        for d in DIRECTIONS:
            p = f"lstm{layer}.{d}."
            shapes += [(p + "W", (n_in, 4 * H)), (p + "U", (H, 4 * H)), (p + "b", (4 * H,))]
        n_in = 2 * H
    sizes = [2 * H, *cfg.head_sizes, 1]
    for k in range(len(sizes) - 1):
        shapes += [(f"head.W{k + 1}", (sizes[k], sizes[k + 1])), (f"head.b{k + 1}", (sizes[k + 1],))]
    return shapes


def _fan_in(name, shape, cfg):
    if name.endswith(".U") or (name.startswith("lstm") and name.endswith(".b")):
        return cfg.hidden_size
    return shape[0]


class SeqModel:
    def __init__(self, cfg: ModelConfig | None = None, seed=0, flat=None):
        self.cfg = cfg or ModelConfig()
        self.shapes = parameter_shapes(self.cfg)
        size = sum(int(np.prod(s)) for _, s in self.shapes)
        if flat is None:
            flat = np.zeros(size)
            self.flat = flat
            self._bind()
            self._init(seed)
        else:
            flat = np.asarray(flat, dtype=np.float64)
            if flat.shape != (size,):
                raise ValueError(f"expected {size} parameters, got {flat.shape}")
            self.flat = flat.copy()
            self._bind()

    def _bind(self):
        self.params = {}
        pos = 0
        for name, shape in self.shapes:
            n = int(np.prod(shape))
            self.params[name] = self.flat[pos:pos + n].reshape(shape)
            pos += n

    def _init(self, seed):
        rng = np.random.default_rng(seed)
        for name, shape in self.shapes:
            p = self.params[name]
            if name.startswith("enc.g"):
                p[...] = 1.0
            elif name.startswith("enc.s"):
                p[...] = 0.0
            else:
                s = 1.0 / np.sqrt(_fan_in(name, shape, self.cfg))
                p[...] = rng.uniform(-s, s, shape)

    @property
    def n_params(self):
        return self.flat.size

    def copy(self):
        return SeqModel(self.cfg, flat=self.flat)

    def zeros_like(self):
        """Gradient container with the same layout."""
        return SeqModel(self.cfg, flat=np.zeros_like(self.flat))

    def groups(self):
        return [name for name, _ in self.shapes]


# ---------------------------------------------------------------- layers


def _sigmoid(x):
    # tanh form: stable for any magnitude, no branching
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _layernorm(x, g, s):
    n = x.shape[-1]
    d = x - x.sum(axis=-1, keepdims=True) / n
    inv = 1.0 / np.sqrt((d * d).sum(axis=-1, keepdims=True) / n + LN_EPS)
    xhat = d * inv
    return xhat * g + s, (xhat, inv)


def _layernorm_back(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=0)
    ds = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, ds


@njit(cache=True)
def _lstm_scan(xw, U, hs, cs, gates, tanh_c):
    T, G = xw.shape
    H = G // 4
    for t in range(T):
        a = xw[t].copy()
        for j in range(H):
            hj = hs[t, j]
            for k in range(G):
                a[k] += hj * U[j, k]
        for k in range(3 * H):
            gates[t, k] = 0.5 * np.tanh(0.5 * a[k]) + 0.5
        for k in range(3 * H, G):
            gates[t, k] = np.tanh(a[k])
        for j in range(H):
            c = gates[t, H + j] * cs[t, j] + gates[t, j] * gates[t, 3 * H + j]
            cs[t + 1, j] = c
            tc = np.tanh(c)
            tanh_c[t, j] = tc
            hs[t + 1, j] = gates[t, 2 * H + j] * tc


@njit(cache=True)
def _lstm_scan_back(dh_out, U, cs, gates, tanh_c, da):
    T, H = dh_out.shape
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        for j in range(H):
            i = gates[t, j]
            f = gates[t, H + j]
            o = gates[t, 2 * H + j]
            g = gates[t, 3 * H + j]
            tc = tanh_c[t, j]
            dh = dh_out[t, j] + dh_next[j]
            dc = dh * o * (1.0 - tc * tc) + dc_next[j]
            da[t, j] = dc * g * i * (1.0 - i)
            da[t, H + j] = dc * cs[t, j] * f * (1.0 - f)
            da[t, 2 * H + j] = dh * tc * o * (1.0 - o)
            da[t, 3 * H + j] = dc * i * (1.0 - g * g)
            dc_next[j] = dc * f
        for j in range(H):
            acc = 0.0
            for k in range(4 * H):
                acc += da[t, k] * U[j, k]
            dh_next[j] = acc


def _lstm_forward(x, W, U, b):
    """Single-direction LSTM; gate blocks ordered (input, forget, output, cell)."""
    T = x.shape[0]
    H = U.shape[0]
    xw = np.ascontiguousarray(x @ W + b)
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    tanh_c = np.empty((T, H))
    _lstm_scan(xw, np.ascontiguousarray(U), hs, cs, gates, tanh_c)
    return hs[1:], (x, hs, cs, gates, tanh_c)


def _lstm_backward(dh_out, W, U, cache):
    x, hs, cs, gates, tanh_c = cache
    T, H = dh_out.shape
    da = np.empty((T, 4 * H))
    _lstm_scan_back(np.ascontiguousarray(dh_out), np.ascontiguousarray(U), cs, gates, tanh_c, da)
    dU = hs[:-1].T @ da
    dW = x.T @ da
    db = da.sum(axis=0)
    dx = da @ W.T
    return dx, dW, dU, db


# -------------------------------------------------------------- network


def forward(model: SeqModel, feats, return_cache=False):
    """Per-frame logits for a (T, D) feature sequence."""
    P = model.params
    x = np.asarray(feats, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != model.cfg.n_features:
        raise ValueError(f"features must be (T>=1, {model.cfg.n_features}), got {x.shape}")
    cache = {}
    z1 = x @ P["enc.W1"] + P["enc.b1"]
    a1 = np.maximum(z1, 0.0)
    n1, ln1 = _layernorm(a1, P["enc.g1"], P["enc.s1"])
    z2 = n1 @ P["enc.W2"] + P["enc.b2"]
    a2 = np.maximum(z2, 0.0)
    y, ln2 = _layernorm(a2, P["enc.g2"], P["enc.s2"])
    cache["enc"] = (x, z1, ln1, n1, z2, ln2)

    for layer in range(model.cfg.n_layers):
        outs = []
        for d in DIRECTIONS:
            p = f"lstm{layer}.{d}."
            inp = y if d == "fwd" else np.ascontiguousarray(y[::-1])
            h, c = _lstm_forward(inp, P[p + "W"], P[p + "U"], P[p + "b"])
            cache[p] = c
            outs.append(h if d == "fwd" else h[::-1])
        y = np.concatenate(outs, axis=1)

    n_head = len(model.cfg.head_sizes) + 1
    acts = [y]
    pre = []
    for k in range(1, n_head + 1):
        z = acts[-1] @ P[f"head.W{k}"] + P[f"head.b{k}"]
        pre.append(z)
        if k < n_head:
            acts.append(np.maximum(z, 0.0))
    logits = pre[-1][:, 0]
    cache["head"] = (acts, pre)
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite activation; " + parameter_report(model))
    return (logits, cache) if return_cache else logits


def backward(model: SeqModel, cache, dlogits) -> SeqModel:
    """Gradient of sum(dlogits * logits) with respect to every parameter."""
    P = model.params
    grads = model.zeros_like()
    G = grads.params
    acts, pre = cache["head"]
    n_head = len(pre)
    dz = np.asarray(dlogits, dtype=np.float64)[:, None]
    for k in range(n_head, 0, -1):
        G[f"head.W{k}"][...] = acts[k - 1].T @ dz
        G[f"head.b{k}"][...] = dz.sum(axis=0)
        da = dz @ P[f"head.W{k}"].T
        if k > 1:
            dz = da * (pre[k - 2] > 0)
    dy = da

    H = model.cfg.hidden_size
    for layer in range(model.cfg.n_layers - 1, -1, -1):
        dx_total = None
        for j, d in enumerate(DIRECTIONS):
            p = f"lstm{layer}.{d}."
            dh = dy[:, j * H:(j + 1) * H]
            if d == "bwd":
                dh = np.ascontiguousarray(dh[::-1])
            dx, dW, dU, db = _lstm_backward(dh, P[p + "W"], P[p + "U"], cache[p])
            if d == "bwd":
                dx = dx[::-1]
            G[p + "W"][...] = dW
            G[p + "U"][...] = dU
            G[p + "b"][...] = db
            dx_total = dx if dx_total is None else dx_total + dx
        dy = dx_total

    x, z1, ln1, n1, z2, ln2 = cache["enc"]
    da2, G["enc.g2"][...], G["enc.s2"][...] = _layernorm_back(dy, P["enc.g2"], ln2)
    dz2 = da2 * (z2 > 0)
    G["enc.W2"][...] = n1.T @ dz2
    G["enc.b2"][...] = dz2.sum(axis=0)
    dn1 = dz2 @ P["enc.W2"].T
    da1, G["enc.g1"][...], G["enc.s1"][...] = _layernorm_back(dn1, P["enc.g1"], ln1)
    dz1 = da1 * (z1 > 0)
    G["enc.W1"][...] = x.T @ dz1
    G["enc.b1"][...] = dz1.sum(axis=0)
    return grads


def probabilities(logits):
    """Logistic output kept strictly inside (0, 1)."""
    tiny = np.finfo(np.float64).eps
    return np.clip(_sigmoid(np.asarray(logits, dtype=np.float64)), tiny, 1.0 - tiny)


def predict_proba(model: SeqModel, feats):
    return probabilities(forward(model, feats))


# ------------------------------------------------------------------ loss


def class_weights(label_seqs, mode="balanced"):
    """(w_no_contact, w_contact) with w_c = labelled / (2 * count_c)."""
    if mode in (None, "none"):
        return (1.0, 1.0)
    if mode != "balanced":
        raise ValueError(f"unknown class weighting {mode!r}")
    counts = np.zeros(2)
    for lab in label_seqs:
        lab = np.asarray(lab)
        counts[0] += np.count_nonzero(lab == 0)
        counts[1] += np.count_nonzero(lab == 1)
    total = counts.sum()
    if total == 0:
        return (1.0, 1.0)
    return tuple(float(total / (2 * c)) if c > 0 else 0.0 for c in counts)


def bce_loss(logits, labels, weights=(1.0, 1.0), scale=1.0):
    """Weighted binary cross-entropy over labelled frames and its logit gradient.

    Unlabelled frames (-1) contribute neither loss nor gradient.  The loss is
    the weighted sum divided by the number of labelled frames; an all-unlabelled
    sequence gives (0.0, zeros, False).
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} and labels {y.shape} differ in length")
    mask = (y == 0) | (y == 1)
    n = np.count_nonzero(mask)
    grad = np.zeros_like(z)
    if n == 0:
        return 0.0, grad, False
    yl = y[mask].astype(np.float64)
    zl = z[mask]
    w = np.where(yl == 1, weights[1], weights[0])
    # softplus(z) - y z, stable for large |z|
    per = np.maximum(zl, 0) + np.log1p(np.exp(-np.abs(zl))) - yl * zl
    loss = scale * float((w * per).sum() / n)
    grad[mask] = scale * w * (_sigmoid(zl) - yl) / n
    return loss, grad, True


def bce_value(logits, labels, weights=(1.0, 1.0)) -> float:
    """Loss value of :func:`bce_loss` without the gradient."""
    y = np.asarray(labels)
    mask = y >= 0
    n = np.count_nonzero(mask)
    if n == 0:
        return 0.0
    z = np.asarray(logits, dtype=np.float64)[mask]
    yl = y[mask]
    w = np.where(yl == 1, weights[1], weights[0])
    return float((w * (np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z))) - yl * z)).sum() / n)


def loss_and_grad(model, feats, labels, weights=(1.0, 1.0), scale=1.0):
    logits, cache = forward(model, feats, return_cache=True)
    loss, dlogits, used = bce_loss(logits, labels, weights, scale)
    if not used:
        return loss, model.zeros_like(), False
    return loss, backward(model, cache, dlogits), True


# ----------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model, **kw):
        return cls(np.zeros_like(model.flat), np.zeros_like(model.flat), **kw)


def adam_step(model: SeqModel, grads, state: AdamState):
    """One bias-corrected Adam update, in place on ``model`` and ``state``."""
    g = grads.flat if isinstance(grads, SeqModel) else np.asarray(grads, dtype=np.float64)
    if g.shape != model.flat.shape:
        raise ValueError(f"gradient shape {g.shape} != parameter shape {model.flat.shape}")
    if not np.all(np.isfinite(g)):
        bad = [n for n, _ in model.shapes
               if not np.all(np.isfinite(SeqModel(model.cfg, flat=g).params[n]))]
        raise FloatingPointError(f"non-finite gradient in {bad}")
    state.step += 1
    state.m *= state.beta1
    state.m += (1 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1 - state.beta2) * g * g
    mhat = state.m / (1 - state.beta1 ** state.step)
    vhat = state.v / (1 - state.beta2 ** state.step)
    model.flat -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return model, state


def parameter_report(model) -> str:
    parts = []
    for name, _ in model.shapes:
        p = model.params[name]
        finite = np.isfinite(p)
        top = float(np.abs(p[finite]).max()) if finite.any() else float("nan")
        parts.append(f"{name}: max|p|={top:.3g}" + ("" if finite.all() else " NON-FINITE"))
    return ", ".join(parts)


# ------------------------------------------------------------ checkpoint


def save_checkpoint(model: SeqModel, path, extra=None) -> None:
    """magic | u32 header length | JSON header | float64 parameter vector."""
    import json

    header = {"config": asdict(model.cfg), "n_params": model.n_params, "extra": extra or {}}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(model.flat.astype("<f8").tobytes())


def load_checkpoint(path):
    import json

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    (n,) = struct.unpack_from("<I", buf, 8)
    header = json.loads(buf[12:12 + n])
    flat = np.frombuffer(buf, dtype="<f8", offset=12 + n)
    cfg = ModelConfig(**header["config"])
    if flat.size != header["n_params"]:
        raise ValueError(f"{path}: truncated parameter vector")
    return SeqModel(cfg, flat=flat), header.get("extra", {})
