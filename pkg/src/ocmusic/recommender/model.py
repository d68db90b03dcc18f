"""Feature-fused bidirectional transformer for masked item prediction.

Everything is plain numpy with hand-written backpropagation. Shapes use
B (batch), L (sequence), d (model width), h (heads), V (vocabulary).

Layer stacking is pre-norm::

    x = x + MHA(LN1(x))
    x = x + FFN(LN2(x))

with no final normalization, so zero sublayers pass the input through.
The output head is ``softmax(W_P GELU(h E^T) + b_P)`` over the whole
vocabulary.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ConfigurationError, NumericFailureError
from .vocab import PAD_ID

LN_EPS = 1e-5
INIT_BOUND = 0.01
SQRT2 = np.sqrt(2.0)


@dataclass
class ModelConfig:
    vocab_size: int
    d: int = 32
    layers: int = 2
    heads: int = 4
    d_ff: int | None = None
    max_len: int = 50
    music_dim: int = 0
    use_aes: bool = True
    music_encoder: str = "linear"  # or "conv"
    conv_filters: int = 4
    conv_width: int = 3

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigurationError("d must be divisible by the head count")
        if self.d_ff is None:
            self.d_ff = 4 * self.d
        if self.music_encoder not in ("linear", "conv"):
            raise ConfigurationError(f"unknown music encoder {self.music_encoder!r}")
        if self.music_encoder == "conv" and self.music_dim and self.music_dim < self.conv_width:
            raise ConfigurationError("music_dim shorter than the conv width")

    @property
    def d_k(self) -> int:
        return self.d // self.heads

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / SQRT2)) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def layer_norm_backward(dy, g, cache):
    xhat, inv = cache
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    red = tuple(range(dy.ndim - 1))
    return dx, (dy * xhat).sum(axis=red), dy.sum(axis=red)


def truncated_normal(rng, shape, bound=INIT_BOUND):
    """Normal draws with std bound/2, redrawn until inside [-bound, bound]."""
    x = rng.normal(0.0, bound / 2.0, size=shape)
    bad = np.abs(x) > bound
    while bad.any():
        x[bad] = rng.normal(0.0, bound / 2.0, size=int(bad.sum()))
        bad = np.abs(x) > bound
    return x


def init_params(cfg: ModelConfig, seed: int = 0) -> dict:
    """Truncated-normal weights in [-0.01, 0.01]; layer-norm gains 1, biases 0.

    Each tensor draws from its own child stream keyed by name, so enabling
    or disabling an optional input leaves every other tensor unchanged.
    """
    names = []

    def new(name, shape):
        names.append(name)
        key = [seed] + [ord(c) for c in name]
        return truncated_normal(np.random.default_rng(key), shape)

    V, d = cfg.vocab_size, cfg.d
    p = {"E": new("E", (V, d)), "P": new("P", (cfg.max_len, d))}
    if cfg.music_dim:
        if cfg.music_encoder == "conv":
            p["W_conv"] = new("W_conv", (cfg.conv_filters, cfg.conv_width))
            p["W_mus"] = new("W_mus", (cfg.conv_filters * (cfg.music_dim - cfg.conv_width + 1), d))
        else:
            p["W_mus"] = new("W_mus", (cfg.music_dim, d))
    if cfg.use_aes:
        p["W_aes"] = new("W_aes", (4, d))
    for l in range(cfg.layers):
        p[f"l{l}.ln1_g"] = np.ones(d)
        p[f"l{l}.ln1_b"] = np.zeros(d)
        for w in ("Wq", "Wk", "Wv", "Wo"):
            p[f"l{l}.{w}"] = new(f"l{l}.{w}", (d, d))
        p[f"l{l}.ln2_g"] = np.ones(d)
        p[f"l{l}.ln2_b"] = np.zeros(d)
        p[f"l{l}.W1"] = new(f"l{l}.W1", (d, cfg.d_ff))
        p[f"l{l}.b1"] = new(f"l{l}.b1", (cfg.d_ff,))
        p[f"l{l}.W2"] = new(f"l{l}.W2", (cfg.d_ff, d))
        p[f"l{l}.b2"] = new(f"l{l}.b2", (d,))
    p["W_P"] = new("W_P", (V, V))
    p["b_P"] = new("b_P", (V,))
    return p


def no_decay(name: str) -> bool:
    """Layer-norm parameters are exempt from weight decay."""
    return ".ln" in name


# --------------------------------------------------------------------------
# batch container
# --------------------------------------------------------------------------


@dataclass
class Batch:
    """Right-padded inputs. ``music``/``aes`` are zero at padded and masked
    positions (set by the caller)."""

    ids: np.ndarray  # (B, L) int
    music: np.ndarray | None = None  # (B, L, m)
    aes: np.ndarray | None = None  # (B, L, 4)

    @property
    def valid(self) -> np.ndarray:
        return self.ids != PAD_ID


# --------------------------------------------------------------------------
# forward
# --------------------------------------------------------------------------


def _music_forward(params, cfg, music):
    if cfg.music_encoder == "conv":
        win = sliding_window_view(music, cfg.conv_width, axis=-1)  # (B, L, n_pos, w)
        pre = win @ params["W_conv"].T  # (B, L, n_pos, K)
        act = np.maximum(pre, 0.0)
        flat = act.reshape(*act.shape[:2], -1)
        return flat @ params["W_mus"], (win, pre, flat)
    return music @ params["W_mus"], None


def embed(params: dict, cfg: ModelConfig, batch: Batch, return_cache: bool = False):
    """X = E[ids] + P[positions] + music projection + aesthetic projection,
    with padded rows zeroed."""
    B, L = batch.ids.shape
    if L > cfg.max_len:
        raise ConfigurationError(f"sequence length {L} exceeds max_len {cfg.max_len}")
    X = params["E"][batch.ids] + params["P"][None, :L]
    mus_cache = None
    if cfg.music_dim:
        if batch.music is None:
            raise ConfigurationError("model expects music features")
        Xm, mus_cache = _music_forward(params, cfg, batch.music)
        X = X + Xm
    if cfg.use_aes:
        if batch.aes is None:
            raise ConfigurationError("model expects aesthetic features")
        X = X + batch.aes @ params["W_aes"]
    X = X * batch.valid[..., None]
    return (X, mus_cache) if return_cache else X


def attention_head(X, W_q, W_k, W_v, key_mask=None):
    """Single head: ``softmax(X W_q (X W_k)^T / sqrt(d_k)) X W_v``.

    ``key_mask`` (L,) or (B, L) marks valid keys; invalid ones get zero
    weight. Returns ``(output, weights)``.
    """
    Q, K, Vv = X @ W_q, X @ W_k, X @ W_v
    scores = Q @ np.swapaxes(K, -1, -2) / np.sqrt(W_k.shape[-1])
    if key_mask is not None:
        km = np.asarray(key_mask, bool)
        scores = np.where(km[..., None, :], scores, -np.inf)
    A = softmax(scores)
    return A @ Vv, A


def _split(x, h):
    B, L, d = x.shape
    return x.reshape(B, L, h, d // h).transpose(0, 2, 1, 3)


def _merge(x):
    B, h, L, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, h * dk)


def _mha_forward(a, params, pre, cfg, valid):
    Q = _split(a @ params[pre + "Wq"], cfg.heads)
    K = _split(a @ params[pre + "Wk"], cfg.heads)
    Vv = _split(a @ params[pre + "Wv"], cfg.heads)
    scores = Q @ K.transpose(0, 1, 3, 2) / np.sqrt(cfg.d_k)
    scores = np.where(valid[:, None, None, :], scores, -np.inf)
    A = softmax(scores)
    O = _merge(A @ Vv)
    return O @ params[pre + "Wo"], (Q, K, Vv, A, O)


def transformer_forward(params: dict, cfg: ModelConfig, X: np.ndarray, valid: np.ndarray, return_cache: bool = False):
    """Run the stacked layers; non-finite activations raise with the layer index."""
    caches = []
    x = X
    for l in range(cfg.layers):
        pre = f"l{l}."
        a, ln1 = layer_norm(x, params[pre + "ln1_g"], params[pre + "ln1_b"])
        att, mha = _mha_forward(a, params, pre, cfg, valid)
        x1 = x + att
        b, ln2 = layer_norm(x1, params[pre + "ln2_g"], params[pre + "ln2_b"])
        h1 = b @ params[pre + "W1"] + params[pre + "b1"]
        g = gelu(h1)
        x2 = x1 + g @ params[pre + "W2"] + params[pre + "b2"]
        if not np.all(np.isfinite(x2)):
            raise NumericFailureError("non-finite activation", layer=l)
        caches.append((a, ln1, mha, b, ln2, h1, g))
        x = x2
    return (x, caches) if return_cache else x


def output_logits(params: dict, H: np.ndarray):
    """Logits ``W_P GELU(H E^T) + b_P`` for rows of hidden states (N, d)."""
    u = H @ params["E"].T
    gu = gelu(u)
    return gu @ params["W_P"].T + params["b_P"], (u, gu)


def predict_masked(params: dict, H_t: np.ndarray) -> np.ndarray:
    """Distribution over the vocabulary for hidden state(s) ``H_t``."""
    z, _ = output_logits(params, np.atleast_2d(H_t))
    p = softmax(z)
    return p[0] if np.ndim(H_t) == 1 else p


def encode(params: dict, cfg: ModelConfig, batch: Batch) -> np.ndarray:
    X = embed(params, cfg, batch)
    return transformer_forward(params, cfg, X, batch.valid)


# --------------------------------------------------------------------------
# loss and gradients
# --------------------------------------------------------------------------


def loss_and_grads(params: dict, cfg: ModelConfig, batch: Batch, targets: np.ndarray, want_grad: bool = True):
    """Mean cross-entropy over positions with ``targets >= 0`` and its gradients.

    ``targets`` is (B, L) with the original id at masked positions and -1
    elsewhere.
    """
    valid = batch.valid
    X, mus_cache = embed(params, cfg, batch, return_cache=True)
    Hs, caches = transformer_forward(params, cfg, X, valid, return_cache=True)
    sel = np.nonzero(targets >= 0)
    n = len(sel[0])
    if n == 0:
        raise ConfigurationError("no masked positions in batch")
    Ht = Hs[sel]
    z, (u, gu) = output_logits(params, Ht)
    zmax = z.max(axis=1, keepdims=True)
    logZ = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    tgt = targets[sel]
    loss = float(np.mean(logZ - z[np.arange(n), tgt]))
    if not want_grad:
        return loss, None

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dz = softmax(z)
    dz[np.arange(n), tgt] -= 1.0
    dz /= n
    grads["W_P"] = dz.T @ gu
    grads["b_P"] = dz.sum(axis=0)
    du = (dz @ params["W_P"]) * gelu_grad(u)
    grads["E"] += du.T @ Ht
    dH = np.zeros_like(Hs)
    dH[sel] = du @ params["E"]

    dx = dH
    for l in reversed(range(cfg.layers)):
        pre = f"l{l}."
        a, ln1, (Q, K, Vv, A, O), b, ln2, h1, g = caches[l]
        # FFN sublayer
        grads[pre + "b2"] = dx.sum(axis=(0, 1))
        grads[pre + "W2"] = g.reshape(-1, g.shape[-1]).T @ dx.reshape(-1, dx.shape[-1])
        dh1 = (dx @ params[pre + "W2"].T) * gelu_grad(h1)
        grads[pre + "b1"] = dh1.sum(axis=(0, 1))
        grads[pre + "W1"] = b.reshape(-1, b.shape[-1]).T @ dh1.reshape(-1, dh1.shape[-1])
        db = dh1 @ params[pre + "W1"].T
        dx1_ln, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = layer_norm_backward(db, params[pre + "ln2_g"], ln2)
        dx1 = dx + dx1_ln
        # attention sublayer
        grads[pre + "Wo"] = O.reshape(-1, O.shape[-1]).T @ dx1.reshape(-1, dx1.shape[-1])
        dO = _split(dx1 @ params[pre + "Wo"].T, cfg.heads)
        dA = dO @ Vv.transpose(0, 1, 3, 2)
        dV = A.transpose(0, 1, 3, 2) @ dO
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / np.sqrt(cfg.d_k)
        dQ = _merge(dS @ K)
        dK = _merge(dS.transpose(0, 1, 3, 2) @ Q)
        dV = _merge(dV)
        a2 = a.reshape(-1, a.shape[-1])
        grads[pre + "Wq"] = a2.T @ dQ.reshape(-1, dQ.shape[-1])
        grads[pre + "Wk"] = a2.T @ dK.reshape(-1, dK.shape[-1])
        grads[pre + "Wv"] = a2.T @ dV.reshape(-1, dV.shape[-1])
        da = dQ @ params[pre + "Wq"].T + dK @ params[pre + "Wk"].T + dV @ params[pre + "Wv"].T
        dx0_ln, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = layer_norm_backward(da, params[pre + "ln1_g"], ln1)
        dx = dx1 + dx0_ln

    dX = dx * valid[..., None]
    d = cfg.d
    np.add.at(grads["E"], batch.ids.ravel(), dX.reshape(-1, d))
    L = batch.ids.shape[1]
    grads["P"][:L] += dX.sum(axis=0)
    if cfg.use_aes:
        grads["W_aes"] = batch.aes.reshape(-1, 4).T @ dX.reshape(-1, d)
    if cfg.music_dim:
        if cfg.music_encoder == "conv":
            win, pre_act, flat = mus_cache
            grads["W_mus"] = flat.reshape(-1, flat.shape[-1]).T @ dX.reshape(-1, d)
            dflat = dX @ params["W_mus"].T
            dact = dflat.reshape(pre_act.shape) * (pre_act > 0)
            grads["W_conv"] = np.einsum("blpk,blpw->kw", dact, win)
        else:
            grads["W_mus"] = batch.music.reshape(-1, cfg.music_dim).T @ dX.reshape(-1, d)
    return loss, grads
