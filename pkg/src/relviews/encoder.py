"""Graph-attention encoder mapping input view graphs to relevance graphs.

Multi-head attention over the complete graph with an edge channel in the
logits, graph-level normalization between layers, and a learned edge update
so the output graph carries both node and edge embeddings. Forward returns a
tape; backward produces exact reverse-mode gradients for every parameter.

Hidden layers concatenate heads; the final layer averages full-width heads
and is left unnormalized so its output scale is free to contract.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ConfigError, NumericError
from .graphs import ViewGraph, num_pairs, pair_list

_NEG = -1e30


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    heads_per_layer: int = 4
    hidden_dim: int = 32
    leaky_slope: float = 0.2
    edge_update: bool = True
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.heads_per_layer < 1:
            raise ConfigError("heads_per_layer must be >= 1")
        if self.hidden_dim % self.heads_per_layer != 0:
            raise ConfigError("hidden_dim must be divisible by heads_per_layer")
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps must be positive")


@dataclass
class LayerParams:
    W: list[np.ndarray]                  # per head: (in_dim, head_dim)
    a: list[np.ndarray]                  # per head: (3*head_dim,)
    P: list[np.ndarray]                  # per head: (edge_in, head_dim)
    norm_mean_scale: np.ndarray | None = None   # (hidden_dim,)
    norm_scale: np.ndarray | None = None
    norm_shift: np.ndarray | None = None
    edge_U: np.ndarray | None = None     # (2*hidden_dim + edge_in, hidden_dim)


@dataclass
class GatParams:
    config: EncoderConfig
    in_dim: int
    layers: list[LayerParams]
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Fixed, documented order: per layer, per head W/a/P, then norm, then edge map."""
        out = []
        for li, layer in enumerate(self.layers):
            for hi in range(len(layer.W)):
                out.append((f"layer{li}.head{hi}.W", layer.W[hi]))
                out.append((f"layer{li}.head{hi}.a", layer.a[hi]))
                out.append((f"layer{li}.head{hi}.P", layer.P[hi]))
            if layer.norm_scale is not None:
                out.append((f"layer{li}.norm.mean_scale", layer.norm_mean_scale))
                out.append((f"layer{li}.norm.scale", layer.norm_scale))
                out.append((f"layer{li}.norm.shift", layer.norm_shift))
            if layer.edge_U is not None:
                out.append((f"layer{li}.edge_update", layer.edge_U))
        return out

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        for tname, arr in self.named_tensors():
            if tname == name:
                if arr.shape != value.shape:
                    raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {value.shape}")
                arr[...] = value
                return
        raise ConfigError(f"unknown tensor {name}")

    def zero_grads(self) -> None:
        for name, arr in self.named_tensors():
            self.grads[name] = np.zeros_like(arr)

    def check_finite(self) -> None:
        for name, arr in self.named_tensors():
            if not np.isfinite(arr).all():
                raise NumericError(f"non-finite parameter tensor {name}")


def _layer_dims(cfg: EncoderConfig, in_dim: int):
    """Per layer: (node_in, head_dim, edge_in, updates_edges)."""
    dims = []
    node_in, edge_in = in_dim, in_dim
    for li in range(cfg.num_layers):
        final = li == cfg.num_layers - 1
        head_dim = cfg.hidden_dim if final else cfg.hidden_dim // cfg.heads_per_layer
        updates = True if final else cfg.edge_update
        dims.append((node_in, head_dim, edge_in, updates))
        node_in = cfg.hidden_dim
        if updates:
            edge_in = cfg.hidden_dim
    return dims


def init_params(cfg: EncoderConfig, in_dim: int, seed: int = 0) -> GatParams:
    """Uniform init scaled by 1/sqrt(fan_in); norm scales start at identity."""
    rng = np.random.default_rng(seed)

    def u(shape, fan_in):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(fan_in)

    layers = []
    for li, (node_in, head_dim, edge_in, updates) in enumerate(_layer_dims(cfg, in_dim)):
        final = li == cfg.num_layers - 1
        W = [u((node_in, head_dim), node_in) for _ in range(cfg.heads_per_layer)]
        a = [u((3 * head_dim,), 3 * head_dim) for _ in range(cfg.heads_per_layer)]
        P = [u((edge_in, head_dim), edge_in) for _ in range(cfg.heads_per_layer)]
        layer = LayerParams(W=W, a=a, P=P)
        if not final:
            layer.norm_mean_scale = np.ones(cfg.hidden_dim)
            layer.norm_scale = np.ones(cfg.hidden_dim)
            layer.norm_shift = np.zeros(cfg.hidden_dim)
        if updates:
            layer.edge_U = u((2 * cfg.hidden_dim + edge_in, cfg.hidden_dim),
                             2 * cfg.hidden_dim + edge_in)
        layers.append(layer)
    params = GatParams(cfg, in_dim, layers)
    params.zero_grads()
    return params


class _GraphConsts:
    """Constant index/mask arrays for a complete graph of N nodes."""

    _cache: dict[int, "_GraphConsts"] = {}

    def __init__(self, n: int):
        pairs = pair_list(n)
        self.idx_i = np.array([i for i, _ in pairs], dtype=np.intp)
        self.idx_j = np.array([j for _, j in pairs], dtype=np.intp)
        gather = np.zeros((n, n), dtype=np.intp)
        for r, (i, j) in enumerate(pairs):
            gather[i, j] = r
            gather[j, i] = r
        self.pair_gather = gather.ravel()
        self.offdiag = 1.0 - np.eye(n)
        self.diag_neg = np.where(np.eye(n) > 0, _NEG, 0.0)

    @classmethod
    def get(cls, n: int) -> "_GraphConsts":
        if n not in cls._cache:
            cls._cache[n] = cls(n)
        return cls._cache[n]


@dataclass
class EncoderTape:
    """Handles for backward plus recorded attention coefficients."""
    params: GatParams
    param_vars: dict[str, Var]
    node_out: Var
    edge_out: Var
    attention: list[list[np.ndarray]]    # [layer][head] -> (N, N)
    graph: ViewGraph


def _graphnorm(h: Var, mean_scale: Var, scale: Var, shift: Var, eps: float) -> Var:
    mu = ad.vmean(h, axis=0, keepdims=True)
    shifted = h - mu * mean_scale
    var = ad.vmean(ad.square(shifted), axis=0, keepdims=True)
    return shifted / ad.sqrt(var + eps) * scale + shift


def forward(params: GatParams, g: ViewGraph, want_grad: bool = True
            ) -> tuple[ViewGraph, EncoderTape]:
    """Propagate the graph through all attention layers.

    Per layer and head: logits from [W h_i || W h_j || P f_ij] through a
    LeakyReLU, softmax over the other nodes, weighted aggregation; heads are
    concatenated (hidden) or averaged (final). Edge features are refreshed by
    the layer's update map when enabled, and always after the final layer,
    through a softplus so their norms stay non-negative.
    """
    cfg = params.config
    if g.feature_dim != params.in_dim:
        raise ConfigError(f"graph feature dim {g.feature_dim} != params in_dim {params.in_dim}")
    if not (np.isfinite(g.node_features).all() and np.isfinite(g.edge_features).all()):
        raise NumericError("non-finite values in input graph (layer 0)")

    n = g.num_views
    consts = _GraphConsts.get(n)
    pvars = {name: Var(arr, requires_grad=want_grad) for name, arr in params.named_tensors()}

    h: Var = ad.constant(g.node_features)
    e: Var = ad.constant(g.edge_features)
    attention: list[list[np.ndarray]] = []

    for li, (node_in, head_dim, edge_in, updates) in enumerate(_layer_dims(cfg, params.in_dim)):
        final = li == cfg.num_layers - 1
        head_outs = []
        layer_att = []
        for hi in range(cfg.heads_per_layer):
            W = pvars[f"layer{li}.head{hi}.W"]
            a = pvars[f"layer{li}.head{hi}.a"]
            P = pvars[f"layer{li}.head{hi}.P"]
            Wh = ad.matmul(h, W)                                     # (N, hd)
            a_src = ad.reshape(ad.gather_rows(a, np.arange(head_dim)), (head_dim, 1))
            a_dst = ad.reshape(ad.gather_rows(a, np.arange(head_dim, 2 * head_dim)), (head_dim, 1))
            a_edge = ad.reshape(ad.gather_rows(a, np.arange(2 * head_dim, 3 * head_dim)), (head_dim, 1))
            s = ad.matmul(Wh, a_src)                                 # (N, 1)
            t = ad.reshape(ad.matmul(Wh, a_dst), (1, n))             # (1, N)
            u_pair = ad.reshape(ad.matmul(ad.matmul(e, P), a_edge), (num_pairs(n),))
            u_mat = ad.reshape(ad.gather_rows(u_pair, consts.pair_gather), (n, n)) * consts.offdiag
            logits = ad.leaky_relu(s + t + u_mat, cfg.leaky_slope) + consts.diag_neg
            rowmax = logits.value.max(axis=1, keepdims=True)         # detached shift
            ex = ad.exp(logits - rowmax) * consts.offdiag
            alpha = ex / ad.vsum(ex, axis=1, keepdims=True)
            layer_att.append(alpha.value.copy())
            head_outs.append(ad.matmul(alpha, Wh))
        attention.append(layer_att)

        if final:
            mix = head_outs[0]
            for extra in head_outs[1:]:
                mix = mix + extra
            h = mix * (1.0 / cfg.heads_per_layer)
        else:
            h = ad.concat(head_outs, axis=1)
            h = _graphnorm(h, pvars[f"layer{li}.norm.mean_scale"],
                           pvars[f"layer{li}.norm.scale"],
                           pvars[f"layer{li}.norm.shift"], cfg.norm_eps)
        if not np.isfinite(h.value).all():
            raise NumericError(f"non-finite node features after layer {li}")

        if updates:
            U = pvars[f"layer{li}.edge_update"]
            zi = ad.gather_rows(h, consts.idx_i)
            zj = ad.gather_rows(h, consts.idx_j)
            # averaged over both endpoint orders so the update is well defined
            # on unordered pairs (keeps permutation equivariance)
            fwd_ord = ad.matmul(ad.concat([zi, zj, e], axis=1), U)
            rev_ord = ad.matmul(ad.concat([zj, zi, e], axis=1), U)
            e = ad.softplus((fwd_ord + rev_ord) * 0.5)
            if not np.isfinite(e.value).all():
                raise NumericError(f"non-finite edge features after layer {li}")

    out = ViewGraph(h.value.copy(), e.value.copy(), global_index=g.global_index, label=g.label)
    return out, EncoderTape(params, pvars, h, e, attention, g)


def backward(tape: EncoderTape, node_grads: np.ndarray,
             edge_grads: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Accumulate exact gradients into the tape's parameter buffers."""
    node_grads = np.asarray(node_grads, dtype=np.float64)
    if node_grads.shape != tape.node_out.shape:
        raise ValueError(f"node gradient shape {node_grads.shape} != {tape.node_out.shape}")
    seeds = [(tape.node_out, node_grads)]
    if edge_grads is not None:
        edge_grads = np.asarray(edge_grads, dtype=np.float64)
        if edge_grads.shape != tape.edge_out.shape:
            raise ValueError(f"edge gradient shape {edge_grads.shape} != {tape.edge_out.shape}")
        seeds.append((tape.edge_out, edge_grads))
    ad.backward_from(seeds)
    out = {}
    for name, _ in tape.params.named_tensors():
        v = tape.param_vars[name]
        if v.grad is not None:
            tape.params.grads[name] += v.grad
            out[name] = v.grad
        else:
            out[name] = np.zeros_like(v.value)
    return out


def distinguishability(embeddings) -> float:
    """Mean L2 distance over all unordered pairs of node embeddings."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two embeddings")
    diff = x[:, None, :] - x[None, :, :]
    d = np.sqrt(np.square(diff).sum(axis=-1))
    iu = np.triu_indices(x.shape[0], k=1)
    return float(d[iu].mean())
