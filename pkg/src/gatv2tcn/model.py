"""GATv2 player attention, temporal convolution head, and the composed forecaster.

Node features for one day are concatenated with learned team and position
embeddings, passed through a single multi-head GATv2 layer whose weights are
shared across the days of the input window, stacked along time, convolved by
a valid 1-D temporal kernel and mapped to the target statistics by a fully
connected layer.

Attention convention: ``alpha[i, j]`` is the weight node ``i`` places on
neighbour ``j`` when updating its own representation. Edge arrays are given
as ``(dst, src)`` with ``dst`` the attending node.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import tensorcore as tc
from .graphkit import GraphSnapshot, directed_edges
from .tensorcore import Parameter, Tensor

POSITIONS = ("C", "G", "F", "F/C", "F/G")

GATV2_TCN = "gatv2tcn"
TCN_BASELINE = "tcn"
MODEL_KINDS = (GATV2_TCN, TCN_BASELINE)


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    in_features: int = 13
    n_teams: int = 30
    n_positions: int = len(POSITIONS)
    team_emb_dim: int = 2
    pos_emb_dim: int = 2
    gat_dim: int = 32
    heads: int = 4
    leaky_slope: float = 0.2
    t0: int = 10
    tcn_dim: int = 64
    kernel: int = 3
    out_features: int = 6
    dropout: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("leaky_slope", "dropout"):
                continue
            if getattr(self, f.name) < 1:
                raise ModelError(f"{f.name} must be >= 1, got {getattr(self, f.name)}")
        if self.gat_dim % self.heads:
            raise ModelError(f"gat_dim {self.gat_dim} is not divisible by heads {self.heads}")
        if self.kernel > self.t0:
            raise ModelError(f"kernel width {self.kernel} exceeds window t0={self.t0}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ModelError("leaky_slope must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")

    @property
    def context_dim(self) -> int:
        return self.in_features + self.team_emb_dim + self.pos_emb_dim

    @property
    def head_dim(self) -> int:
        return self.gat_dim // self.heads

    @property
    def tcn_length(self) -> int:
        return self.t0 - self.kernel + 1

    def to_dict(self) -> dict:
        return asdict(self)


class ModelParams:
    """Named learnable arrays plus the fixed target de-normalisation buffers."""

    def __init__(self, kind: str, params: dict[str, Parameter], target_mean: np.ndarray, target_std: np.ndarray):
        if kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.params = params
        self.target_mean = np.asarray(target_mean, dtype=np.float64)
        self.target_std = np.asarray(target_std, dtype=np.float64)

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.params.items()}
        out["target_mean"] = self.target_mean
        out["target_std"] = self.target_std
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.arrays().items()}

    @classmethod
    def from_arrays(cls, kind: str, arrays: dict[str, np.ndarray]) -> "ModelParams":
        arrays = dict(arrays)
        mean = arrays.pop("target_mean")
        std = arrays.pop("target_std")
        return cls(kind, {k: Parameter(v, name=k) for k, v in arrays.items()}, mean, std)


def init_params(
    config: ModelConfig,
    rng: np.random.Generator,
    kind: str = GATV2_TCN,
    target_mean: np.ndarray | None = None,
    target_std: np.ndarray | None = None,
) -> ModelParams:
    """Xavier-uniform weights, zero biases, Xavier-uniform (gain 1) embeddings."""
    d, dd = config.context_dim, config.gat_dim
    c, k, L = config.tcn_dim, config.kernel, config.tcn_length
    xav = tc.xavier_uniform
    arrays: dict[str, np.ndarray] = {
        "team_emb": xav(rng, (config.n_teams, config.team_emb_dim), config.n_teams, config.team_emb_dim),
        "pos_emb": xav(rng, (config.n_positions, config.pos_emb_dim), config.n_positions, config.pos_emb_dim),
    }
    if kind == GATV2_TCN:
        arrays["gat_w_left"] = xav(rng, (d, dd), d, dd)
        arrays["gat_w_right"] = xav(rng, (d, dd), d, dd)
        arrays["gat_att"] = xav(rng, (config.heads, config.head_dim), config.head_dim, 1)
    elif kind == TCN_BASELINE:
        arrays["node_w"] = xav(rng, (d, dd), d, dd)
    else:
        raise ModelError(f"unknown model kind {kind!r}")
    arrays["tcn_kernel"] = xav(rng, (c, dd, k), dd * k, c * k)
    arrays["out_w"] = xav(rng, (c * L, config.out_features), c * L, config.out_features)
    arrays["out_b"] = np.zeros(config.out_features)
    if target_mean is None:
        target_mean = np.zeros(config.out_features)
    if target_std is None:
        target_std = np.ones(config.out_features)
    return ModelParams(kind, {n: Parameter(a, name=n) for n, a in arrays.items()}, target_mean, target_std)


def concat_context(features, team_ids, pos_ids, params: ModelParams) -> Tensor:
    """Rows ``[f_i | team_i | pos_i]``."""
    features = tc.ops.as_tensor(features)
    team = tc.embedding_lookup(params["team_emb"], team_ids)
    pos = tc.embedding_lookup(params["pos_emb"], pos_ids)
    return tc.concat([features, team, pos], axis=1)


def gatv2_scores(g: Tensor, dst, src, params: ModelParams, heads: int, slope: float = 0.2) -> Tensor:
    """``e(i, j) = a^T LeakyReLU(W_l g_i + W_r g_j)`` per directed edge and head.

    Returns an ``E x heads`` tensor.
    """
    left = tc.matmul(g, params["gat_w_left"])
    right = tc.matmul(g, params["gat_w_right"])
    return _scores_from_projections(left, right, dst, src, params["gat_att"], heads, slope)


def _scores_from_projections(left, right, dst, src, att, heads, slope):
    z = tc.leaky_relu(tc.gather_rows(left, dst) + tc.gather_rows(right, src), slope)
    z = tc.ops.reshape(z, (len(dst), heads, -1))
    return tc.ops.sum(z * att, axis=2)


def gatv2_layer(
    g: Tensor,
    dst,
    src,
    params: ModelParams,
    config: ModelConfig,
    return_attention: bool = False,
):
    """One multi-head GATv2 update ``h_i = ELU(sum_j alpha_ij W_r g_j)``, heads concatenated.

    Every node must own at least one incoming edge (its self-loop) or its
    output row is ``ELU(0) = 0``.
    """
    n_nodes = g.shape[0]
    heads = config.heads
    left = tc.matmul(g, params["gat_w_left"])
    right = tc.matmul(g, params["gat_w_right"])
    scores = _scores_from_projections(left, right, dst, src, params["gat_att"], heads, config.leaky_slope)
    alpha = tc.segment_softmax(scores, dst, n_nodes)
    messages = tc.ops.reshape(tc.gather_rows(right, src), (len(src), heads, config.head_dim))
    weighted = messages * tc.ops.reshape(alpha, (len(src), heads, 1))
    agg = tc.segment_sum(weighted, dst, n_nodes)
    h = tc.elu(tc.ops.reshape(agg, (n_nodes, config.gat_dim)))
    return (h, alpha) if return_attention else h


def node_linear_layer(g: Tensor, params: ModelParams) -> Tensor:
    """Graph-free stand-in for the attention layer: ``ELU(W g_i)`` per node."""
    return tc.elu(tc.matmul(g, params["node_w"]))


def attention_matrix(
    g: Tensor | np.ndarray,
    snapshot: GraphSnapshot,
    params: ModelParams,
    config: ModelConfig,
    include_self: bool = False,
) -> np.ndarray:
    """``n x n`` matrix with ``M[i, j]`` the max over heads of ``alpha_ij``.

    The self-loop weights are computed (they take part in the softmax) but
    the diagonal is zeroed unless ``include_self``.
    """
    g = tc.ops.as_tensor(g)
    n = g.shape[0]
    dst, src = directed_edges(snapshot, n)
    with tc.no_record():
        _, alpha = gatv2_layer(g, dst, src, params, config, return_attention=True)
    out = np.zeros((n, n))
    out[dst, src] = alpha.data.max(axis=1)
    if not include_self:
        np.fill_diagonal(out, 0.0)
    return out


def tcn_head(h_seq: Tensor, params: ModelParams) -> Tensor:
    """``Y = Phi * ReLU(H)``, flattened per node, then the output layer.

    ``h_seq`` is ``n x gat_dim x t0``; output is ``n x out_features`` in
    normalised target units.
    """
    y = tc.conv1d_time(tc.relu(h_seq), params["tcn_kernel"])
    n = y.shape[0]
    flat = tc.ops.reshape(y, (n, -1))
    return tc.linear(flat, params["out_w"], params["out_b"])


def batch_edges(day_edges: Sequence[tuple[np.ndarray, np.ndarray]], n: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-day ``(dst, src)`` arrays into one block-diagonal edge list."""
    dst = np.concatenate([d + t * n for t, (d, _) in enumerate(day_edges)])
    src = np.concatenate([s + t * n for t, (_, s) in enumerate(day_edges)])
    return dst, src


def forward(
    window_features: np.ndarray,
    day_edges: Sequence[tuple[np.ndarray, np.ndarray]],
    team_ids,
    pos_ids,
    params: ModelParams,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Forecast the next day's targets for every player, in original units.

    ``window_features`` is ``t0 x n x in_features``; ``day_edges`` holds the
    matching per-day directed edge arrays (with self-loops). The per-day
    layer is applied with shared weights by batching the t0 days as one
    block-diagonal graph.
    """
    window_features = np.asarray(window_features, dtype=np.float64)
    t0, n, _ = window_features.shape
    if t0 != config.t0 or len(day_edges) != config.t0:
        raise ModelError(f"window has {t0} days of features and {len(day_edges)} graphs, expected {config.t0}")
    team_ids = np.tile(np.asarray(team_ids, dtype=np.int64), t0)
    pos_ids = np.tile(np.asarray(pos_ids, dtype=np.int64), t0)
    g = concat_context(window_features.reshape(t0 * n, -1), team_ids, pos_ids, params)
    h = spatial_layer(g, batch_edges(day_edges, n), params, config)
    h = tc.dropout(h, config.dropout, training, rng)
    return temporal_output(h, t0, n, params)


def spatial_layer(g: Tensor, edges: tuple[np.ndarray, np.ndarray], params: ModelParams, config: ModelConfig) -> Tensor:
    if params.kind == GATV2_TCN:
        return gatv2_layer(g, edges[0], edges[1], params, config)
    return node_linear_layer(g, params)


def temporal_output(h: Tensor, t0: int, n: int, params: ModelParams) -> Tensor:
    """Reshape stacked per-day rows to ``n x dim x t0`` and apply the head + de-normalisation."""
    h_seq = tc.ops.transpose(tc.ops.reshape(h, (t0, n, -1)), (1, 2, 0))
    out = tcn_head(h_seq, params)
    return out * params.target_std + params.target_mean


def gat_v1_scores(g: Tensor, dst, src, w_left: Tensor, w_right: Tensor, att: Tensor, slope: float = 0.2) -> Tensor:
    """Original GAT scoring ``LeakyReLU(a^T W [g_i | g_j])`` for a single head.

    ``w_left``/``w_right`` split ``W`` across the two halves of the
    concatenation; ``att`` is a length-``d'`` vector.
    """
    left = tc.matmul(tc.matmul(g, w_left), tc.ops.reshape(att, (-1, 1)))
    right = tc.matmul(tc.matmul(g, w_right), tc.ops.reshape(att, (-1, 1)))
    raw = tc.gather_rows(left, dst) + tc.gather_rows(right, src)
    return tc.leaky_relu(tc.ops.reshape(raw, (len(dst),)), slope)
