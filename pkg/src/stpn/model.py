"""Space-time separable multi-graph convolution network for delay prediction.

Layer recipe: learned positional encodings feed multi-head scaled
dot-product attention whose (transposed) softmax rows become column-
stochastic temporal adjacency matrices; each layer sums, over every
(relation, diffusion order, head) triple, the input contracted along the
node axis by a transition-matrix power, along the time axis by that head's
temporal adjacency, and along the channel axis by a per-triple weight
matrix. Hidden layers add a (projected) residual, a shared PReLU, and a
squeeze-and-excitation channel gate; the output layer queries attention
with the future time positions and stays linear.

Parameters never depend on the airport count, so a trained model runs on a
graph with a different node set.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Var
from .config import ModelConfig
from .graphs import MultiGraph, power_series, row_normalize


def positional_encoding(pos, pos_dim: int, l_pos) -> Var:
    """Sin/cos encoding of time-of-day indices, differentiable in ``l_pos``.

    Even entries are ``sin(pos / l_pos**(2i/J))``, odd entries the matching
    cosine. ``pos`` may have any shape; the encoding axis is appended.
    """
    if pos_dim % 2 != 0:
        raise ValueError("pos_dim must be even")
    if not isinstance(l_pos, Var):
        # plain-number misuse is rejected; a live parameter that diverges
        # negative instead yields NaN, which the trainer's abort path catches
        if float(l_pos) <= 0:
            raise ValueError("positional scale must be positive")
        l_pos = Var(float(l_pos))
    pos = np.asarray(pos, dtype=np.float64)[..., None]
    exponents = -2.0 * np.arange(pos_dim // 2, dtype=np.float64) / pos_dim
    inv_scales = ad.pow_const(l_pos, exponents)  # (J/2,)
    args = ad.mul(pos, inv_scales)  # (..., T, J/2)
    return ad.interleave_last(ad.sin(args), ad.cos(args))


def temporal_attention(pe_in, pe_out, w_q, w_k) -> Var:
    """Column-stochastic temporal adjacency from positional embeddings.

    Queries come from the output positions, keys from the input positions;
    softmax rows (one per output step) are transposed so the result is
    (T_in, T_out) with each output step's incoming weights summing to 1.
    Scaling uses the width of the projection actually supplied.
    """
    d = (w_q.value if isinstance(w_q, Var) else np.asarray(w_q)).shape[-1]
    if d <= 0:
        raise ValueError("query/key dimension must be positive")
    q = ad.linear_last(pe_out, w_q)
    k = ad.linear_last(pe_in, w_k)
    logits = ad.mul(ad.scores(q, k), 1.0 / np.sqrt(d))
    return ad.transpose_last2(ad.softmax_last(logits))


def attention_heads(pe_in, pe_out, w_q, w_k, heads: int) -> list[Var]:
    """Independent temporal adjacencies from per-head slices of W_Q/W_K."""
    width = w_q.value.shape[-1]
    if width % heads != 0:
        raise ValueError(f"qk width {width} not divisible by {heads} heads")
    d = width // heads
    out = []
    for i in range(heads):
        out.append(
            temporal_attention(
                pe_in,
                pe_out,
                ad.slice_last(w_q, i * d, (i + 1) * d),
                ad.slice_last(w_k, i * d, (i + 1) * d),
            )
        )
    return out


def st_multi_conv(h, spatial_powers, temporal_mats, weights) -> Var:
    """Triple sum of space x time x feature contractions.

    ``spatial_powers``: per relation, the list of transition-matrix powers.
    ``temporal_mats``: one (possibly per-sample) adjacency per head.
    ``weights[q][k][i]``: channel map for each (relation, order, head).
    """
    time_mixed = [ad.mode_time(h, a_t) for a_t in temporal_mats]
    terms = []
    for q, powers in enumerate(spatial_powers):
        for k, a_s in enumerate(powers):
            for i, ht in enumerate(time_mixed):
                terms.append(ad.mode_feature(ad.mode_space(ht, a_s), weights[q][k][i]))
    return ad.add_n(terms)


def se_block(h, w_reduce, b_reduce, w_expand, b_expand) -> tuple[Var, Var]:
    """Channel gating from global average statistics; returns (gated, gates)."""
    z = ad.mean_axes(h, (-3, -2))  # (..., C)
    hidden = ad.relu(ad.add(ad.linear_last(z, w_reduce), b_reduce))
    gates = ad.sigmoid(ad.add(ad.linear_last(hidden, w_expand), b_expand))
    expanded = ad.reshape(gates, gates.value.shape[:-1] + (1, 1, gates.value.shape[-1]))
    return ad.mul(h, expanded), gates


def transition_powers(graph: MultiGraph, config: ModelConfig) -> list[list[np.ndarray]]:
    """Row-normalize each relation and take the configured diffusion orders."""
    if len(graph.relations) != config.relations:
        raise ValueError(
            f"graph has {len(graph.relations)} relations but config expects {config.relations}"
        )
    out = []
    for _, a in graph.relations:
        powers = power_series(row_normalize(a), config.diffusion_order)
        out.append([powers[k] for k in config.diffusion_orders])
    return out


def _layer_widths(config: ModelConfig) -> list[tuple[int, int]]:
    widths = [config.input_channels] + list(config.hidden_widths)
    return [(widths[i], widths[i + 1]) for i in range(len(config.hidden_widths))]


def init_params(config: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Deterministic initialization; weight std is 1/sqrt(total fan-in).

    For the conv weights the fan-in counts every summed (relation, order,
    head) term, which keeps the layer output variance near its input
    variance regardless of how many Kronecker terms the config uses.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n_orders = len(config.diffusion_orders)
    n_terms = config.relations * n_orders * config.heads
    params: dict[str, np.ndarray] = {}
    params["weather_embedding"] = rng.uniform(
        -0.1, 0.1, size=(config.weather_categories, config.weather_embed_dim)
    )
    params["l_pos"] = np.asarray(config.l_pos_init)

    def conv_block(prefix: str, c_in: int, c_out: int):
        # gain 3 offsets the variance lost to stochastic space/time mixing
        # and the ~0.5 SE gates at init; still 1/sqrt(total fan-in) scaling
        scale = 3.0 / np.sqrt(c_in * n_terms)
        for q in range(config.relations):
            for k in range(n_orders):
                for i in range(config.heads):
                    params[f"{prefix}.conv.rel{q}.ord{k}.head{i}"] = rng.normal(
                        0.0, scale, size=(c_in, c_out)
                    )

    attn_scale = 1.0 / np.sqrt(config.pos_dim)
    for layer, (c_in, c_out) in enumerate(_layer_widths(config)):
        prefix = f"layer{layer}"
        params[f"{prefix}.attn.wq"] = rng.normal(0.0, attn_scale, size=(config.pos_dim, config.qk_dim))
        params[f"{prefix}.attn.wk"] = rng.normal(0.0, attn_scale, size=(config.pos_dim, config.qk_dim))
        conv_block(prefix, c_in, c_out)
        if c_in != c_out:
            params[f"{prefix}.residual"] = rng.normal(0.0, 1.0 / np.sqrt(c_in), size=(c_in, c_out))
        params[f"{prefix}.prelu"] = np.asarray(0.25)
        bottleneck = max(1, c_out // config.se_reduction)
        params[f"{prefix}.se.reduce.w"] = rng.normal(0.0, 1.0 / np.sqrt(c_out), size=(c_out, bottleneck))
        params[f"{prefix}.se.reduce.b"] = np.zeros(bottleneck)
        params[f"{prefix}.se.expand.w"] = rng.normal(0.0, 1.0 / np.sqrt(bottleneck), size=(bottleneck, c_out))
        params[f"{prefix}.se.expand.b"] = np.zeros(c_out)

    params["out.attn.wq"] = rng.normal(0.0, attn_scale, size=(config.pos_dim, config.qk_dim))
    params["out.attn.wk"] = rng.normal(0.0, attn_scale, size=(config.pos_dim, config.qk_dim))
    c_last = config.hidden_widths[-1]
    scale = 3.0 / np.sqrt(c_last * n_terms)
    for q in range(config.relations):
        for k in range(n_orders):
            for i in range(config.heads):
                params[f"out.conv.rel{q}.ord{k}.head{i}"] = rng.normal(0.0, scale, size=(c_last, 2))
    return params


def _conv_weights(params: ParamStore, prefix: str, config: ModelConfig) -> list[list[list[Var]]]:
    n_orders = len(config.diffusion_orders)
    return [
        [
            [params[f"{prefix}.conv.rel{q}.ord{k}.head{i}"] for i in range(config.heads)]
            for k in range(n_orders)
        ]
        for q in range(config.relations)
    ]


def forward_batch(
    config: ModelConfig,
    params: ParamStore,
    spatial_powers: list[list[np.ndarray]],
    x_norm: np.ndarray,
    z: np.ndarray,
    pos_in: np.ndarray,
    pos_out: np.ndarray,
) -> tuple[Var, list[np.ndarray]]:
    """Batched forward pass.

    x_norm (B, N, h, 2) normalized delays with masked cells pre-filled,
    z (B, N, h) weather codes, pos_in (B, h) / pos_out (B, p) time-of-day
    slots. Returns normalized predictions (B, N, p, 2) and per-layer
    attention maps of shape (B, heads, T_in, T_out).
    """
    x_norm = np.asarray(x_norm, dtype=np.float64)
    z = np.asarray(z)
    b, n, h, c = x_norm.shape
    if c != 2 or h != config.history_steps:
        raise ValueError(
            f"input shape {x_norm.shape} does not match config "
            f"(N, h={config.history_steps}, 2) with any N"
        )
    if z.shape != (b, n, h):
        raise ValueError(f"weather codes shape {z.shape} != {(b, n, h)}")
    if z.min() < 0 or z.max() >= config.weather_categories:
        raise ValueError(
            f"weather codes out of range [0, {config.weather_categories}): "
            f"[{z.min()}, {z.max()}]"
        )

    emb = ad.gather_rows(params["weather_embedding"], z)
    state = ad.concat_last([Var(x_norm), emb])

    pe_in = positional_encoding(pos_in, config.pos_dim, params["l_pos"])
    pe_out = positional_encoding(pos_out, config.pos_dim, params["l_pos"])

    attention_maps: list[np.ndarray] = []
    for layer, (c_in, c_out) in enumerate(_layer_widths(config)):
        prefix = f"layer{layer}"
        heads = attention_heads(
            pe_in, pe_in, params[f"{prefix}.attn.wq"], params[f"{prefix}.attn.wk"], config.heads
        )
        attention_maps.append(np.stack([a.value for a in heads], axis=-3))
        conv = st_multi_conv(state, spatial_powers, heads, _conv_weights(params, prefix, config))
        residual = (
            ad.linear_last(state, params[f"{prefix}.residual"]) if c_in != c_out else state
        )
        activated = ad.prelu(ad.add(conv, residual), params[f"{prefix}.prelu"])
        state, _ = se_block(
            activated,
            params[f"{prefix}.se.reduce.w"],
            params[f"{prefix}.se.reduce.b"],
            params[f"{prefix}.se.expand.w"],
            params[f"{prefix}.se.expand.b"],
        )

    heads = attention_heads(pe_in, pe_out, params["out.attn.wq"], params["out.attn.wk"], config.heads)
    attention_maps.append(np.stack([a.value for a in heads], axis=-3))
    pred = st_multi_conv(state, spatial_powers, heads, _conv_weights(params, "out", config))
    return pred, attention_maps


def forward(
    config: ModelConfig,
    params: ParamStore,
    spatial_powers: list[list[np.ndarray]],
    x_norm: np.ndarray,
    z: np.ndarray,
    pos_in: np.ndarray,
    pos_out: np.ndarray,
) -> tuple[Var, list[np.ndarray]]:
    """Single-sample forward: (N, h, 2) in, (N, p, 2) out."""
    pred, maps = forward_batch(
        config,
        params,
        spatial_powers,
        x_norm[None],
        np.asarray(z)[None],
        np.asarray(pos_in)[None],
        np.asarray(pos_out)[None],
    )
    n = x_norm.shape[0]
    squeezed = ad.reshape(pred, (n, config.horizon_steps, 2))
    return squeezed, [m[0] for m in maps]


class STPN:
    """Config + graph powers + parameters, with convenience prediction."""

    def __init__(
        self,
        config: ModelConfig,
        graph: MultiGraph,
        params: ParamStore | None = None,
        seed: int = 0,
    ):
        config.validate()
        self.config = config
        self.graph = graph
        self.spatial_powers = transition_powers(graph, config)
        self.params = params if params is not None else ParamStore(init_params(config, seed))

    def forward_batch(self, x_norm, z, pos_in, pos_out):
        return forward_batch(
            self.config, self.params, self.spatial_powers, x_norm, z, pos_in, pos_out
        )

    def predict_batch(self, x_norm, z, pos_in, pos_out) -> np.ndarray:
        pred, _ = self.forward_batch(x_norm, z, pos_in, pos_out)
        return pred.value

    def attention_for(self, x_norm, z, pos_in, pos_out) -> list[np.ndarray]:
        _, maps = forward(self.config, self.params, self.spatial_powers, x_norm, z, pos_in, pos_out)
        return maps
