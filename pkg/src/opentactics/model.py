"""Language-conditioned variational trajectory generator.

Architecture: an encoder of stacked spatiotemporal attention blocks over the
history window, a cross-time attention bridge projecting the encoded history
onto the target time steps, a variational latent fused into the decoder
input, and a decoder of the same blocks emitting per-entity positions.

Every block consumes a time-and-language embedding (sinusoidal time encoding
concatenated with an attention-pooled sentence embedding), so the predicted
trajectories are steerable by the event description alone.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .pitch import (CANONICAL_LENGTH, CANONICAL_WIDTH, FEATURE_DIM, FEAT_VX,
                    FEAT_VY, FEAT_X, FEAT_Y, N_ENTITIES,
                    SpatiotemporalGraph, EventDescription,
                    render_description_text)

# Input feature scaling: positions to [0,1], velocities to ~[-1,1].
_FEATURE_SCALE = np.ones(FEATURE_DIM)
_FEATURE_SCALE[FEAT_X] = 1.0 / CANONICAL_LENGTH
_FEATURE_SCALE[FEAT_Y] = 1.0 / CANONICAL_WIDTH
_FEATURE_SCALE[FEAT_VX] = 0.1
_FEATURE_SCALE[FEAT_VY] = 0.1
_OUTPUT_SCALE = np.array([CANONICAL_LENGTH, CANONICAL_WIDTH])


class ShapeMismatchError(ValueError):
    pass


class NonFiniteActivationError(FloatingPointError):
    pass


class EmptyTextError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; the desk-scale default trains on one core."""

    latent_dim: int = 32          # D
    layers: int = 2               # L, per stack
    heads: int = 4
    history_steps: int = 5        # p
    future_steps: int = 5         # q
    feature_dim: int = FEATURE_DIM
    beta: float = 0.1             # KL weight
    use_variation: bool = True
    use_attention: bool = True
    token_seed: int = 7
    dtype: str = "float64"   # float32 roughly halves training time

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.latent_dim % self.heads:
            raise ValueError("latent_dim must be divisible by heads")
        if self.latent_dim % 2:
            raise ValueError("latent_dim must be even")
        if self.history_steps != self.future_steps:
            raise ValueError("history and future step counts must match")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---------------------------------------------------------------------------
# Time and language embeddings

def sinusoidal_encoding(t_index: int, dim: int) -> np.ndarray:
    """Interleaved sin/cos encoding: dim 2i = sin(t / 10000^(2i/dim))."""
    out = np.empty(dim)
    i = np.arange(dim // 2)
    angles = t_index / np.power(10000.0, 2.0 * i / dim)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def _sinusoidal_table(n: int, dim: int) -> np.ndarray:
    return np.stack([sinusoidal_encoding(t, dim) for t in range(n)])


_TOKEN_RE = re.compile(r"[A-Za-z0-9_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


class HashedTokenEmbedder:
    """Vocabulary-free deterministic token vectors.

    Each token hashes to a fixed Gaussian vector; a sinusoidal token-position
    term is added so that carrier and recipient mentions are distinguishable
    after pooling.
    """

    def __init__(self, dim: int, seed: int = 7):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}
        self._text_cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            digest = hashlib.blake2b(f"{self.seed}:{token}".encode(),
                                     digest_size=8).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = rng.standard_normal(self.dim)
            self._cache[token] = vec
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        """[n_tokens, dim]; raises EmptyTextError on blank input."""
        cached = self._text_cache.get(text)
        if cached is not None:
            return cached
        tokens = tokenize(text)
        if not tokens:
            raise EmptyTextError(f"cannot embed empty text {text!r}")
        mat = np.stack([self.token_vector(tok) + sinusoidal_encoding(k, self.dim)
                        for k, tok in enumerate(tokens)])
        self._text_cache[text] = mat
        return mat


# ---------------------------------------------------------------------------
# Parameters

@dataclass
class ModelParameters:
    """Flat name -> array parameter store (mutated in place by training)."""

    values: dict[str, np.ndarray]
    config: ModelConfig

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def manifest(self) -> dict[str, list[int]]:
        return {k: list(v.shape) for k, v in sorted(self.values.items())}

    def copy(self) -> "ModelParameters":
        return ModelParameters({k: v.copy() for k, v in self.values.items()},
                               self.config)

    def save(self, path):
        payload = dict(self.values)
        payload["__config__"] = np.frombuffer(
            json.dumps(self.config.to_dict()).encode(), dtype=np.uint8)
        with open(path, "wb") as fh:
            np.savez(fh, **payload)

    @classmethod
    def load(cls, path) -> "ModelParameters":
        with np.load(path) as data:
            config = ModelConfig.from_dict(
                json.loads(bytes(data["__config__"]).decode()))
            values = {k: np.array(data[k]) for k in data.files
                      if k != "__config__"}
        return cls(values=values, config=config)


def init_parameters(config: ModelConfig, seed: int = 0) -> ModelParameters:
    rng = np.random.default_rng(seed)
    D = config.latent_dim
    values: dict[str, np.ndarray] = {}

    def dense_init(name, fan_in, fan_out, std=None):
        std = std if std is not None else np.sqrt(2.0 / fan_in)
        values[f"{name}w"] = rng.normal(0.0, std, size=(fan_in, fan_out))
        values[f"{name}b"] = np.zeros(fan_out)

    values["in.w"] = rng.normal(0.0, np.sqrt(1.0 / config.feature_dim),
                                size=(config.feature_dim, D))
    values["in.b"] = np.zeros(D)

    values["lang.score"] = rng.normal(0.0, 1.0 / np.sqrt(D), size=D)
    dense_init("lang.", D, D, std=np.sqrt(1.0 / D))

    for blk in [f"enc{i}" for i in range(config.layers)] + \
               [f"dec{i}" for i in range(config.layers)]:
        for which in ("spatial", "temporal"):
            if config.use_attention:
                for r in ("q", "k", "v"):
                    values[f"{blk}.{which}.{r}h"] = rng.normal(
                        0.0, np.sqrt(2.0 / (3 * D)), size=(D, D))
                    values[f"{blk}.{which}.{r}e"] = rng.normal(
                        0.0, np.sqrt(2.0 / (3 * D)), size=(2 * D, D))
                    values[f"{blk}.{which}.{r}b"] = np.zeros(D)
            else:
                values[f"{blk}.{which}.m1h"] = rng.normal(
                    0.0, np.sqrt(2.0 / (3 * D)), size=(D, D))
                values[f"{blk}.{which}.m1e"] = rng.normal(
                    0.0, np.sqrt(2.0 / (3 * D)), size=(2 * D, D))
                values[f"{blk}.{which}.m1b"] = np.zeros(D)
                dense_init(f"{blk}.{which}.m2", D, D)
        values[f"{blk}.gate.w1"] = rng.normal(0.0, 1.0 / np.sqrt(D), size=(D, D))
        values[f"{blk}.gate.w2"] = rng.normal(0.0, 1.0 / np.sqrt(D), size=(D, D))
        values[f"{blk}.gate.b"] = np.zeros(D)

    dense_init("cross.q", 2 * D, D)
    dense_init("cross.k", 2 * D, D)
    dense_init("cross.v", D, D)

    dense_init("var.m", D, D, std=np.sqrt(1.0 / D))
    dense_init("var.l", D, D, std=np.sqrt(1.0 / D))
    values["var.lb"] = np.full(D, -3.0)  # start with a quiet latent

    values["out.w"] = rng.normal(0.0, np.sqrt(1.0 / D), size=(D, 2))
    values["out.b"] = np.full(2, 0.5)    # centre of the normalized pitch

    dt = config.np_dtype
    return ModelParameters(values={k: v.astype(dt) for k, v in values.items()},
                           config=config)


def build_tensors(params: ModelParameters) -> dict[str, Tensor]:
    """Fresh gradient-tracking views over the (shared) parameter arrays."""
    return {k: ad.parameter(v, name=k) for k, v in params.values.items()}


# ---------------------------------------------------------------------------
# Layers

@dataclass
class AttentionParams:
    """Projection weights for the standalone attention operations."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor


def attention_spatial(xq: Tensor, xk: Tensor, xv: Tensor,
                      params: AttentionParams, heads: int
                      ) -> tuple[Tensor, np.ndarray]:
    """Multi-head attention over the node axis, per (sample, step, head).

    Inputs are [N, T, V, d*]; Q/K/V are ReLU projections to width D; the
    softmax normalizes over the node axis. When one input serves as all of
    Q, K, and V, pass it three times. Returns the output and the attention
    weights [N, T, heads, V, V] (detached).
    """
    for x in (xk, xv):
        if x.shape[:3] != xq.shape[:3]:
            raise ShapeMismatchError(f"incompatible shapes {xq.shape} vs {x.shape}")
    q = ad.dense(xq, params.wq, params.bq)
    k = ad.dense(xk, params.wk, params.bk)
    v = ad.dense(xv, params.wv, params.bv)
    d = q.shape[-1]
    return ad.multihead_attention(q, k, v, heads, over_time=False,
                                  scale_factor=1.0 / np.sqrt(d))


def attention_temporal(xq: Tensor, xk: Tensor, xv: Tensor,
                       params: AttentionParams, heads: int
                       ) -> tuple[Tensor, np.ndarray]:
    """Attention over the time axis, per node: the st-transposed twin.

    Query and key/value temporal lengths may differ (cross-time use).
    Returns output [N, Tq, V, D] and weights [N, V, heads, Tq, Tk].
    """
    if xk.shape != xv.shape or xk.shape[2] != xq.shape[2] \
            or xk.shape[0] != xq.shape[0]:
        raise ShapeMismatchError(f"incompatible shapes {xq.shape} vs {xk.shape}")
    q = ad.dense(xq, params.wq, params.bq)
    k = ad.dense(xk, params.wk, params.bk)
    v = ad.dense(xv, params.wv, params.bv)
    d = q.shape[-1]
    return ad.multihead_attention(q, k, v, heads, over_time=True,
                                  scale_factor=1.0 / np.sqrt(d))


def _qkv_split(h: Tensor, e_tl: Tensor, tmap: dict, prefix: str,
               r: str) -> Tensor:
    """Concat(H, E_TL) . W + b computed as H.Wh + (E.We + b).

    E_TL is node-constant, so its projection runs once per (sample, step)
    and broadcasts over the node axis; equality with the literal concat
    projection is exact (the weight matrix is just split row-wise). The
    ReLU activation is applied inside the fused attention kernel.
    """
    n, t, _, _ = h.shape
    ee = ad.dense(e_tl, tmap[f"{prefix}.{r}e"], tmap[f"{prefix}.{r}b"])
    ee = ad.reshape(ee, (n, t, 1, ee.shape[-1]))
    return ad.dense_bcast(h, tmap[f"{prefix}.{r}h"], ee)


def _mlp_split(h: Tensor, e_tl: Tensor, tmap: dict, prefix: str) -> Tensor:
    """Two-layer dense map on Concat(H, E_TL): the no-attention ablation."""
    n, t, _, _ = h.shape
    ee = ad.dense(e_tl, tmap[f"{prefix}.m1e"], tmap[f"{prefix}.m1b"])
    ee = ad.reshape(ee, (n, t, 1, ee.shape[-1]))
    hidden = ad.relu(ad.dense_bcast(h, tmap[f"{prefix}.m1h"], ee))
    return ad.dense(hidden, tmap[f"{prefix}.m2w"], tmap[f"{prefix}.m2b"])


def st_attention_block(h: Tensor, e_tl: Tensor, tmap: dict, blk: str,
                       config: ModelConfig,
                       weights_out: dict | None = None) -> Tensor:
    """One spatial + temporal attention pair fused by a learned gate.

    h: [N, T, V, D]; e_tl: [N, T, 2D] (node-constant). With
    config.use_attention False, both attentions are replaced by equal-width
    two-layer dense maps.
    """
    n, t, v, d = h.shape
    heads = config.heads
    scale = 1.0 / np.sqrt(d)
    if config.use_attention:
        h_s, p_s = ad.multihead_attention(
            _qkv_split(h, e_tl, tmap, f"{blk}.spatial", "q"),
            _qkv_split(h, e_tl, tmap, f"{blk}.spatial", "k"),
            _qkv_split(h, e_tl, tmap, f"{blk}.spatial", "v"),
            heads, over_time=False, scale_factor=scale)
        h_t, p_t = ad.multihead_attention(
            _qkv_split(h, e_tl, tmap, f"{blk}.temporal", "q"),
            _qkv_split(h, e_tl, tmap, f"{blk}.temporal", "k"),
            _qkv_split(h, e_tl, tmap, f"{blk}.temporal", "v"),
            heads, over_time=True, scale_factor=scale)
        if weights_out is not None:
            weights_out[f"{blk}.spatial"] = p_s
            weights_out[f"{blk}.temporal"] = p_t
    else:
        h_s = _mlp_split(h, e_tl, tmap, f"{blk}.spatial")
        h_t = _mlp_split(h, e_tl, tmap, f"{blk}.temporal")

    gate_pre = ad.dense(h_s, tmap[f"{blk}.gate.w1"]) \
        + ad.dense(h_t, tmap[f"{blk}.gate.w2"], tmap[f"{blk}.gate.b"])
    return ad.gated_mix(gate_pre, h_s, h_t)


def cross_time_attention(e_tl_future: Tensor, e_tl_history: Tensor,
                         h_enc: Tensor, tmap: dict, config: ModelConfig,
                         weights_out: dict | None = None) -> Tensor:
    """Project encoded history onto the target time steps.

    Queries come from the future TL-embeddings, keys from the history
    TL-embeddings (both node-constant), values from the encoder output.
    Output temporal length equals the future length q.
    """
    n, p, v, d = h_enc.shape
    q_steps = e_tl_future.shape[1]

    def project_broadcast(e: Tensor, steps: int, prefix: str) -> Tensor:
        proj = ad.dense(e, tmap[f"cross.{prefix}w"], tmap[f"cross.{prefix}b"])
        proj = ad.reshape(proj, (n, steps, 1, d))
        return proj + ad.constant(np.zeros((n, steps, v, d),
                                           dtype=proj.data.dtype))

    q = project_broadcast(e_tl_future, q_steps, "q")
    k = project_broadcast(e_tl_history, p, "k")
    val = ad.dense(h_enc, tmap["cross.vw"], tmap["cross.vb"])
    out, pw = ad.multihead_attention(q, k, val, config.heads, over_time=True,
                                     scale_factor=1.0 / np.sqrt(d))
    if weights_out is not None:
        weights_out["cross"] = pw
    return out


@dataclass
class LatentDistribution:
    mean: Tensor
    log_variance: Tensor

    def kl_to_standard_normal(self) -> Tensor:
        """Mean over the batch of KL(q || N(0, I)), closed form."""
        mu, lv = self.mean, self.log_variance
        per_sample = ad.tsum(ad.exp(lv) + mu * mu - 1.0 - lv, axis=-1)
        return ad.scale(ad.tmean(per_sample), 0.5)


def variational_head(h_enc: Tensor, tmap: dict, config: ModelConfig,
                     eps: np.ndarray | None
                     ) -> tuple[Tensor, LatentDistribution]:
    """Pool the encoder output per graph and sample z by reparameterization.

    eps is the externally drawn N(0, I) noise (None means deterministic
    z = mean, also the use_variation=False path).
    """
    pooled = ad.tmean(h_enc, axis=(1, 2))       # [N, D]
    mean = ad.dense(pooled, tmap["var.mw"], tmap["var.mb"])
    log_var = ad.dense(pooled, tmap["var.lw"], tmap["var.lb"])
    latent = LatentDistribution(mean, log_var)
    if not config.use_variation or eps is None:
        return mean, latent
    std = ad.exp(ad.scale(log_var, 0.5))
    z = mean + std * ad.constant(eps)
    return z, latent


# ---------------------------------------------------------------------------
# Full generator

@dataclass
class ForwardResult:
    prediction: Tensor                 # [N, q, V, 2] metres
    latent: LatentDistribution
    tensors: dict[str, Tensor]
    attention_weights: dict[str, np.ndarray] = field(default_factory=dict)
    language_weights: np.ndarray | None = None


class TrajectoryGenerator:
    """Bundles config, parameters, and the token embedder."""

    def __init__(self, params: ModelParameters):
        self.params = params
        self.config = params.config
        self.embedder = HashedTokenEmbedder(self.config.latent_dim,
                                            self.config.token_seed)
        time_steps = self.config.history_steps + self.config.future_steps
        self._dtype = self.config.np_dtype
        self._time_table = _sinusoidal_table(
            time_steps, self.config.latent_dim).astype(self._dtype)
        self._feature_scale = _FEATURE_SCALE.astype(self._dtype)
        self._output_scale = _OUTPUT_SCALE.astype(self._dtype)

    # -- language ----------------------------------------------------------
    def embed_language(self, texts: list[str], tmap: dict
                       ) -> tuple[Tensor, np.ndarray]:
        """Attention-pooled sentence embeddings, [N, D]."""
        mats = [self.embedder.embed_text(t) for t in texts]
        max_len = max(m.shape[0] for m in mats)
        n = len(mats)
        d = self.config.latent_dim
        padded = np.zeros((n, max_len, d), dtype=self._dtype)
        mask = np.full((n, max_len), -1e30, dtype=self._dtype)
        for i, m in enumerate(mats):
            padded[i, :m.shape[0]] = m
            mask[i, :m.shape[0]] = 0.0
        tokens = ad.constant(padded)
        scores = ad.tsum(tokens * ad.reshape(tmap["lang.score"], (1, 1, d)),
                         axis=-1)
        scores = ad.scale(scores, 1.0 / np.sqrt(d)) + ad.constant(mask)
        alpha = ad.softmax(scores, axis=-1)                     # [N, Tk]
        pooled = ad.tsum(tokens * ad.reshape(alpha, (n, max_len, 1)), axis=1)
        out = ad.dense(pooled, tmap["lang.w"], tmap["lang.b"])
        return out, alpha.data

    def tl_embedding(self, e_lang: Tensor, t_offset: int, steps: int
                     ) -> Tensor:
        """Concat(time encoding, language embedding) per step: [N, steps, 2D]."""
        n, d = e_lang.shape
        time_part = ad.constant(np.broadcast_to(
            self._time_table[t_offset:t_offset + steps][None], (n, steps, d)).copy())
        lang_part = ad.reshape(e_lang, (n, 1, d)) + ad.constant(
            np.zeros((n, steps, d), dtype=self._dtype))
        return ad.concat([time_part, lang_part], axis=-1)

    # -- forward -----------------------------------------------------------
    def forward_batch(self, histories: np.ndarray, texts: list[str],
                      eps: np.ndarray | None = None,
                      tensors: dict[str, Tensor] | None = None,
                      collect_weights: bool = False) -> ForwardResult:
        """histories: [N, p, 23, d] raw features; texts: N descriptions."""
        cfg = self.config
        n, p, v, d_in = histories.shape
        if p != cfg.history_steps or v != N_ENTITIES or d_in != cfg.feature_dim:
            raise ShapeMismatchError(
                f"history shape {histories.shape} does not match config "
                f"({cfg.history_steps}, {N_ENTITIES}, {cfg.feature_dim})")
        if len(texts) != n:
            raise ShapeMismatchError("one description per history required")

        tmap = tensors if tensors is not None else build_tensors(self.params)
        weights: dict[str, np.ndarray] = {}
        wout = weights if collect_weights else None

        e_lang, lang_w = self.embed_language(texts, tmap)
        e_hist = self.tl_embedding(e_lang, 0, cfg.history_steps)
        e_fut = self.tl_embedding(e_lang, cfg.history_steps, cfg.future_steps)

        x = ad.constant((histories * _FEATURE_SCALE).astype(self._dtype))
        h = ad.dense(x, tmap["in.w"], tmap["in.b"])
        for i in range(cfg.layers):
            h = st_attention_block(h, e_hist, tmap, f"enc{i}", cfg, wout)

        h_bridge = cross_time_attention(e_fut, e_hist, h, tmap, cfg, wout)
        if eps is not None:
            eps = eps.astype(self._dtype, copy=False)
        z, latent = variational_head(h, tmap, cfg, eps)
        h_dec = h_bridge + ad.reshape(z, (n, 1, 1, cfg.latent_dim))
        for i in range(cfg.layers):
            h_dec = st_attention_block(h_dec, e_fut, tmap, f"dec{i}", cfg, wout)

        pred = ad.dense(h_dec, tmap["out.w"], tmap["out.b"])
        pred = pred * ad.constant(self._output_scale)
        if not np.all(np.isfinite(pred.data)):
            raise NonFiniteActivationError("non-finite activations in forward")
        return ForwardResult(prediction=pred, latent=latent, tensors=tmap,
                             attention_weights=weights,
                             language_weights=lang_w if collect_weights else None)

    def predict(self, history: SpatiotemporalGraph, description_text: str,
                rng_seed: int = 0, sample_prior: bool = False) -> np.ndarray:
        """[q, 23, 2] predicted positions (metres); deterministic per seed.

        sample_prior=False decodes the deterministic latent (posterior mean);
        sample_prior=True decodes z ~ N(0, I) drawn from rng_seed.
        """
        cfg = self.config
        hist = history.features[None]
        if sample_prior and cfg.use_variation:
            rng = np.random.default_rng(rng_seed)
            z = rng.standard_normal((1, cfg.latent_dim))
            return self._decode_with_z(hist, description_text, z,
                                       build_tensors(self.params))
        return self.forward_batch(hist, [description_text]).prediction.data[0]

    def _decode_with_z(self, histories: np.ndarray, text: str,
                       z_value: np.ndarray,
                       tmap: dict[str, Tensor]) -> np.ndarray:
        """Decoder-only pass with the latent pinned to z_value."""
        cfg = self.config
        n = histories.shape[0]
        e_lang, _ = self.embed_language([text] * n, tmap)
        e_hist = self.tl_embedding(e_lang, 0, cfg.history_steps)
        e_fut = self.tl_embedding(e_lang, cfg.history_steps, cfg.future_steps)
        x = ad.constant((histories * _FEATURE_SCALE).astype(self._dtype))
        h = ad.dense(x, tmap["in.w"], tmap["in.b"])
        for i in range(cfg.layers):
            h = st_attention_block(h, e_hist, tmap, f"enc{i}", cfg)
        h_bridge = cross_time_attention(e_fut, e_hist, h, tmap, cfg)
        h_dec = h_bridge + ad.reshape(ad.constant(z_value.astype(self._dtype)),
                                      (n, 1, 1, cfg.latent_dim))
        for i in range(cfg.layers):
            h_dec = st_attention_block(h_dec, e_fut, tmap, f"dec{i}", cfg)
        pred = ad.dense(h_dec, tmap["out.w"], tmap["out.b"])
        pred = pred * ad.constant(_OUTPUT_SCALE)
        if not np.all(np.isfinite(pred.data)):
            raise NonFiniteActivationError("non-finite activations in decode")
        return pred.data[0]

    def generate(self, history: SpatiotemporalGraph,
                 description: EventDescription | str, n_samples: int = 1,
                 rng_seed: int = 0) -> list[SpatiotemporalGraph]:
        """Sample G_n instances: z ~ N(0, I) per sample, decoded with the
        history; reproducible for a fixed seed."""
        if isinstance(description, EventDescription):
            desc_obj = description
            text = render_description_text(description)
        else:
            from .pitch import parse_description_text
            text = description
            desc_obj = parse_description_text(description)
        cfg = self.config
        rng = np.random.default_rng(rng_seed)
        instances = []
        for _ in range(n_samples):
            if cfg.use_variation:
                z = rng.standard_normal((1, cfg.latent_dim))
                pred = self._decode_with_z(history.features[None], text, z,
                                           build_tensors(self.params))
            else:
                pred = self.forward_batch(history.features[None],
                                          [text]).prediction.data[0]
            instances.append(assemble_instance(history, pred, desc_obj))
        return instances

    def tl_embedding_single(self, t_index: int, description_text: str
                            ) -> np.ndarray:
        """Concat(time encoding, pooled language embedding): one 2D vector."""
        tmap = build_tensors(self.params)
        e_lang, _ = self.embed_language([description_text], tmap)
        return np.concatenate([sinusoidal_encoding(t_index,
                                                   self.config.latent_dim),
                               e_lang.data[0]])


def assemble_instance(history: SpatiotemporalGraph, positions: np.ndarray,
                      description: EventDescription) -> SpatiotemporalGraph:
    """Build the predicted G_n from generated positions.

    Velocities come from position differences; time stamps continue the
    history's sampling grid.
    """
    q = positions.shape[0]
    dt = float(np.mean(np.diff(history.time_index))) \
        if len(history.time_index) > 1 else 0.5
    t0 = history.time_index[-1]
    time_index = tuple(t0 + (k + 1) * dt for k in range(q))

    feats = np.array(history.features[-1])[None].repeat(q, axis=0)
    feats[:, :, FEAT_X] = positions[:, :, 0]
    feats[:, :, FEAT_Y] = positions[:, :, 1]
    prev = np.vstack([history.positions()[-1][None], positions[:-1]])
    vel = (positions - prev) / dt
    feats[:, :, FEAT_VX] = vel[:, :, 0]
    feats[:, :, FEAT_VY] = vel[:, :, 1]
    return SpatiotemporalGraph(entities=history.entities, features=feats,
                               time_index=time_index, description=description)
