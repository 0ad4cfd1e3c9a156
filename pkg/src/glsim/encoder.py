"""Vision Transformer forward pass in numpy.

Token layout follows the usual ViT: row 0 is the CLS token, rows 1..N are
patch tokens in row-major grid order. Blocks are pre-norm (LN -> MHSA ->
residual, LN -> MLP -> residual) with exact-erf GELU and LN epsilon 1e-6.
Weights, features and attention maps are float32; arithmetic inside a
forward pass runs in float64 and is rounded once on output.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import erf

from glsim.config import ArchConfig, grid_dims
from glsim.errors import InvalidConfigError, NumericError, ShapeError
from glsim.rng import SplitMix64

LN_EPS = 1e-6
INIT_STD = 0.02

F32 = np.float32


@dataclass(frozen=True)
class BlockWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def shapes(cls, width: int, hidden: int) -> dict[str, tuple[int, ...]]:
        d, h = width, hidden
        return {
            "ln1_g": (d,), "ln1_b": (d,),
            "wq": (d, d), "bq": (d,), "wk": (d, d), "bk": (d,),
            "wv": (d, d), "bv": (d,), "wo": (d, d), "bo": (d,),
            "ln2_g": (d,), "ln2_b": (d,),
            "w1": (d, h), "b1": (h,), "w2": (h, d), "b2": (d,),
        }


@dataclass(frozen=True)
class WeightSet:
    """All parameters of the backbone, the aggregator block and the classifier.

    ``patch_kernel`` is D x (3*P*P) with window pixels flattened in
    (row, col, channel) order. Linear layers act as ``x @ W`` so a D x T
    classifier maps a D-vector to T logits.
    """

    patch_kernel: np.ndarray
    patch_bias: np.ndarray
    pos_embed: np.ndarray
    cls_tokens: np.ndarray
    blocks: tuple[BlockWeights, ...]
    norm_g: np.ndarray
    norm_b: np.ndarray
    agg: BlockWeights
    agg_norm_g: np.ndarray
    agg_norm_b: np.ndarray
    head: np.ndarray
    config: ArchConfig = field(compare=False)

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Flat (name, array) pairs in canonical order."""
        out = [
            ("patch.kernel", self.patch_kernel),
            ("patch.bias", self.patch_bias),
            ("pos_embed", self.pos_embed),
            ("cls_tokens", self.cls_tokens),
        ]
        for i, blk in enumerate(self.blocks):
            out += [(f"blocks.{i}.{f.name}", getattr(blk, f.name)) for f in fields(blk)]
        out += [("norm.g", self.norm_g), ("norm.b", self.norm_b)]
        out += [(f"agg.{f.name}", getattr(self.agg, f.name)) for f in fields(self.agg)]
        out += [("agg_norm.g", self.agg_norm_g), ("agg_norm.b", self.agg_norm_b), ("head", self.head)]
        return out

    def replace_arrays(self, **updates) -> "WeightSet":
        """Copy with some flat-named arrays swapped (names as in ``named_arrays``)."""
        arrays = dict(self.named_arrays())
        for name, value in updates.items():
            key = name.replace("__", ".")
            if key not in arrays:
                raise KeyError(name)
            arrays[key] = np.asarray(value, dtype=F32).reshape(arrays[key].shape)
        return from_named_arrays(arrays, self.config)


def expected_shapes(config: ArchConfig) -> dict[str, tuple[int, ...]]:
    d, p = config.width, config.patch_size
    hidden = config.mlp_ratio * d
    shapes: dict[str, tuple[int, ...]] = {
        "patch.kernel": (d, 3 * p * p),
        "patch.bias": (d,),
        "pos_embed": (config.seq_len, d),
        "cls_tokens": (config.cls_variants, d),
    }
    block = BlockWeights.shapes(d, hidden)
    for i in range(config.depth):
        shapes.update({f"blocks.{i}.{k}": v for k, v in block.items()})
    shapes.update({"norm.g": (d,), "norm.b": (d,)})
    shapes.update({f"agg.{k}": v for k, v in block.items()})
    shapes.update({"agg_norm.g": (d,), "agg_norm.b": (d,), "head": (d, config.num_classes)})
    return shapes


def from_named_arrays(arrays: dict[str, np.ndarray], config: ArchConfig) -> WeightSet:
    shapes = expected_shapes(config)
    missing = set(shapes) - set(arrays)
    extra = set(arrays) - set(shapes)
    if missing or extra:
        raise ShapeError(f"weight names mismatch: missing={sorted(missing)} extra={sorted(extra)}")
    frozen = {}
    for name, shape in shapes.items():
        arr = np.array(arrays[name], dtype=F32)
        if arr.shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"{name}: non-finite weight values")
        arr.flags.writeable = False
        frozen[name] = arr

    def block(prefix):
        return BlockWeights(**{f.name: frozen[f"{prefix}.{f.name}"] for f in fields(BlockWeights)})

    return WeightSet(
        patch_kernel=frozen["patch.kernel"],
        patch_bias=frozen["patch.bias"],
        pos_embed=frozen["pos_embed"],
        cls_tokens=frozen["cls_tokens"],
        blocks=tuple(block(f"blocks.{i}") for i in range(config.depth)),
        norm_g=frozen["norm.g"],
        norm_b=frozen["norm.b"],
        agg=block("agg"),
        agg_norm_g=frozen["agg_norm.g"],
        agg_norm_b=frozen["agg_norm.b"],
        head=frozen["head"],
        config=config,
    )


def init_weights(seed: int, config: ArchConfig) -> WeightSet:
    """Deterministic weights: N(0, 0.02^2) for kernels, tokens and embeddings.

    Draws come from one SplitMix64 stream in the canonical parameter order.
    LayerNorm gains are 1; LayerNorm shifts and all biases are 0.
    """
    rng = SplitMix64(seed)
    arrays = {}
    for name, shape in expected_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("ln1_g", "ln2_g", "g"):
            arrays[name] = np.ones(shape, dtype=F32)
        elif leaf.startswith("b") or leaf.startswith("ln"):
            # biases and LN shifts
            arrays[name] = np.zeros(shape, dtype=F32)
        else:
            n = int(np.prod(shape))
            arrays[name] = (rng.normal(n) * INIT_STD).astype(F32).reshape(shape)
    return from_named_arrays(arrays, config)


# --- numerics -------------------------------------------------------------
# Helpers compute in float64; callers round to float32 at stage boundaries.

def layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / np.sqrt(var + LN_EPS) * g + b


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attention(x: np.ndarray, blk: BlockWeights, heads: int) -> tuple[np.ndarray, np.ndarray]:
    """Multi-head self-attention on an (n, D) sequence.

    Returns the projected output (n, D) and the softmaxed maps (H, n, n).
    """
    n, d = x.shape
    hd = d // heads
    q = (x @ blk.wq + blk.bq).reshape(n, heads, hd).transpose(1, 0, 2)
    k = (x @ blk.wk + blk.bk).reshape(n, heads, hd).transpose(1, 0, 2)
    v = (x @ blk.wv + blk.bv).reshape(n, heads, hd).transpose(1, 0, 2)
    attn = softmax((q @ k.transpose(0, 2, 1)) / np.sqrt(hd), axis=-1)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(n, d)
    return ctx @ blk.wo + blk.bo, attn


def mlp(x: np.ndarray, blk: BlockWeights) -> np.ndarray:
    return gelu(x @ blk.w1 + blk.b1) @ blk.w2 + blk.b2


def block_forward(x: np.ndarray, blk: BlockWeights, heads: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    out, attn = attention(layer_norm(x, blk.ln1_g, blk.ln1_b), blk, heads)
    x = x + out
    x = x + mlp(layer_norm(x, blk.ln2_g, blk.ln2_b), blk)
    return x, attn


_F32_MAX = float(np.finfo(F32).max)


def representable(x: np.ndarray) -> bool:
    """True when every value is finite and survives rounding to float32."""
    return bool(np.all(np.abs(x) <= _F32_MAX))


# --- images -> tokens -----------------------------------------------------

def as_image(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=F32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"image must be (height, width, 3), got {img.shape}")
    if not np.all(np.isfinite(img)):
        raise NumericError("image contains non-finite values")
    return img


def extract_windows(image: np.ndarray, config: ArchConfig) -> np.ndarray:
    """(N, 3*P*P) matrix of flattened patch windows in row-major grid order."""
    img = as_image(image)
    if img.shape[:2] != (config.image_h, config.image_w):
        raise ShapeError(
            f"image is {img.shape[1]}x{img.shape[0]}, config expects {config.image_w}x{config.image_h}"
        )
    p, s = config.patch_size, config.stride
    rows, cols = grid_dims(config)
    view = np.lib.stride_tricks.sliding_window_view(img, (p, p, 3))[::s, ::s, 0]
    return view[:rows, :cols].reshape(rows * cols, p * p * 3)


def _patch_tokens(image, config, weights) -> np.ndarray:
    windows = extract_windows(image, config).astype(np.float64)
    return windows @ weights.patch_kernel.T.astype(np.float64) + weights.patch_bias


def patchify(image: np.ndarray, config: ArchConfig, weights: WeightSet) -> np.ndarray:
    """Strided P x P convolution, one D-dimensional token per window (float32)."""
    return _patch_tokens(image, config, weights).astype(F32)


def encode(
    image: np.ndarray, config: ArchConfig, weights: WeightSet, cls_variant: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Run the backbone.

    Returns ``(features, attention)`` with shapes (N+1, D) and (L, H, N+1, N+1).
    """
    if not 0 <= cls_variant < config.cls_variants:
        raise InvalidConfigError(
            f"cls_variant {cls_variant} out of range for {config.cls_variants} CLS tokens"
        )
    tokens = _patch_tokens(image, config, weights)
    x = np.concatenate([weights.cls_tokens[cls_variant][None, :], tokens], axis=0)
    x = x + weights.pos_embed
    maps = np.empty((config.depth, config.heads, config.seq_len, config.seq_len), dtype=F32)
    for layer, blk in enumerate(weights.blocks):
        x, maps[layer] = block_forward(x, blk, config.heads)
        if not representable(x):
            raise NumericError("activations overflow float32", layer=layer)
    return layer_norm(x, weights.norm_g, weights.norm_b).astype(F32), maps
