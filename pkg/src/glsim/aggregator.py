"""CLS-token aggregator, classifier head, and the end-to-end GLSim pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from glsim.config import ArchConfig, grid_dims
from glsim.cropper import PixelRect, box_to_pixels, crop_resize, enclosing_box, random_indices
from glsim.dfsm import SaliencyMap, saliency, top_o
from glsim.encoder import F32, WeightSet, block_forward, encode, layer_norm, representable
from glsim.errors import InvalidConfigError, NumericError, ShapeError


@dataclass(frozen=True)
class RefinedPair:
    r: np.ndarray  # (2, D) after the aggregator block
    r_ln: np.ndarray  # (2, D) after the aggregator LayerNorm


def aggregate(cls_orig: np.ndarray, cls_crop: np.ndarray, weights: WeightSet) -> RefinedPair:
    """One pre-norm transformer block over the pair [CLS_orig; CLS_crop]. No positional terms."""
    a = np.asarray(cls_orig, dtype=F32)
    b = np.asarray(cls_crop, dtype=F32)
    d = weights.config.width
    if a.shape != (d,) or b.shape != (d,):
        raise ShapeError(f"CLS vectors must have length {d}, got {a.shape} and {b.shape}")
    x = np.stack([a, b])
    r, _ = block_forward(x, weights.agg, weights.config.heads)
    r_ln = layer_norm(r, weights.agg_norm_g, weights.agg_norm_b)
    if not (representable(r) and representable(r_ln)):
        raise NumericError("non-finite values in aggregator")
    return RefinedPair(r=r.astype(F32), r_ln=r_ln.astype(F32))


def classify(r_ln0: np.ndarray, c_final: np.ndarray) -> np.ndarray:
    """Logits = r_ln0 @ C_final, evaluated in float64, no bias."""
    v = np.asarray(r_ln0, dtype=np.float64)
    c = np.asarray(c_final, dtype=np.float64)
    if v.ndim != 1 or c.ndim != 2 or c.shape[0] != v.shape[0]:
        raise ShapeError(f"cannot apply {c.shape} classifier to vector of shape {v.shape}")
    return v @ c


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    return np.exp(z - logsumexp(z))


def confidence_select(logits_a, logits_b) -> tuple[int, str, float]:
    """Pick the branch whose softmax peak is higher; ties go to ``a``."""
    pa, pb = _softmax(logits_a), _softmax(logits_b)
    if pa.shape != pb.shape:
        raise ShapeError(f"logit lengths differ: {pa.shape} vs {pb.shape}")
    ca, cb = int(np.argmax(pa)), int(np.argmax(pb))
    if pb[cb] > pa[ca]:
        return cb, "b", float(pb[cb])
    return ca, "a", float(pa[ca])


def cross_entropy(logits, label: int, smoothing: float = 0.0) -> float:
    z = np.asarray(logits, dtype=np.float64)
    t = len(z)
    if not 0.0 <= smoothing < 1.0:
        raise InvalidConfigError(f"label smoothing must lie in [0, 1), got {smoothing}")
    if not 0 <= label < t:
        raise InvalidConfigError(f"label {label} out of range for {t} classes")
    log_p = z - logsumexp(z)
    target = np.full(t, smoothing / t)
    target[label] += 1.0 - smoothing
    return float(-(target * log_p).sum())


@dataclass(frozen=True)
class ForwardResult:
    logits: np.ndarray
    saliency: SaliencyMap
    rect: PixelRect
    logits_orig: np.ndarray
    logits_crop: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    crop_features: np.ndarray
    crop_image: np.ndarray


def select_crop(sal: SaliencyMap, config: ArchConfig, o: int, crop_mode: str = "gls", seed: int = 0):
    """Patch indices and pixel rectangle for the second pass.

    A constant (or flagged) saliency map carries no preference, so the crop
    falls back to the whole image.
    """
    rows, cols = grid_dims(config)
    n = rows * cols
    if crop_mode == "random":
        idx = random_indices(seed, o, n)
    elif crop_mode == "gls":
        s = sal.scores
        if sal.degenerate or s.max() == s.min():
            idx = np.arange(n)
        else:
            idx = top_o(s, o)
    else:
        raise InvalidConfigError(f"unknown crop mode {crop_mode!r}")
    return idx, box_to_pixels(enclosing_box(idx, (rows, cols)), config)


def glsim_forward(
    image: np.ndarray,
    weights: WeightSet,
    metric: str = "cosine",
    o: int | None = None,
    crop_mode: str = "gls",
    seed: int = 0,
) -> ForwardResult:
    """Encode, select by saliency, crop, re-encode with the crop CLS token, aggregate, classify."""
    config = weights.config
    o = config.top_o if o is None else o
    feats, attn = encode(image, config, weights, cls_variant=0)
    sal = saliency(metric, feats, attn)
    idx, rect = select_crop(sal, config, o, crop_mode, seed)
    crop = crop_resize(image, rect, config.image_w, config.image_h)
    crop_feats, _ = encode(crop, config, weights, cls_variant=1)
    pair = aggregate(feats[0], crop_feats[0], weights)
    return ForwardResult(
        logits=classify(pair.r_ln[0], weights.head),
        saliency=sal,
        rect=rect,
        logits_orig=classify(feats[0], weights.head),
        logits_crop=classify(crop_feats[0], weights.head),
        indices=idx,
        features=feats,
        crop_features=crop_feats,
        crop_image=crop,
    )
