"""Discriminative feature selection mechanisms.

Global-local similarity (GLS) scores each patch token by its similarity to
the CLS token of the final layer. Rollout, PSM and MAWS are the
attention-based alternatives, kept for comparison and visualisation.

Saliency vectors are float64 and indexed by patch (0..N-1, row-major);
the CLS position is never part of a saliency map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from glsim.errors import InvalidConfigError, ShapeError

METRICS = ("cosine", "l1", "l2")


@dataclass
class FlopCounter:
    """Tally of arithmetic performed by an instrumented routine.

    ``flops`` holds work that scales with the number of tokens;
    ``setup`` holds fixed per-call work (e.g. normalising the CLS vector once).
    ``matmuls`` counts full matrix-matrix products.
    """

    flops: int = 0
    setup: int = 0
    matmuls: int = 0


@dataclass(frozen=True)
class SaliencyMap:
    scores: np.ndarray
    metric: str
    degenerate: bool = False

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True)
class HeadSelection:
    indices: np.ndarray  # sequence coordinates, 1..N
    scores: np.ndarray
    products: np.ndarray = field(repr=False)  # (H, n, n) accumulated attention


def _split(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise ShapeError(f"features must be (N+1, D) with N >= 1, got {f.shape}")
    return f[0], f[1:]


def gls_scores(features: np.ndarray, metric: str = "cosine", counter: FlopCounter | None = None) -> SaliencyMap:
    """Similarity of every patch token to the CLS token.

    ``cosine`` returns cos(f0, fi). ``l1``/``l2`` return the negated distance
    so that larger always means more similar. A zero vector under cosine
    yields score 0 and sets ``degenerate``.
    """
    g, local = _split(features)
    n, d = local.shape
    if metric == "cosine":
        g_norm = np.sqrt(g @ g)
        sq = np.einsum("ij,ij->i", local, local)
        norms = np.sqrt(sq)
        degenerate = bool(g_norm == 0.0 or np.any(norms == 0.0))
        unit_g = g / g_norm if g_norm > 0 else np.zeros_like(g)
        safe = np.where(norms > 0, norms, 1.0)
        unit = local / safe[:, None]
        scores = unit @ unit_g
        scores[norms == 0] = 0.0
        np.clip(scores, -1.0, 1.0, out=scores)
        if counter is not None:
            # per token: squared norm, rescale, dot with the unit CLS vector
            counter.flops += 3 * n * d
            counter.setup += 2 * d
        return SaliencyMap(scores, "GLS-cosine", degenerate)
    if metric == "l1":
        return SaliencyMap(-np.abs(local - g).sum(axis=1), "GLS-L1")
    if metric == "l2":
        diff = local - g
        return SaliencyMap(-np.sqrt(np.einsum("ij,ij->i", diff, diff)), "GLS-L2")
    raise InvalidConfigError(f"unknown similarity metric {metric!r}; choose from {METRICS}")


def _check_stack(attn: np.ndarray) -> np.ndarray:
    a = np.asarray(attn, dtype=np.float64)
    if a.ndim != 4 or a.shape[2] != a.shape[3] or a.shape[2] < 2:
        raise ShapeError(f"attention stack must be (L, H, n, n) with n >= 2, got {a.shape}")
    return a


def rollout_matrix(attn: np.ndarray, counter: FlopCounter | None = None) -> np.ndarray:
    """Head-averaged attention with the residual path mixed in, chained over layers."""
    a = _check_stack(attn)
    eye = np.eye(a.shape[2])
    result = None
    for layer in a:
        mixed = (layer.mean(axis=0) + eye) / 2.0
        mixed /= mixed.sum(axis=1, keepdims=True)
        if result is None:
            result = mixed
        else:
            result = mixed @ result
            if counter is not None:
                counter.matmuls += 1
    return result


def rollout_scores(attn: np.ndarray, counter: FlopCounter | None = None) -> SaliencyMap:
    r = rollout_matrix(attn, counter)
    return SaliencyMap(r[0, 1:].copy(), "rollout")


def psm_selection(attn: np.ndarray, counter: FlopCounter | None = None) -> HeadSelection:
    """Per-head product of the first L-1 layers, then argmax of the CLS row.

    Uses L-2 matrix products per head. Ties go to the lowest patch index.
    """
    a = _check_stack(attn)
    depth = a.shape[0]
    if depth < 2:
        raise InvalidConfigError(f"PSM needs at least 2 layers, got {depth}")
    prod = a[0].copy()
    for layer in range(1, depth - 1):
        prod = a[layer] @ prod
        if counter is not None:
            counter.matmuls += a.shape[1]
    cls_row = prod[:, 0, 1:]
    best = np.argmax(cls_row, axis=1)
    return HeadSelection(
        indices=best + 1,
        scores=cls_row[np.arange(len(best)), best],
        products=prod,
    )


def psm_scores(attn: np.ndarray) -> SaliencyMap:
    """Head-averaged CLS row of the PSM product, for heatmaps."""
    sel = psm_selection(attn)
    return SaliencyMap(sel.products[:, 0, 1:].mean(axis=0), "PSM")


def maws_scores(attn: np.ndarray) -> SaliencyMap:
    """Normalised product of the CLS row and CLS column of the last layer (head-averaged)."""
    a = _check_stack(attn)
    avg = a[-1].mean(axis=0)
    row = avg[0, 1:]
    col = avg[1:, 0]
    n = len(row)
    rs, cs = row.sum(), col.sum()
    if rs <= 0 or cs <= 0:
        return SaliencyMap(np.full(n, 1.0 / n), "MAWS", degenerate=True)
    prod = (row / rs) * (col / cs)
    total = prod.sum()
    if total <= 0:
        return SaliencyMap(np.full(n, 1.0 / n), "MAWS", degenerate=True)
    return SaliencyMap(prod / total, "MAWS")


def top_o(scores, o: int) -> np.ndarray:
    """Indices of the ``o`` largest scores, ascending. Ties prefer the lower index."""
    s = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    n = len(s)
    if not 1 <= o <= n:
        raise InvalidConfigError(f"top-O must lie in [1, {n}], got {o}")
    order = np.argsort(-s, kind="stable")
    return np.sort(order[:o])


SALIENCY_METHODS = ("cosine", "l1", "l2", "rollout", "maws", "psm")


def saliency(method: str, features: np.ndarray, attn: np.ndarray) -> SaliencyMap:
    """Dispatch by CLI metric name."""
    if method in METRICS:
        return gls_scores(features, method)
    if method == "rollout":
        return rollout_scores(attn)
    if method == "maws":
        return maws_scores(attn)
    if method == "psm":
        return psm_scores(attn)
    raise InvalidConfigError(f"unknown saliency method {method!r}; choose from {SALIENCY_METHODS}")
