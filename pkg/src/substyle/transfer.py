"""The three sub-style transfer modes: SMT mixtures, SST semantic matching
with per-region WCT, and MST multi-image decomposition."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cnn import FeatureMap, Network, encode
from .decomposition import ContentSegmentation, SubStyleModel, decompose_style
from .errors import ConfigError, DegenerateFeaturesWarning, NumericError
from .linalg import DEFAULT_EIG_CUTOFF, cosine_similarity
from .wct import color, whiten, wct

__all__ = ["MatchTable", "MixWeights", "smt", "match_substyles", "sst",
           "mst_decompose"]


@dataclass(frozen=True)
class MixWeights:
    beta: tuple

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if any(b < 0.0 or b > 1.0 for b in beta):
            raise ConfigError(f"mixture weights must be in [0, 1], got {beta}")
        object.__setattr__(self, "beta", beta)

    @property
    def total(self) -> float:
        return sum(self.beta)


@dataclass(frozen=True)
class MatchTable:
    sim: np.ndarray          # (K_c, K_s) cosine similarities
    assignment: np.ndarray   # (K_c,) matched style cluster per content cluster


def smt(content: np.ndarray, model: SubStyleModel, beta,
        cutoff: float = DEFAULT_EIG_CUTOFF) -> np.ndarray:
    """Sub-style mixture transfer: beta-weighted mean of per-cluster WCTs.

    One-hot beta reduces to the single cluster's WCT bitwise; zero-weight
    clusters are skipped entirely.
    """
    if not isinstance(beta, MixWeights):
        beta = MixWeights(beta=tuple(np.atleast_1d(np.asarray(beta, dtype=float))))
    if len(beta.beta) != model.k:
        raise ConfigError(
            f"mixture has {len(beta.beta)} weights for {model.k} sub-styles"
        )
    total = beta.total
    if total <= 0.0:
        raise NumericError("degenerate mixture")

    fw = whiten(content, cutoff)
    active = [(i, b) for i, b in enumerate(beta.beta) if b > 0.0]
    if len(active) == 1:
        return color(fw, model.stats[active[0][0]], cutoff)
    acc = None
    for i, b in active:
        term = b * color(fw, model.stats[i], cutoff)
        acc = term if acc is None else acc + term
    return acc / total


def match_substyles(seg: ContentSegmentation, model: SubStyleModel) -> MatchTable:
    """Cosine-similarity nearest-neighbor matching of content clusters to
    sub-styles; many-to-one is allowed, ties go to the lowest style index."""
    sim = np.empty((seg.k, model.k))
    for j in range(seg.k):
        for i in range(model.k):
            sim[j, i] = cosine_similarity(seg.means[j], model.stats[i].mean)
    assignment = sim.argmax(axis=1).astype(np.int32)
    return MatchTable(sim=sim, assignment=assignment)


def sst(content: FeatureMap, seg: ContentSegmentation, model: SubStyleModel,
        cutoff: float = DEFAULT_EIG_CUTOFF) -> np.ndarray:
    """Semantic sub-style transfer: per-region WCT against the matched
    sub-style's statistics.  Every feature column is transformed exactly once.
    """
    if seg.labels.shape != (content.height, content.width):
        raise ConfigError(
            f"segmentation {seg.labels.shape} does not match the "
            f"{content.height}x{content.width} feature map"
        )
    if seg.level != content.level:
        raise ConfigError(
            f"segmentation level {seg.level} != feature level {content.level}"
        )
    mat = content.as_matrix()
    flat = seg.labels.ravel()
    table = match_substyles(seg, model)
    out = np.empty(mat.shape)
    for j in range(seg.k):
        idx = np.flatnonzero(flat == j)
        if idx.size == 0:
            continue
        target = model.stats[int(table.assignment[j])]
        cols = mat[:, idx]
        if idx.size < 2:
            warnings.warn(
                f"content cluster {j} has {idx.size} member(s); "
                "mean shift only", DegenerateFeaturesWarning)
            shift = target.mean.astype(np.float64) - cols.astype(np.float64).mean(axis=1)
            out[:, idx] = cols + shift[:, None]
        else:
            out[:, idx] = wct(cols, target, cutoff)
    return out


def mst_decompose(style_images, k: int, level: int, seed: int,
                  encoder: Network, names=None) -> SubStyleModel:
    """Decompose a collection: encode every style image at the given level,
    concatenate the feature columns, and fit one sub-style model."""
    images = list(style_images)
    if not images:
        raise ConfigError("at least one style image is required")
    if names is None:
        names = [f"style{i}" for i in range(len(images))]
    mats = [encode(encoder, img, level).as_matrix() for img in images]
    features = mats[0] if len(mats) == 1 else np.concatenate(mats, axis=1)
    return decompose_style(features, k, seed, level=level,
                           provenance=tuple(str(n) for n in names),
                           preprocess=encoder.preprocess)
