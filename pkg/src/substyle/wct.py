"""Whitening-coloring feature transforms and the multi-level cascade."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cnn import FeatureMap, WeightBank, decode, encode, encode_taps
from .errors import ConfigError, DegenerateFeaturesWarning
from .image import pad_to_multiple
from .linalg import DEFAULT_EIG_CUTOFF, MomentStats, moment_stats, sym_eig

__all__ = [
    "whiten", "color", "color_basis", "wct", "blend",
    "StylizeConfig", "StyleSource", "multi_level_stylize",
]

# relative ridge added to covariance diagonals before eigendecomposition
_RIDGE_SCALE = 1e-8
_DEGENERATE_TRACE = 1e-12


def _check_dim(f: np.ndarray, stats: MomentStats):
    if f.shape[0] != stats.dim:
        raise ConfigError(
            f"feature/stats dimension mismatch: {f.shape[0]} vs {stats.dim}"
        )


def whiten(f: np.ndarray, cutoff: float = DEFAULT_EIG_CUTOFF) -> np.ndarray:
    """Decorrelate feature columns to (approximately) identity covariance.

    Constant features degenerate to all zeros with a warning.  When there are
    fewer samples than channels the eigenproblem is solved on the N x N Gram
    matrix instead of the C x C covariance.
    """
    f = np.asarray(f)
    stats = moment_stats(f)
    c, n = f.shape
    centered = f.astype(np.float64) - stats.mean.astype(np.float64)[:, None]
    trace = float(np.trace(stats.cov.astype(np.float64)))
    if trace <= _DEGENERATE_TRACE * c:
        warnings.warn("degenerate features: zero variance, whitening skipped",
                      DegenerateFeaturesWarning, stacklevel=2)
        return centered
    eps = _RIDGE_SCALE * trace / c

    if n < c:
        # snapshot trick: the Gram matrix shares the covariance spectrum
        gram = centered.T @ centered / n
        gram[np.diag_indices_from(gram)] += eps
        decomp = sym_eig(gram, cutoff=cutoff)
        basis = centered @ decomp.vectors
        norms = np.linalg.norm(basis, axis=0)
        keep = norms > 0
        vectors = basis[:, keep] / norms[keep]
        values = decomp.values[keep]
    else:
        cov = stats.cov.astype(np.float64)
        cov[np.diag_indices_from(cov)] += eps
        decomp = sym_eig(cov, cutoff=cutoff)
        vectors, values = decomp.vectors, decomp.values

    if values.size == 0:
        warnings.warn("degenerate features: no spectrum above cutoff",
                      DegenerateFeaturesWarning, stacklevel=2)
        return np.zeros_like(centered)
    return vectors @ ((vectors.T @ centered) / np.sqrt(values)[:, None])


def color_basis(stats: MomentStats, cutoff: float = DEFAULT_EIG_CUTOFF):
    """C x C coloring matrix M such that color(fw) = M @ fw + mean.

    Returns None when the covariance is degenerate (mean shift only).
    """
    cov = stats.cov.astype(np.float64)
    trace = float(np.trace(cov))
    if trace <= _DEGENERATE_TRACE * stats.dim:
        return None
    cov[np.diag_indices_from(cov)] += _RIDGE_SCALE * trace / stats.dim
    decomp = sym_eig(cov, cutoff=cutoff)
    if decomp.rank == 0:
        return None
    return (decomp.vectors * np.sqrt(decomp.values)) @ decomp.vectors.T


def color(fw: np.ndarray, target: MomentStats, cutoff: float = DEFAULT_EIG_CUTOFF,
          basis: np.ndarray | None = None) -> np.ndarray:
    """Re-correlate whitened features to match the target moments."""
    _check_dim(fw, target)
    if basis is None:
        basis = color_basis(target, cutoff)
    if basis is None:
        warnings.warn("degenerate target moments: coloring is a mean shift",
                      DegenerateFeaturesWarning, stacklevel=2)
        return np.broadcast_to(
            target.mean.astype(np.float64)[:, None], fw.shape
        ).copy()
    return basis @ fw + target.mean.astype(np.float64)[:, None]


def wct(content: np.ndarray, style_stats: MomentStats,
        cutoff: float = DEFAULT_EIG_CUTOFF,
        basis: np.ndarray | None = None) -> np.ndarray:
    """Whiten features against their own moments, color with the target's."""
    _check_dim(content, style_stats)
    return color(whiten(content, cutoff), style_stats, cutoff, basis=basis)


def blend(stylized: np.ndarray, content: np.ndarray, alpha: float) -> np.ndarray:
    """Convex mix of transformed and original features.

    The endpoints return the inputs untouched so that alpha=0 is bitwise
    independent of the style path.
    """
    if stylized.shape != content.shape:
        raise ConfigError(
            f"shape mismatch in blend: {stylized.shape} vs {content.shape}"
        )
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    if alpha == 0.0:
        return content
    if alpha == 1.0:
        return stylized
    return alpha * stylized + (1.0 - alpha) * content


@dataclass(frozen=True)
class StylizeConfig:
    alpha: float = 0.6
    delta: float = 0.8
    levels: tuple = (5, 4, 3, 2, 1)
    eig_cutoff: float = DEFAULT_EIG_CUTOFF
    seed: int = 42

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must be in [0, 1], got {self.delta}")
        levels = tuple(int(l) for l in self.levels)
        if not levels:
            raise ConfigError("at least one level is required")
        if any(l < 1 or l > 5 for l in levels):
            raise ConfigError(f"levels must be in 1..5, got {levels}")
        if list(levels) != sorted(set(levels), reverse=True):
            raise ConfigError(f"levels must be strictly descending, got {levels}")
        object.__setattr__(self, "levels", levels)
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}")


@dataclass
class StyleSource:
    """Per-level global style statistics plus, optionally, a sub-style model.

    The mode of multi_level_stylize decides which parts are consulted: plain
    WCT uses only `stats`; SMT additionally needs `model` and `beta`; SST
    needs `model` and segments the content with `segment_k` clusters.
    """

    stats: dict = field(default_factory=dict)   # level -> MomentStats
    model: object | None = None                 # SubStyleModel
    beta: np.ndarray | None = None
    segment_k: int | None = None

    @classmethod
    def from_image(cls, bank: WeightBank, style_img: np.ndarray, levels,
                   model=None, beta=None, segment_k=None) -> "StyleSource":
        return cls.from_images(bank, [style_img], levels, model=model,
                               beta=beta, segment_k=segment_k)

    @classmethod
    def from_images(cls, bank: WeightBank, style_imgs, levels,
                    model=None, beta=None, segment_k=None) -> "StyleSource":
        """Global per-level stats over one or more style images (feature
        columns concatenated across images before taking moments)."""
        levels = tuple(levels)
        encoder = bank.encoder(max(levels))
        per_level: dict = {lv: [] for lv in levels}
        for img in style_imgs:
            taps = encode_taps(encoder, img, levels)
            for lv, fm in taps.items():
                per_level[lv].append(fm.as_matrix())
        stats = {
            lv: moment_stats(mats[0] if len(mats) == 1
                             else np.concatenate(mats, axis=1))
            for lv, mats in per_level.items()
        }
        return cls(stats=stats, model=model, beta=beta, segment_k=segment_k)


def multi_level_stylize(bank: WeightBank, content: np.ndarray,
                        source: StyleSource, cfg: StylizeConfig,
                        mode: str = "wct") -> np.ndarray:
    """Coarse-to-fine stylization cascade.

    At each level the running image is re-encoded, transformed (global WCT
    everywhere except the sub-style model's own level, where the requested
    mode applies), blended as

        alpha * F_cs + (1 - alpha) * (delta * F_orig + (1 - delta) * F_run)

    and decoded back to pixels.  F_orig is the clean content tap at that
    level; SST segmentation also runs on it, not on the running features.
    """
    if mode not in ("wct", "smt", "sst"):
        raise ConfigError(f"unknown mode {mode!r}")
    content = np.asarray(content, dtype=np.float32)
    if content.ndim != 3 or content.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    levels = cfg.levels

    if mode in ("smt", "sst"):
        if source.model is None:
            raise ConfigError(f"mode {mode!r} needs a sub-style model")
        if source.model.level not in levels:
            raise ConfigError(
                f"model level {source.model.level} not in levels {levels}"
            )
    missing = [lv for lv in levels if lv not in source.stats]
    if cfg.alpha > 0.0 and missing:
        raise ConfigError(f"no style statistics for levels {missing}")
    # fail before any work if a decoder is absent
    decoders = {lv: bank.decoder(lv) for lv in levels}

    orig_h, orig_w = content.shape[:2]
    # pad once so every level's tap and re-encode agree on geometry
    padded = pad_to_multiple(content, 2 ** max(levels))
    taps = encode_taps(bank.encoder(max(levels)), padded, levels)

    img = padded
    for i, level in enumerate(levels):
        f_orig = taps[level]
        f_run = f_orig if i == 0 else encode(bank.encoder(level), img, level)
        orig_mat = f_orig.as_matrix()
        run_mat = orig_mat if f_run is f_orig else f_run.as_matrix()

        if cfg.alpha == 0.0:
            fhat = _anchor(orig_mat, run_mat, cfg.delta)
        else:
            fcs = _transform_level(level, f_run, f_orig, source, cfg, mode)
            if cfg.alpha == 1.0:
                fhat = fcs
            else:
                anchor = _anchor(orig_mat, run_mat, cfg.delta)
                fhat = cfg.alpha * fcs + (1.0 - cfg.alpha) * anchor
        img = decode(decoders[level], f_run.with_matrix(fhat))
    return np.ascontiguousarray(img[:orig_h, :orig_w])


def _anchor(orig_mat: np.ndarray, run_mat: np.ndarray, delta: float) -> np.ndarray:
    if delta == 1.0 or orig_mat is run_mat:
        return orig_mat
    if delta == 0.0:
        return run_mat
    return delta * orig_mat + (1.0 - delta) * run_mat


def _transform_level(level: int, f_run: FeatureMap, f_orig: FeatureMap,
                     source: StyleSource, cfg: StylizeConfig, mode: str) -> np.ndarray:
    model = source.model
    if mode != "wct" and model is not None and level == model.level:
        from . import transfer
        from .decomposition import segment_content
        if mode == "smt":
            return transfer.smt(f_run.as_matrix(), model, source.beta,
                                cfg.eig_cutoff)
        seg = segment_content(f_orig, source.segment_k or model.k, cfg.seed)
        return transfer.sst(f_run, seg, model, cfg.eig_cutoff)
    return wct(f_run.as_matrix(), source.stats[level], cfg.eig_cutoff)
