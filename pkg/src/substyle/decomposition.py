"""Sub-style detection: ICA source separation, GMM clustering, per-cluster
moment statistics, and content segmentation.

Style features are unmixed into independent sources, the sources are
clustered, and each cluster's transfer statistics are recomputed from the
original feature vectors.  Content segmentation fits the GMM directly on raw
feature vectors (no ICA).
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from . import sswt
from .cnn import FeatureMap
from .errors import ConfigError, FormatError, NumericError
from .image import save_mask
from .linalg import DEFAULT_EIG_CUTOFF, MomentStats, moment_stats, sym_eig

__all__ = [
    "IcaModel", "GmmModel", "SubStyleModel", "ContentSegmentation",
    "fast_ica", "gmm_fit", "assign", "decompose_style", "segment_content",
    "export_masks", "combined_stats", "save_model", "load_model",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class IcaModel:
    mixing: np.ndarray      # (C, k) float32
    unmixing: np.ndarray    # (k, C) float32, pseudo-inverse of mixing
    mean: np.ndarray        # (C,) float32
    whitener: np.ndarray    # (k, C) float32, PCA whitening rows
    rotation: np.ndarray    # (k, k) float32, orthogonal unmixing factor
    n_iter: int
    converged: bool

    @property
    def k(self) -> int:
        return self.mixing.shape[1]

    def transform(self, f: np.ndarray) -> np.ndarray:
        """Project features to source space: S = unmixing (F - mean)."""
        centered = np.asarray(f, dtype=np.float64) - self.mean.astype(np.float64)[:, None]
        return self.unmixing.astype(np.float64) @ centered


@dataclass
class GmmModel:
    k: int
    weights: np.ndarray     # (k,) float32
    means: np.ndarray       # (k, d) float32
    variances: np.ndarray   # (k, d) float32, diagonal covariances
    trace: np.ndarray       # per-sample mean log-likelihood per EM iteration
    var_floor: float
    n_iter: int
    converged: bool

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class SubStyleModel:
    k: int
    stats: list             # per-cluster MomentStats in original feature space
    counts: list            # per-cluster member counts
    ica: IcaModel
    gmm: GmmModel
    level: int
    provenance: tuple = ()
    seed: int = 0
    preprocess: str = "rgb01"


@dataclass
class ContentSegmentation:
    k: int
    labels: np.ndarray      # (H, W) int32 cluster indices
    means: np.ndarray       # (k, C) float32 exact member means
    counts: list
    level: int


# ---------------------------------------------------------------------------
# FastICA

def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^{-1/2} W
    s = sym_eig(w @ w.T, cutoff=0.0)
    return (s.vectors / np.sqrt(s.values)) @ s.vectors.T @ w


def fast_ica(features: np.ndarray, k: int, seed: int = 0,
             max_iter: int = 200, tol: float = 1e-4) -> IcaModel:
    """Symmetric-decorrelation FastICA with log-cosh contrast (g = tanh).

    Deterministic for a fixed seed.  Non-convergence after max_iter returns a
    model with converged=False rather than raising.
    """
    f = np.asarray(features)
    if f.ndim != 2:
        raise ValueError("expected a C x N feature matrix")
    c, n = f.shape
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if k > c:
        raise ConfigError(f"k={k} exceeds the channel count {c}")
    if n <= c:
        raise NumericError(f"need more samples than channels, got {n} <= {c}")

    stats = moment_stats(f)
    decomp = sym_eig(stats.cov.astype(np.float64), cutoff=DEFAULT_EIG_CUTOFF)
    if k > decomp.rank:
        raise NumericError("k exceeds feature rank")
    ek = decomp.vectors[:, :k]
    dk = decomp.values[:k]
    whitener = ek.T / np.sqrt(dk)[:, None]          # (k, C)
    centered = f.astype(np.float64) - stats.mean.astype(np.float64)[:, None]
    z = whitener @ centered                         # unit-variance components

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        g = np.tanh(w @ z)
        gp = (1.0 - g * g).mean(axis=1)
        w_new = _sym_decorrelate(g @ z.T / n - gp[:, None] * w)
        lim = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if lim < tol:
            converged = True
            break

    unmixing = w @ whitener                         # (k, C)
    mixing = (ek * np.sqrt(dk)) @ w.T               # (C, k)
    return IcaModel(
        mixing=mixing.astype(np.float32),
        unmixing=unmixing.astype(np.float32),
        mean=stats.mean.copy(),
        whitener=whitener.astype(np.float32),
        rotation=w.astype(np.float32),
        n_iter=n_iter,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# diagonal-covariance GMM

def _kmeanspp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    """Seeded k-means++ centers, canonicalized on the set of unique columns
    so that duplicated samples cannot change the initialization."""
    uniq = np.unique(points, axis=1)
    u = uniq.shape[1]
    centers = np.empty((k, points.shape[0]))
    centers[0] = uniq[:, int(rng.integers(u))]
    d2 = ((uniq - centers[0][:, None]) ** 2).sum(axis=0)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(u, p=d2 / total))
        else:
            idx = int(rng.integers(u))
        centers[j] = uniq[:, idx]
        d2 = np.minimum(d2, ((uniq - centers[j][:, None]) ** 2).sum(axis=0))
    return centers


def _log_prob(points, weights, means, variances):
    # (k, N) log of weight_j * N(x | mu_j, diag(var_j))
    d, n = points.shape
    k = means.shape[0]
    lp = np.empty((k, n))
    logw = np.log(np.maximum(weights, 1e-300))
    for j in range(k):
        diff = points - means[j][:, None]
        quad = (diff * diff / variances[j][:, None]).sum(axis=0)
        lp[j] = -0.5 * (d * _LOG_2PI + np.log(variances[j]).sum() + quad) + logw[j]
    return lp


def gmm_fit(points: np.ndarray, k: int, seed: int = 0,
            max_iter: int = 100, tol: float = 1e-5) -> GmmModel:
    """EM for a diagonal-covariance mixture with k-means++ initialization.

    Stops when the per-sample mean log-likelihood gain drops below tol.
    Variances are floored at 1e-6 times the global variance.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("expected a d x N point matrix")
    d, n = pts.shape
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if n < k:
        raise NumericError(f"fewer samples than clusters: {n} < {k}")
    if not np.all(np.isfinite(pts)):
        raise NumericError("non-finite points")

    floor = max(1e-6 * float(pts.var(axis=1).mean()), 1e-12)
    rng = np.random.default_rng(seed)
    means = _kmeanspp_init(pts, k, rng)             # (k, d)
    variances = np.tile(np.maximum(pts.var(axis=1), floor), (k, 1))
    weights = np.full(k, 1.0 / k)
    sq = pts * pts

    trace = []
    converged = False
    for _ in range(max_iter):
        lp = _log_prob(pts, weights, means, variances)
        top = lp.max(axis=0)
        lse = top + np.log(np.exp(lp - top).sum(axis=0))
        ll = float(lse.mean())
        trace.append(ll)
        if len(trace) > 1 and ll - trace[-2] < tol:
            converged = True
            break
        resp = np.exp(lp - lse)                     # (k, N)
        nk = resp.sum(axis=1)
        weights = nk / n
        safe = np.maximum(nk, 1e-300)[:, None]
        means = resp @ pts.T / safe
        variances = np.maximum(resp @ sq.T / safe - means * means, floor)

    return GmmModel(
        k=k,
        weights=weights.astype(np.float32),
        means=means.astype(np.float32),
        variances=variances.astype(np.float32),
        trace=np.asarray(trace),
        var_floor=floor,
        n_iter=len(trace),
        converged=converged,
    )


def assign(gmm: GmmModel, points: np.ndarray) -> np.ndarray:
    """Argmax-responsibility label per point; ties go to the lowest index."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] != gmm.dim:
        raise ConfigError(
            f"point dimension {pts.shape[0] if pts.ndim == 2 else '?'} does not "
            f"match model dimension {gmm.dim}"
        )
    lp = _log_prob(pts, gmm.weights.astype(np.float64),
                   gmm.means.astype(np.float64),
                   gmm.variances.astype(np.float64))
    return lp.argmax(axis=0).astype(np.int32)


# ---------------------------------------------------------------------------
# sub-style models and content segmentation

def _guarded_cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return -1.0
    return float(a @ b / (na * nb))


def _merge_tiny_clusters(labels: np.ndarray, features: np.ndarray, k: int):
    """Fold clusters below max(2, C/16) members into the most cosine-similar
    big cluster; drop empty ones.  Returns (relabeled, surviving old ids)."""
    c = features.shape[0]
    threshold = max(2, c // 16)
    counts = np.bincount(labels, minlength=k)
    nonempty = [j for j in range(k) if counts[j] > 0]
    for j in range(k):
        if counts[j] == 0:
            warnings.warn(f"dropped empty cluster {j}")
    big = [j for j in nonempty if counts[j] >= threshold]
    if not big:
        big = [int(np.argmax(counts))]
    means = {j: features[:, labels == j].mean(axis=1) for j in nonempty}
    for j in nonempty:
        if j in big:
            continue
        best, best_sim = big[0], -np.inf
        for b in big:
            sim = _guarded_cosine(means[j], means[b])
            if sim > best_sim:
                best, best_sim = b, sim
        warnings.warn(
            f"merged tiny cluster {j} ({counts[j]} members) into cluster {best}"
        )
        labels[labels == j] = best
    remap = np.full(k, -1, dtype=np.int32)
    for new, old in enumerate(big):
        remap[old] = new
    return remap[labels], big


def decompose_style(features: np.ndarray, k: int, seed: int = 0,
                    level: int = 4, provenance=(),
                    preprocess: str = "rgb01") -> SubStyleModel:
    """ICA + GMM sub-style decomposition of a style feature matrix.

    Sources S = unmixing F are clustered; per-cluster statistics are then
    recomputed from the original feature vectors, never from S.
    """
    f = np.asarray(features)
    if f.ndim != 2:
        raise ValueError("expected a C x N feature matrix")
    ica = fast_ica(f, k, seed)
    sources = ica.transform(f)
    gmm = gmm_fit(sources, k, seed)
    labels = assign(gmm, sources)
    labels, _ = _merge_tiny_clusters(labels.copy(), f, k)

    stats, counts = [], []
    for j in range(int(labels.max()) + 1):
        members = f[:, labels == j]
        stats.append(moment_stats(members))
        counts.append(members.shape[1])
    model = SubStyleModel(
        k=len(stats), stats=stats, counts=counts, ica=ica, gmm=gmm,
        level=level, provenance=tuple(provenance), seed=seed,
        preprocess=preprocess,
    )
    # column labels kept around (not persisted) so callers can export masks
    model._labels = labels
    return model


def combined_stats(model: SubStyleModel) -> MomentStats:
    """Reassemble the global moments from the per-cluster statistics.

    Exact by the law of total covariance; lets a saved model stand in for the
    style image at its own level.
    """
    total = sum(model.counts)
    mean = np.zeros(model.stats[0].dim)
    second = np.zeros((model.stats[0].dim,) * 2)
    for st, n in zip(model.stats, model.counts):
        mu = st.mean.astype(np.float64)
        mean += n * mu
        second += n * (st.cov.astype(np.float64) + np.outer(mu, mu))
    mean /= total
    cov = second / total - np.outer(mean, mean)
    return MomentStats(mean=mean.astype(np.float32),
                       cov=(0.5 * (cov + cov.T)).astype(np.float32),
                       count=total)


def segment_content(features: FeatureMap, k: int, seed: int = 0) -> ContentSegmentation:
    """Partition a content feature map into k regions by GMM on raw features."""
    mat = features.as_matrix()
    h, w = features.height, features.width
    if h * w < k:
        raise NumericError(f"fewer samples than clusters: {h * w} < {k}")
    gmm = gmm_fit(mat, k, seed)
    labels = assign(gmm, mat)

    counts = np.bincount(labels, minlength=k)
    surviving = [j for j in range(k) if counts[j] > 0]
    for j in range(k):
        if counts[j] == 0:
            warnings.warn(f"dropped empty segment {j}")
    remap = np.full(k, -1, dtype=np.int32)
    for new, old in enumerate(surviving):
        remap[old] = new
    labels = remap[labels]

    means = np.stack([
        mat[:, labels == new].astype(np.float64).mean(axis=1)
        for new in range(len(surviving))
    ]).astype(np.float32)
    return ContentSegmentation(
        k=len(surviving),
        labels=labels.reshape(h, w),
        means=means,
        counts=[int(counts[old]) for old in surviving],
        level=features.level,
    )


def export_masks(seg, out_dir, prefix: str = "mask", scale: int | None = None) -> list:
    """Write one black/white PNG per cluster, nearest-neighbor upscaled to
    image resolution.  Masks partition the image: disjoint, covering."""
    if isinstance(seg, ContentSegmentation):
        labels = seg.labels
        scale = 2 ** seg.level if scale is None else scale
    else:
        labels = np.asarray(seg)
        scale = 1 if scale is None else scale
    if labels.ndim != 2:
        raise ValueError("labels must be an H x W map")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for j in range(int(labels.max()) + 1):
        mask = np.repeat(np.repeat(labels == j, scale, axis=0), scale, axis=1)
        path = os.path.join(out_dir, f"{prefix}{j}.png")
        save_mask(path, mask)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# persistence: JSON manifest + SSWT tensor sidecar, bit-exact round trip

def _sidecar_path(path: str) -> str:
    return os.path.splitext(path)[0] + ".sswt"


def save_model(model: SubStyleModel, path) -> str:
    path = str(path)
    records = []

    def tensor(name, arr):
        records.append(sswt.Record(name=name, kind=sswt.KIND_CONV,
                                   data=np.ascontiguousarray(arr, np.float32)))

    for i, st in enumerate(model.stats):
        tensor(f"cluster{i}.mean", st.mean)
        tensor(f"cluster{i}.cov", st.cov)
    tensor("ica.mixing", model.ica.mixing)
    tensor("ica.unmixing", model.ica.unmixing)
    tensor("ica.mean", model.ica.mean)
    tensor("ica.whitener", model.ica.whitener)
    tensor("ica.rotation", model.ica.rotation)
    tensor("gmm.weights", model.gmm.weights)
    tensor("gmm.means", model.gmm.means)
    tensor("gmm.variances", model.gmm.variances)
    sidecar = _sidecar_path(path)
    sswt.write_records(sidecar, records)

    manifest = {
        "format": "substyle-model",
        "version": 1,
        "k": int(model.k),
        "level": int(model.level),
        "seed": int(model.seed),
        "counts": [int(c) for c in model.counts],
        "provenance": list(model.provenance),
        "preprocess": model.preprocess,
        "tensors": os.path.basename(sidecar),
        "ica": {"n_iter": int(model.ica.n_iter),
                "converged": bool(model.ica.converged)},
        "gmm": {"k": int(model.gmm.k),
                "n_iter": int(model.gmm.n_iter),
                "converged": bool(model.gmm.converged),
                "var_floor": float(model.gmm.var_floor),
                "trace": [float(v) for v in model.gmm.trace]},
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_model(path) -> SubStyleModel:
    path = str(path)
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad model manifest {path}: {exc}") from exc
    if manifest.get("format") != "substyle-model":
        raise FormatError(f"not a sub-style model manifest: {path}")
    if manifest.get("version") != 1:
        raise FormatError(f"unsupported model version {manifest.get('version')}")

    sidecar = os.path.join(os.path.dirname(path) or ".", manifest["tensors"])
    tensors = {rec.name: rec.data for rec in sswt.read_records(sidecar)}

    def need(name):
        if name not in tensors:
            raise FormatError(f"missing tensor {name!r} in {sidecar}")
        return tensors[name]

    k = int(manifest["k"])
    counts = [int(c) for c in manifest["counts"]]
    if len(counts) != k:
        raise FormatError(f"manifest lists {len(counts)} counts for k={k}")
    stats = [
        MomentStats(mean=need(f"cluster{i}.mean"), cov=need(f"cluster{i}.cov"),
                    count=counts[i])
        for i in range(k)
    ]
    ica = IcaModel(
        mixing=need("ica.mixing"), unmixing=need("ica.unmixing"),
        mean=need("ica.mean"), whitener=need("ica.whitener"),
        rotation=need("ica.rotation"),
        n_iter=int(manifest["ica"]["n_iter"]),
        converged=bool(manifest["ica"]["converged"]),
    )
    gm = manifest["gmm"]
    gmm = GmmModel(
        k=int(gm["k"]), weights=need("gmm.weights"), means=need("gmm.means"),
        variances=need("gmm.variances"),
        trace=np.asarray([float(v) for v in gm["trace"]]),
        var_floor=float(gm["var_floor"]),
        n_iter=int(gm["n_iter"]), converged=bool(gm["converged"]),
    )
    return SubStyleModel(
        k=k, stats=stats, counts=counts, ica=ica, gmm=gmm,
        level=int(manifest["level"]),
        provenance=tuple(manifest.get("provenance", [])),
        seed=int(manifest.get("seed", 0)),
        preprocess=manifest.get("preprocess", "rgb01"),
    )
