"""Downstream evaluation of embeddings: classifiers, pixel baselines, ridge, cross-validation."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .encoder import embed_array
from .errors import ConfigError, FormatError, ShapeError
from .losses import cross_entropy
from .raster import UNLABELED, LabelGrid, RasterGrid, extract_tiles

NO_LABEL = -1


@dataclass(eq=False)
class EmbeddingTable:
    """Rows of ``(id, origin, embedding, label, target)``.

    Absent labels are :data:`NO_LABEL`, absent targets are NaN.
    """

    ids: list
    origins: np.ndarray
    embeddings: np.ndarray
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        n = len(self.ids)
        emb = np.asarray(self.embeddings, dtype=np.float64)
        self.embeddings = emb.reshape(n, -1) if n else emb.reshape(0, emb.shape[-1] if emb.ndim == 2 else 0)
        self.origins = np.asarray(self.origins, dtype=np.int64).reshape(n, 2)
        self.labels = np.full(n, NO_LABEL, np.int64) if self.labels is None else np.asarray(self.labels, np.int64)
        self.targets = np.full(n, np.nan) if self.targets is None else np.asarray(self.targets, np.float64)
        if len(set(self.ids)) != n:
            raise ConfigError("embedding table ids must be unique")
        if len(self.labels) != n or len(self.targets) != n:
            raise ShapeError("labels and targets must have one entry per row")

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.embeddings.shape[1]

    def subset(self, idx) -> "EmbeddingTable":
        idx = np.asarray(idx, dtype=np.int64)
        return EmbeddingTable(
            [self.ids[i] for i in idx], self.origins[idx], self.embeddings[idx], self.labels[idx], self.targets[idx]
        )

    def labeled(self) -> "EmbeddingTable":
        return self.subset(np.flatnonzero(self.labels != NO_LABEL))

    def with_embeddings(self, embeddings) -> "EmbeddingTable":
        return EmbeddingTable(self.ids, self.origins, embeddings, self.labels, self.targets)


def write_table(table: EmbeddingTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x", "y", "label", "target"] + [f"e{j}" for j in range(table.dim)])
        for i in range(len(table)):
            label = "" if table.labels[i] == NO_LABEL else int(table.labels[i])
            target = "" if math.isnan(table.targets[i]) else repr(float(table.targets[i]))
            w.writerow([table.ids[i], *table.origins[i].tolist(), label, target] + [repr(float(v)) for v in table.embeddings[i]])


def read_table(path) -> EmbeddingTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:5] != ["id", "x", "y", "label", "target"]:
        raise FormatError(f"{path}: expected header id,x,y,label,target,e0..")
    d = len(rows[0]) - 5
    body = [r for r in rows[1:] if r]
    for lineno, r in enumerate(body, start=2):
        if len(r) != d + 5:
            raise FormatError(f"{path} line {lineno}: expected {d + 5} fields, got {len(r)}")
    try:
        ids = [r[0] for r in body]
        origins = np.array([[int(r[1]), int(r[2])] for r in body], dtype=np.int64).reshape(-1, 2)
        labels = np.array([int(r[3]) if r[3] else NO_LABEL for r in body], dtype=np.int64)
        targets = np.array([float(r[4]) if r[4] else np.nan for r in body])
        emb = np.array([[float(v) for v in r[5:]] for r in body]).reshape(len(body), d)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric field ({exc})") from None
    return EmbeddingTable(ids, origins, emb, labels, targets)


@dataclass
class EvalReport:
    metric: str
    values: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def std(self):
        return float(np.std(self.values))

    def summary(self):
        return f"{self.metric}: {self.mean:.4f} +/- {self.std:.4f} over {len(self.values)} values"


@dataclass
class RegressionReport(EvalReport):
    metric: str = "r2"
    coef_norms: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# metrics


def accuracy(pred, true) -> float:
    """Fraction of matching entries; rows with ``true == NO_LABEL`` are ignored."""
    pred, true = np.asarray(pred), np.asarray(true)
    keep = true != NO_LABEL
    if not keep.any():
        raise ConfigError("no labeled rows to score")
    return float((pred[keep] == true[keep]).mean())


def r2(pred, true) -> float:
    """Coefficient of determination against the mean of ``true``; NaN targets are ignored."""
    pred, true = np.asarray(pred, dtype=float), np.asarray(true, dtype=float)
    keep = ~np.isnan(true)
    pred, true = pred[keep], true[keep]
    ss_res = ((true - pred) ** 2).sum()
    ss_tot = ((true - true.mean()) ** 2).sum()
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return float(1.0 - ss_res / ss_tot)


def sq_distances(a, b):
    """Pairwise squared Euclidean distances, clipped at zero (fast expansion)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    d = (a ** 2).sum(1)[:, None] + (b ** 2).sum(1)[None, :] - 2 * a @ b.T
    return np.maximum(d, 0.0)


def pairwise_distances(a, b, chunk=256):
    """Pairwise Euclidean distances from explicit differences, in row chunks."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    out = np.empty((len(a), len(b)))
    for i in range(0, len(a), chunk):
        diff = a[i:i + chunk, None, :] - b[None, :, :]
        out[i:i + chunk] = np.sqrt((diff ** 2).sum(-1))
    return out


# ---------------------------------------------------------------------------
# classifiers


def _labels_of(table):
    if (table.labels == NO_LABEL).any():
        raise ConfigError("all rows must be labeled; call .labeled() first")
    return table.labels


def knn_predict(train_x, train_y, test_x, k):
    """Brute-force k-nearest-neighbor vote.

    Ties in vote count go to the class with the smaller summed distance among
    its voters, then to the lowest class id.
    """
    n = len(train_x)
    if k < 1 or k > n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    train_y = np.asarray(train_y)
    dist = pairwise_distances(test_x, train_x)
    # stable sort keeps lower train index first among equal distances
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
    out = np.empty(len(test_x), dtype=np.int64)
    for i, row in enumerate(nn):
        votes = {}
        for j in row:
            c = int(train_y[j])
            cnt, tot = votes.get(c, (0, 0.0))
            votes[c] = (cnt + 1, tot + dist[i, j])
        out[i] = min(votes, key=lambda c: (-votes[c][0], votes[c][1], c))
    return out


def knn_regress(train_x, train_y, test_x, k):
    n = len(train_x)
    if k < 1 or k > n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    dist = pairwise_distances(test_x, train_x)
    nn = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return np.asarray(train_y, dtype=float)[nn].mean(1)


def knn_classify(train: EmbeddingTable, test: EmbeddingTable, k: int = 5) -> EvalReport:
    pred = knn_predict(train.embeddings, _labels_of(train), test.embeddings, k)
    return EvalReport("accuracy", [accuracy(pred, test.labels)], {"model": "knn", "k": k})


def nearest_centroid_predict(train_x, train_y, test_x):
    classes = np.unique(train_y)
    centroids = np.stack([train_x[train_y == c].mean(0) for c in classes])
    # argmin returns the first minimum, i.e. the lowest class id on ties
    return classes[np.argmin(pairwise_distances(test_x, centroids), axis=1)]


def nearest_centroid(train: EmbeddingTable, test: EmbeddingTable) -> EvalReport:
    pred = nearest_centroid_predict(train.embeddings, _labels_of(train), test.embeddings)
    return EvalReport("accuracy", [accuracy(pred, test.labels)], {"model": "centroid"})


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # (K, d)
    bias: np.ndarray  # (K,)
    classes: np.ndarray
    iterations: int = 0
    grad_norm: float = float("nan")

    def predict(self, x):
        return self.classes[np.argmax(np.asarray(x) @ self.weights.T + self.bias, axis=1)]


def logistic_objective(w, b, x, y, l2):
    """Mean cross-entropy plus ``l2 / 2 * |W|^2`` (bias unpenalized) and its gradient."""
    loss, dlog = cross_entropy(x @ w.T + b, y)
    loss += 0.5 * l2 * float((w ** 2).sum())
    return loss, dlog.T @ x + l2 * w, dlog.sum(0)


def fit_logistic(x, y, l2_strength=1e-4, max_iters=500, tol=1e-6) -> SoftmaxModel:
    """Multinomial logistic regression by full-batch gradient descent with Armijo backtracking."""
    x = np.asarray(x, dtype=float)
    if not np.isfinite(x).all():
        raise ConfigError("features contain non-finite values")
    classes, yi = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise ConfigError("logistic regression needs at least 2 classes")
    w = np.zeros((len(classes), x.shape[1]))
    b = np.zeros(len(classes))
    loss, gw, gb = logistic_objective(w, b, x, yi, l2_strength)
    step = 1.0
    it = 0
    gnorm = math.sqrt(float((gw ** 2).sum() + (gb ** 2).sum()))
    for it in range(1, max_iters + 1):
        if gnorm < tol:
            it -= 1
            break
        g2 = gnorm ** 2
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, ngw, ngb = logistic_objective(w_new, b_new, x, yi, l2_strength)
            if new_loss <= loss - 0.5 * step * g2 or step < 1e-12:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, new_loss, ngw, ngb
        gnorm = math.sqrt(float((gw ** 2).sum() + (gb ** 2).sum()))
        step *= 2.0
    return SoftmaxModel(w, b, classes, it, gnorm)


def logistic_regression(train: EmbeddingTable, test: EmbeddingTable, l2_strength=1e-4, max_iters=500,
                        tol=1e-6) -> EvalReport:
    model = fit_logistic(train.embeddings, _labels_of(train), l2_strength, max_iters, tol)
    acc = accuracy(model.predict(test.embeddings), test.labels)
    return EvalReport("accuracy", [acc], {"model": "logreg", "l2_strength": l2_strength, "max_iters": max_iters,
                                          "tol": tol, "iterations": model.iterations})


# ---------------------------------------------------------------------------
# pixel-space baselines


def _flatten_tiles(tiles):
    if isinstance(tiles, np.ndarray):
        return tiles.reshape(len(tiles), -1).astype(float), np.zeros((len(tiles), 2), np.int64)
    tiles = list(tiles)
    x = np.stack([t.samples.ravel() for t in tiles]).astype(float)
    return x, np.array([t.origin for t in tiles], dtype=np.int64).reshape(-1, 2)


@dataclass
class PCA:
    mean: np.ndarray
    components: np.ndarray  # (k, p), orthonormal rows
    explained_variance: np.ndarray

    def transform(self, x):
        return (np.asarray(x, dtype=float) - self.mean) @ self.components.T


def fit_pca(x, n_components) -> PCA:
    """Top principal directions from an eigendecomposition of the sample covariance.

    When there are fewer rows than columns the equivalent Gram matrix is
    decomposed instead. Each component is signed so its largest-magnitude
    entry is positive.
    """
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    if n_components > p:
        raise ConfigError(f"n_components={n_components} exceeds feature dim {p}")
    if n < n_components:
        raise ConfigError(f"need at least {n_components} samples, got {n}")
    mean = x.mean(0)
    xc = x - mean
    denom = max(n - 1, 1)
    if p <= n:
        vals, vecs = np.linalg.eigh(xc.T @ xc / denom)
        order = np.argsort(vals)[::-1][:n_components]
        vals, comps = vals[order], vecs[:, order].T
    else:
        vals, u = np.linalg.eigh(xc @ xc.T / denom)
        order = np.argsort(vals)[::-1][:n_components]
        vals, u = vals[order], u[:, order]
        comps = (xc.T @ u).T
        comps /= np.maximum(np.linalg.norm(comps, axis=1, keepdims=True), 1e-300)
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(1)])
    signs[signs == 0] = 1
    return PCA(mean, comps * signs[:, None], np.maximum(vals, 0.0))


def pca_features(tiles, n_components=10, fit_sample=10000, seed=0) -> EmbeddingTable:
    x, origins = _flatten_tiles(tiles)
    rng = np.random.default_rng(seed)
    fit_idx = rng.choice(len(x), size=min(fit_sample, len(x)), replace=False)
    model = fit_pca(x[np.sort(fit_idx)], n_components)
    return EmbeddingTable(list(range(len(x))), origins, model.transform(x))


@dataclass
class KMeans:
    centroids: np.ndarray
    assignments: np.ndarray
    inertia_history: list

    def transform(self, x):
        return pairwise_distances(x, self.centroids)


def fit_kmeans(x, k, iters=100, seed=0) -> KMeans:
    """Lloyd's algorithm from ``k`` distinct random points.

    An emptied cluster is re-seeded at the point farthest from its assigned centroid.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if k < 1 or k > n:
        raise ConfigError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=k, replace=False)].copy()
    history = []
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max(iters, 1)):
        d = sq_distances(x, centroids)
        assign = d.argmin(1)
        own = d[np.arange(n), assign]
        history.append(float(own.sum()))
        new = centroids.copy()
        for c in range(k):
            members = assign == c
            if members.any():
                new[c] = x[members].mean(0)
            else:
                far = int(own.argmax())
                new[c] = x[far]
                own[far] = -1.0
        if np.array_equal(new, centroids):
            break
        centroids = new
    d = sq_distances(x, centroids)
    assign = d.argmin(1)
    history.append(float(d[np.arange(n), assign].sum()))
    return KMeans(centroids, assign, history)


def kmeans_features(tiles, k=10, iters=100, seed=0) -> EmbeddingTable:
    x, origins = _flatten_tiles(tiles)
    model = fit_kmeans(x, k, iters, seed)
    return EmbeddingTable(list(range(len(x))), origins, model.transform(x))


# ---------------------------------------------------------------------------
# ridge


def ridge_regression(x, y, alpha=1.0, fit_intercept=True):
    """Closed-form ridge weights and intercept; the intercept is not penalized.

    With ``fit_intercept=False`` the raw normal equations ``(X'X + aI) w = X'y``
    are solved and the intercept is 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if alpha < 0:
        raise ConfigError("alpha must be >= 0")
    if len(x) < 1 or len(x) != len(y):
        raise ShapeError("need matching, non-empty X and y")
    if fit_intercept:
        xm, ym = x.mean(0), y.mean()
        xc, yc = x - xm, y - ym
    else:
        xc, yc = x, y
    gram = xc.T @ xc + alpha * np.eye(x.shape[1])
    if alpha == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError("singular normal equations at alpha=0; use alpha > 0")
    w = np.linalg.solve(gram, xc.T @ yc)
    intercept = float(ym - xm @ w) if fit_intercept else 0.0
    return w, intercept


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class ModelSpec:
    """Estimator choice for :func:`cross_validate`.

    ``kind`` is one of ``logreg``, ``knn``, ``centroid`` (classifiers) or
    ``ridge``, ``knn_reg`` (regressors).
    """

    kind: str = "logreg"
    k: int = 5
    alpha: float = 1.0
    l2_strength: float = 1e-4
    max_iters: int = 500
    tol: float = 1e-6

    @property
    def is_regressor(self):
        return self.kind in ("ridge", "knn_reg")


def fold_assignments(n, folds, rng, strata=None):
    """Fold id per row; sizes differ by at most one and strata are spread round-robin."""
    if folds < 2 or folds > n:
        raise ConfigError(f"folds must lie in [2, {n}], got {folds}")
    order = rng.permutation(n)
    if strata is not None:
        order = order[np.argsort(np.asarray(strata)[order], kind="stable")]
    out = np.empty(n, dtype=np.int64)
    out[order] = np.arange(n) % folds
    return out


def fit_predict(spec: ModelSpec, x_tr, y_tr, x_te):
    if spec.kind == "logreg":
        return fit_logistic(x_tr, y_tr, spec.l2_strength, spec.max_iters, spec.tol).predict(x_te), None
    if spec.kind == "knn":
        return knn_predict(x_tr, y_tr, x_te, min(spec.k, len(x_tr))), None
    if spec.kind == "centroid":
        return nearest_centroid_predict(x_tr, y_tr, x_te), None
    if spec.kind == "ridge":
        w, b = ridge_regression(x_tr, y_tr, spec.alpha)
        return x_te @ w + b, float(np.linalg.norm(w))
    if spec.kind == "knn_reg":
        return knn_regress(x_tr, y_tr, x_te, min(spec.k, len(x_tr))), None
    raise ConfigError(f"unknown model kind {spec.kind!r}")


def cross_validate(table: EmbeddingTable, model: ModelSpec, folds=5, trials=10, seed=0):
    """Repeated k-fold cross-validation; classification folds are stratified by label.

    Returns an :class:`EvalReport` of per-fold accuracies or a
    :class:`RegressionReport` of per-fold r2 values, ordered by (trial, fold).
    """
    x = table.embeddings
    if model.is_regressor:
        keep = ~np.isnan(table.targets)
        y = table.targets
    else:
        keep = table.labels != NO_LABEL
        y = table.labels
    idx_all = np.flatnonzero(keep)
    x, y = x[idx_all], y[idx_all]
    n = len(idx_all)
    values, norms = [], []
    warned = False
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        assign = fold_assignments(n, folds, rng, None if model.is_regressor else y)
        for f in range(folds):
            te, tr = assign == f, assign != f
            if not model.is_regressor and not warned and len(np.unique(y[tr])) < len(np.unique(y)):
                warnings.warn("a class is absent from a training fold; stratification could not cover it")
                warned = True
            pred, coef_norm = fit_predict(model, x[tr], y[tr], x[te])
            if model.is_regressor:
                values.append(r2(pred, y[te]))
                if coef_norm is not None:
                    norms.append(coef_norm)
            else:
                values.append(accuracy(pred, y[te]))
    config = {"model": model.kind, "folds": folds, "trials": trials, "seed": seed}
    if model.kind in ("knn", "knn_reg"):
        config["k"] = model.k
    if model.kind == "ridge":
        config["alpha"] = model.alpha
    if model.kind == "logreg":
        config.update(l2_strength=model.l2_strength, max_iters=model.max_iters, tol=model.tol)
    if model.is_regressor:
        return RegressionReport("r2", values, config, norms)
    return EvalReport("accuracy", values, config)


# ---------------------------------------------------------------------------
# tile labelling and cluster-averaged embeddings


def grid_origins(width, height, s, stride=None):
    """Top-left origins of a regular tiling with the given stride (default ``s``)."""
    stride = stride or s
    xs = np.arange(0, width - s + 1, stride)
    ys = np.arange(0, height - s + 1, stride)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def label_tiles(origins, labels: LabelGrid, s, purity=None) -> np.ndarray:
    """Modal class of each tile window, :data:`NO_LABEL` where unlabeled or impure.

    ``origins`` may be an ``(n, 2)`` array, a triplet set (its anchors are
    used) or a :class:`RasterGrid` (tiled at stride ``s``).
    """
    if isinstance(origins, RasterGrid):
        origins = grid_origins(origins.width, origins.height, s)
    elif hasattr(origins, "origins") and hasattr(origins, "spec"):
        origins = origins.origins[:, :2]
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    out = np.full(len(origins), NO_LABEL, np.int64)
    if not len(origins):
        return out
    windows = np.lib.stride_tricks.sliding_window_view(labels.classes, (s, s))
    for i, (x, y) in enumerate(origins):
        win = windows[y, x].ravel()
        win = win[win != UNLABELED]
        if not win.size:
            continue
        counts = np.bincount(win)
        mode = int(counts.argmax())
        if purity is None or counts[mode] / (s * s) > purity:
            out[i] = mode
    return out


def cluster_average_embeddings(grid: RasterGrid, params, enc_config, stats, centers, patch=75,
                               samples_per_center=10, s=None, seed=0, ids=None, targets=None) -> EmbeddingTable:
    """Mean embedding of tiles drawn uniformly from a ``patch``-pixel window around each center.

    The window is clipped to the raster. Centers whose clipped window cannot
    hold one tile are skipped with a warning and listed in ``table.skipped``.
    """
    s = s or enc_config.tile_size
    if patch < s:
        raise ConfigError(f"patch ({patch}) must be >= tile size ({s})")
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    ids = list(range(len(centers))) if ids is None else list(ids)
    targets = np.full(len(centers), np.nan) if targets is None else np.asarray(targets, dtype=float)
    kept, embs, skipped = [], [], []
    for i, (cx, cy) in enumerate(centers):
        x0, y0 = cx - patch // 2, cy - patch // 2
        xlo, ylo = max(0, x0), max(0, y0)
        xhi = min(grid.width, x0 + patch) - s
        yhi = min(grid.height, y0 + patch) - s
        if not (0 <= cx < grid.width and 0 <= cy < grid.height) or xhi < xlo or yhi < ylo:
            skipped.append(str(ids[i]))
            continue
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        origins = np.column_stack([
            rng.integers(xlo, xhi + 1, samples_per_center),
            rng.integers(ylo, yhi + 1, samples_per_center),
        ])
        z = embed_array(params, enc_config, extract_tiles(grid, origins, s), stats)
        embs.append(z.mean(0))
        kept.append(i)
    if skipped:
        warnings.warn(f"skipped {len(skipped)} centers whose patch lies outside the raster: {skipped}")
    d = enc_config.embed_dim
    table = EmbeddingTable(
        [ids[i] for i in kept], centers[kept], np.array(embs).reshape(len(kept), d), None, targets[kept]
    )
    table.skipped = skipped
    return table


def embed_tiles(grid: RasterGrid, params, enc_config, stats, origins, labels=None, purity=None) -> EmbeddingTable:
    """Embedding table for tiles at ``origins``, labeled from ``labels`` when given."""
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    s = enc_config.tile_size
    z = embed_array(params, enc_config, extract_tiles(grid, origins, s), stats)
    lab = label_tiles(origins, labels, s, purity) if labels is not None else None
    return EmbeddingTable(list(range(len(origins))), origins, z, lab)


# ---------------------------------------------------------------------------
# report output


def format_table(headers, rows) -> str:
    cells = [[str(h) for h in headers]] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[j]) for r in cells) for j in range(len(headers))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def reports_table(named_reports) -> str:
    rows = [(name, r.metric, f"{r.mean:.4f}", f"{r.std:.4f}", len(r.values)) for name, r in named_reports]
    return format_table(["name", "metric", "mean", "std", "n"], rows)


def write_reports_csv(named_reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "metric", "mean", "std", "values", "config"])
        for name, r in named_reports:
            cfg = ";".join(f"{k}={v}" for k, v in sorted(r.config.items()))
            w.writerow([name, r.metric, repr(r.mean), repr(r.std), " ".join(repr(float(v)) for v in r.values), cfg])


