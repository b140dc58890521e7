"""Triplet embeddings for located feature vectors (one row per entity, e.g. a country).

Neighbors are the ``k`` nearest entities by great-circle distance; distant
entities are drawn from everything else.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .encoder import MLPConfig, embed_array, init_mlp
from .errors import ConfigError, FormatError
from .evaluation import EmbeddingTable, ModelSpec, cross_validate
from .training import TrainConfig, fit_triplets

EARTH_RADIUS_KM = 6371.0088


@dataclass(eq=False)
class PointDataset:
    ids: list
    lat: np.ndarray
    lon: np.ndarray
    features: np.ndarray
    feature_names: list
    imputed: int = 0

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=float)
        self.lon = np.asarray(self.lon, dtype=float)
        self.features = np.asarray(self.features, dtype=float).reshape(len(self.ids), len(self.feature_names))
        if len(set(self.ids)) != len(self.ids):
            raise ConfigError("point ids must be unique")
        if (np.abs(self.lat) > 90).any() or (np.abs(self.lon) > 180).any():
            raise ConfigError("latitude must lie in [-90, 90] and longitude in [-180, 180]")

    def __len__(self):
        return len(self.ids)

    def columns(self, names) -> np.ndarray:
        pos = {n: j for j, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise ConfigError(f"unknown feature names: {missing}")
        return self.features[:, [pos[n] for n in names]]

    def locations(self) -> np.ndarray:
        return np.column_stack([self.lat, self.lon])


@dataclass(frozen=True)
class IndexSpec:
    names: tuple
    signs: tuple

    def __post_init__(self):
        if len(self.names) != len(self.signs):
            raise ConfigError("one sign per health feature is required")
        if any(s not in (1, -1) for s in self.signs):
            raise ConfigError("signs must be +1 or -1")


@dataclass(frozen=True)
class PointTriplet:
    anchor: int
    neighbor: int
    distant: int


def load_points(path) -> PointDataset:
    """Read a point CSV; empty cells are imputed with their column median."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["id", "lat", "lon"]:
        raise FormatError(f"{path}: header must start with id,lat,lon")
    names = rows[0][3:]
    ids, lat, lon, feats = [], [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(rows[0]):
            raise FormatError(f"{path} line {lineno}: expected {len(rows[0])} fields, got {len(row)}")
        ids.append(row[0])
        try:
            lat.append(float(row[1]))
            lon.append(float(row[2]))
            feats.append([float(v) if v.strip() else np.nan for v in row[3:]])
        except ValueError:
            raise FormatError(f"{path} line {lineno}: non-numeric value") from None
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise FormatError(f"{path}: duplicate ids {dup}")
    x = np.array(feats, dtype=float).reshape(len(ids), len(names))
    missing = np.isnan(x)
    if missing.any():
        medians = np.nanmedian(np.where(missing.all(0), 0.0, x), axis=0)
        x = np.where(missing, medians, x)
    return PointDataset(ids, lat, lon, x, names, int(missing.sum()))


def write_points(data: PointDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon", *data.feature_names])
        for i, rid in enumerate(data.ids):
            w.writerow([rid, repr(float(data.lat[i])), repr(float(data.lon[i]))] + [repr(float(v)) for v in data.features[i]])


def load_index_spec(path) -> IndexSpec:
    names, signs = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, sign = line.rpartition(",")
            try:
                signs.append(int(sign))
            except ValueError:
                raise FormatError(f"{path} line {lineno}: sign must be +1 or -1") from None
            names.append(name)
    return IndexSpec(tuple(names), tuple(signs))


def great_circle(lat1, lon1, lat2, lon2):
    """Haversine distance in kilometres; broadcasts over array inputs."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def distance_matrix(data: PointDataset) -> np.ndarray:
    return great_circle(data.lat[:, None], data.lon[:, None], data.lat[None, :], data.lon[None, :])


def nearest_sets(data: PointDataset, k: int) -> np.ndarray:
    """``(n, k)`` indices of each row's k nearest others; equal distances go to the lower index."""
    d = distance_matrix(data)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def sample_point_triplets(data: PointDataset, n: int, k: int = 5, seed: int = 0) -> list[PointTriplet]:
    rows = len(data)
    if rows < k + 2:
        raise ConfigError(f"need at least k+2={k + 2} points, got {rows}")
    if n == 0:
        return []
    near = nearest_sets(data, k)
    out = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        a = int(rng.integers(rows))
        nb = int(near[a, rng.integers(k)])
        far = np.setdiff1d(np.arange(rows), np.append(near[a], a))
        d = int(far[rng.integers(len(far))])
        out.append(PointTriplet(a, nb, d))
    return out


def zscore(x):
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0)
    return (x - x.mean(axis=0)) / np.where(sd > 0, sd, 1.0), sd


def health_index(data: PointDataset, spec: IndexSpec) -> np.ndarray:
    """Mean of sign-aligned z-scores of the health columns.

    Columns with zero variance are dropped with a warning; if none remain
    the index is 0 everywhere.
    """
    cols = data.columns(spec.names)
    z, sd = zscore(cols)
    keep = sd > 0
    if not keep.all():
        dropped = [n for n, k in zip(spec.names, keep) if not k]
        warnings.warn(f"zero-variance health features excluded: {dropped}")
    if not keep.any():
        return np.zeros(len(data))
    signs = np.asarray(spec.signs, dtype=float)
    return (z[:, keep] * signs[keep]).mean(axis=1)


def non_health_names(data: PointDataset, spec: IndexSpec) -> list:
    held = set(spec.names)
    return [n for n in data.feature_names if n not in held]


def train_point_encoder(features, triplets, hidden_dim=32, d=10, train_config: TrainConfig | None = None,
                        init_seed=None, log=None):
    """Train the one-hidden-layer encoder on triplets of rows of ``features``.

    ``features`` should already be standardized per column. Returns
    ``(params, config, report)``.
    """
    train_config = train_config or TrainConfig(margin=1.0, epochs=50, batch_size=50)
    features = np.asarray(features, dtype=float)
    config = MLPConfig(features.shape[1], hidden_dim, d, train_config.seed if init_seed is None else init_seed)
    params = init_mlp(config.in_dim, hidden_dim, d, config.init_seed)
    idx = np.array([[t.anchor, t.neighbor, t.distant] for t in triplets], dtype=np.int64).reshape(-1, 3)

    def fetch(batch):
        return features[idx[batch]]

    params, report = fit_triplets(fetch, len(idx), config, train_config, params=params, log=log)
    return params, config, report


def _tuned(table, kind, grid, folds, trials, seed):
    """Best grid value by mean cross-validated r2, with the report at that value."""
    best = None
    for value in grid:
        spec = ModelSpec(kind, k=value) if kind == "knn_reg" else ModelSpec(kind, alpha=value)
        rep = cross_validate(table, spec, folds, trials, seed)
        if best is None or rep.mean > best[1].mean:
            best = (value, rep)
    value, rep = best
    rep.config["grid"] = list(grid)
    rep.config["selected"] = value
    return rep


KNN_GRID = (1, 2, 3, 5, 7, 10, 15)
RIDGE_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)


def evaluate_point_embeddings(data: PointDataset, params, config: MLPConfig, spec: IndexSpec, folds=3, trials=10,
                              seed=0, knn_grid=KNN_GRID, ridge_grid=RIDGE_GRID) -> dict:
    """Cross-validated r2 of the health index from three feature sets.

    Feature sets are the learned embeddings, the standardized non-health
    features and raw (lat, lon). Each goes through kNN regression and ridge
    regression with the hyperparameter picked by mean r2 over its grid.
    Returns ``{(feature_set, model): RegressionReport}``.
    """
    target = health_index(data, spec)
    raw, _ = zscore(data.columns(non_health_names(data, spec)))
    sets = {
        "embedding": embed_array(params, config, raw),
        "non_health": raw,
        "locations": data.locations(),
    }
    n = len(data)
    reports = {}
    for name, x in sets.items():
        table = EmbeddingTable(data.ids, np.zeros((n, 2)), x, None, target)
        reports[(name, "knn")] = _tuned(table, "knn_reg", knn_grid, folds, trials, seed)
        reports[(name, "ridge")] = _tuned(table, "ridge", ridge_grid, folds, trials, seed)
        for key in ((name, "knn"), (name, "ridge")):
            reports[key].config["dim"] = x.shape[1]
    return reports


def generate_points(n=100, n_other=20, n_health=13, n_fields=4, noise=0.3, seed=0):
    """Synthetic located dataset whose features are noisy mixtures of smooth spatial fields.

    Returns ``(PointDataset, IndexSpec)``. The health features load on the
    same fields as the others, so the health index varies smoothly (and
    nonlinearly) with location.
    """
    rng = np.random.default_rng(seed)
    lat = np.degrees(np.arcsin(rng.uniform(-0.9, 0.9, n)))
    lon = rng.uniform(-180, 180, n)
    # smooth fields on the sphere: random low-frequency sinusoids of the unit vector
    xyz = np.column_stack([
        np.cos(np.radians(lat)) * np.cos(np.radians(lon)),
        np.cos(np.radians(lat)) * np.sin(np.radians(lon)),
        np.sin(np.radians(lat)),
    ])
    freq = rng.normal(0, 2.0, size=(n_fields, 3))
    phase = rng.uniform(0, 2 * np.pi, n_fields)
    fields = np.sin(xyz @ freq.T + phase)
    other = fields @ rng.normal(size=(n_fields, n_other)) + noise * rng.normal(size=(n, n_other))
    health = fields @ rng.normal(size=(n_fields, n_health)) + noise * rng.normal(size=(n, n_health))
    health_names = [f"health{j}" for j in range(n_health)]
    names = [f"feat{j}" for j in range(n_other)] + health_names
    data = PointDataset([f"p{i}" for i in range(n)], lat, lon, np.hstack([other, health]), names)
    return data, IndexSpec(tuple(health_names), tuple([1] * n_health))
