"""Land-cover walkthrough: learn tile embeddings without labels, then classify with few labels.

Run with ``python demos/landcover_walkthrough.py``; it takes about a minute on a laptop CPU.
"""

import numpy as np

from tilembed.encoder import EncoderConfig, init_encoder
from tilembed.evaluation import (
    ModelSpec,
    cross_validate,
    embed_tiles,
    format_table,
    kmeans_features,
    pca_features,
)
from tilembed.latent import analogy, nearest
from tilembed.raster import SyntheticSpec, equidistant_spectra, extract_tiles, generate_synthetic, normalize_stats
from tilembed.sampler import TripletSpec, sample_triplets
from tilembed.training import TrainConfig, train

# A 256x256 four-band scene of Voronoi fields. Five land-cover classes sit at
# equal spectral distance from one another, and per-pixel noise is half that
# distance, so single pixels are ambiguous while whole tiles are not.
spectra = equidistant_spectra(5, 4, gap=0.5)
scene = SyntheticSpec(256, 256, 4, 5, region_seeds=24, class_spectra=spectra, noise_sigma=0.25)
grid, labels = generate_synthetic(scene, seed=0)
stats = normalize_stats(grid, 10000, seed=0)
print(f"scene: {grid.width}x{grid.height}, {grid.bands} bands")

# Triplets need no labels: a neighbor is any tile whose center lies within 24
# pixels of the anchor's (on both axes), a distant tile is anything else.
tset = sample_triplets(grid, TripletSpec(count=1000, tile_size=16, neighborhood=24, seed=0))
print(f"sampled {len(tset)} triplets")

cfg = EncoderConfig(tile_size=16, bands=4, embed_dim=16)
params, report = train(tset, cfg, TrainConfig(epochs=5, seed=0), stats)
print("mean triplet loss per epoch:", " ".join(f"{v:.2f}" for v in report.mean_loss))

# Embed 600 random tiles and attach the modal class of each as its label.
rng = np.random.default_rng(1)
origins = np.column_stack([rng.integers(0, 241, 600), rng.integers(0, 241, 600)])
learned = embed_tiles(grid, params, cfg, stats, origins, labels)
untrained = embed_tiles(grid, init_encoder(cfg), cfg, stats, origins, labels)

# Baselines on raw pixels: the top principal components, and distances to k-means centroids.
tiles = extract_tiles(grid, origins, 16)
pca = learned.with_embeddings(pca_features(tiles, n_components=16).embeddings)
kmeans = learned.with_embeddings(kmeans_features(tiles, k=16).embeddings)

# Five-fold logistic regression on each feature set. The scene is clean enough
# that pixel baselines do well too; the gap between trained and untrained
# encoders is what the triplet objective adds.
rows = []
for name, table in [("triplet encoder", learned), ("untrained encoder", untrained), ("pixel PCA", pca),
                    ("pixel k-means", kmeans)]:
    rep = cross_validate(table, ModelSpec("logreg"), folds=5, trials=2, seed=0)
    rows.append((name, f"{rep.mean:.3f}", f"{rep.std:.3f}"))
print()
print(format_table(["features", "accuracy", "std"], rows))

# The embedding space supports simple arithmetic. Adding and subtracting the
# same vector is a no-op, so the analogy query below returns the anchor's neighbors.
z = learned.embeddings
print()
print("nearest tiles to tile 0:")
print(nearest(learned, z[0], k=3).to_text())
print("tile 0 + tile 5 - tile 5:")
print(nearest(learned, analogy(z[0], z[5], z[5]), k=3).to_text())
