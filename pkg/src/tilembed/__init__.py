"""Self-supervised tile embeddings for multi-band rasters and located feature tables.

Submodules: ``raster`` (grids, tiles, synthetic landscapes), ``sampler``
(triplet sampling and manifests), ``encoder`` (numpy conv net and MLP),
``losses``, ``training``, ``evaluation``, ``latent`` (queries) and
``pointvec`` (point-table mode). ``cli`` ties them together.
"""

__version__ = "0.1.0"
