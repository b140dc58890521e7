"""Command-line interface: ``tilembed <subcommand> [flags]``.

Every run writes ``<out>/<subcommand>.config.json`` with the effective flag
values. Exit codes: 0 ok, 2 usage or configuration, 3 data (file format,
bounds, coverage, stale manifest), 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import errors
from .encoder import Block, EncoderConfig, MLPConfig, embed_array, load_params, save_params
from .evaluation import (
    EmbeddingTable,
    ModelSpec,
    cluster_average_embeddings,
    cross_validate,
    embed_tiles,
    format_table,
    grid_origins,
    label_tiles,
    knn_classify,
    logistic_regression,
    nearest_centroid,
    read_table,
    reports_table,
    write_reports_csv,
    write_table,
)
from .latent import analogy, interpolation_neighbors, nearest
from .pointvec import (
    PointTriplet,
    evaluate_point_embeddings,
    generate_points,
    load_index_spec,
    load_points,
    non_health_names,
    sample_point_triplets,
    train_point_encoder,
    write_points,
    zscore,
)
from .raster import (
    SyntheticSpec,
    equidistant_spectra,
    extract_tiles,
    generate_synthetic,
    load_labels,
    load_raster,
    normalize_stats,
    save_labels,
    save_raster,
)
from .sampler import TripletSpec, read_manifest, sample_triplets, write_manifest
from .training import TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# flag helpers


def _neighborhood(text):
    if text.lower() == "none":
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'none', got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _neighborhood_list(text):
    return [_neighborhood(v) for v in text.split(",") if v]


def _id_list(text):
    return [v for v in text.split(",") if v]


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--workers", type=int, default=1, help="sampling threads; outputs do not depend on it")


def _train_flags(p, margin=50.0, epochs=50, embed_dim=32):
    p.add_argument("--margin", type=float, default=margin)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.5)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--aug", choices=("off", "shuffle", "full"), default="shuffle")
    p.add_argument("--embed-dim", type=int, default=embed_dim)


def _encoder_flags(p):
    p.add_argument("--channels", type=_int_list, default=[16, 32, 64], help="output channels per conv block")
    p.add_argument("--residual", action="store_true", help="add a residual conv block after each pooling block")
    p.add_argument("--stats-samples", type=int, default=10000, help="pixels drawn for band statistics")


def _train_config(a):
    return TrainConfig(margin=a.margin, lam=a.lam, epochs=a.epochs, batch_size=a.batch, learning_rate=a.lr,
                       beta1=a.beta1, beta2=a.beta2, augmentation=a.aug, seed=a.seed)


def _encoder_config(a, tile_size, bands):
    blocks = []
    for c in a.channels:
        blocks.append(Block(c))
        if a.residual:
            blocks.append(Block(c, residual=True, pool=False))
    return EncoderConfig(tile_size=tile_size, bands=bands, blocks=tuple(blocks), embed_dim=a.embed_dim,
                         init_seed=a.seed)


def build_parser():
    parser = _Parser(prog="tilembed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic Voronoi raster, its labels and band stats")
    _common(p)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--regions", type=int, default=64, help="number of Voronoi sites")
    p.add_argument("--spectra", choices=("random", "equidistant"), default="random")
    p.add_argument("--gap", type=float, default=0.5, help="pairwise spectral distance for --spectra equidistant")
    p.add_argument("--noise", type=float, default=0.1, help="noise sd; see also --noise-gap")
    p.add_argument("--noise-gap", type=float, default=None,
                   help="set the noise sd to this multiple of the smallest class spectral gap")
    p.add_argument("--smooth", type=float, default=32.0, help="illumination blur sd in pixels (0 disables)")
    p.add_argument("--illumination", type=float, default=0.25, help="illumination sd as a multiple of --noise")

    p = sub.add_parser("sample", help="sample a triplet manifest from a raster")
    _common(p)
    p.add_argument("--raster", required=True)
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--tile-size", type=int, default=50)
    p.add_argument("--neighborhood", type=_neighborhood, default=100)
    p.add_argument("--max-rejections", type=int, default=1000)

    p = sub.add_parser("train", help="train a tile encoder on a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    _train_flags(p)
    _encoder_flags(p)

    p = sub.add_parser("embed", help="embed a regular tiling (or random tiles) of a raster")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--raster", required=True)
    p.add_argument("--labels")
    p.add_argument("--stats", help="band stats JSON (default: stats.json next to --params)")
    p.add_argument("--stride", type=int, help="tiling stride (default: tile size)")
    p.add_argument("--random", type=int, help="embed this many uniformly drawn tiles instead of a tiling")
    p.add_argument("--purity", type=float, help="label only tiles whose modal class exceeds this fraction")

    p = sub.add_parser("eval", help="classify an embedding table with cross-validation")
    _common(p)
    p.add_argument("--table", required=True)
    p.add_argument("--test-table", help="score on this table instead of cross-validating")
    p.add_argument("--classifier", choices=("logreg", "knn", "centroid"))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, default=10)

    p = sub.add_parser("regress", help="cluster-averaged embeddings plus cross-validated ridge regression")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--raster", required=True)
    p.add_argument("--centers", required=True, help="CSV with header id,x,y,target")
    p.add_argument("--stats")
    p.add_argument("--patch", type=int, default=75)
    p.add_argument("--samples", type=int, default=10, help="tiles averaged per center")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--trials", type=int, default=10)

    p = sub.add_parser("grid", help="sweep tile size x neighborhood: sample, train, classify")
    _common(p)
    p.add_argument("--raster", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--tile-sizes", type=_int_list, default=[25, 50, 75, 100])
    p.add_argument("--neighborhoods", type=_neighborhood_list, default=[50, 100, 500, 1000, None])
    p.add_argument("--n", type=int, default=100000)
    p.add_argument("--eval-tiles", type=int, default=1000, help="labeled tiles, split half train / half test")
    _train_flags(p)
    _encoder_flags(p)

    p = sub.add_parser("query", help="nearest neighbors, interpolation or analogy in an embedding table")
    _common(p)
    p.add_argument("mode", choices=("nearest", "interp", "analogy"))
    p.add_argument("--table", required=True)
    p.add_argument("--ids", type=_id_list, required=True,
                   help="one id (nearest), two (interp) or three a,b,c for a + b - c (analogy)")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--exclude-sources", action="store_true", help="drop the query rows from the results")
    p.add_argument("--keep-endpoints", action="store_true", help="interp: allow the two endpoint rows as results")

    p = sub.add_parser("points", help="point-table mode: synth, sample, train, eval")
    _common(p)
    p.add_argument("mode", choices=("synth", "sample", "train", "eval"))
    p.add_argument("--points", help="point CSV (id,lat,lon,features...)")
    p.add_argument("--index", help="health index spec, one 'name,sign' per line")
    p.add_argument("--triplets", help="point triplet CSV from 'points sample'")
    p.add_argument("--params", help="point encoder params from 'points train'")
    p.add_argument("--rows", type=int, default=100, help="synth: number of points")
    p.add_argument("--n", type=int, default=10000, help="sample: number of triplets")
    p.add_argument("--k", type=int, default=5, help="sample: neighbors per point")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--trials", type=int, default=10)
    _train_flags(p, margin=1.0, epochs=50, embed_dim=10)
    return parser


# ---------------------------------------------------------------------------
# shared I/O


def _echo(a, **extra):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {k: v for k, v in vars(a).items()}
    cfg.update(extra)
    (out / f"{a.command}.config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n")
    return out


def _write_stats(path, stats, **meta):
    mean, std = stats
    Path(path).write_text(json.dumps({"mean": mean.tolist(), "std": std.tolist(), **meta}, indent=2, sort_keys=True) + "\n")


def _read_stats(path):
    try:
        d = json.loads(Path(path).read_text())
        return np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float)
    except (ValueError, KeyError) as exc:
        raise errors.FormatError(f"{path}: unreadable band stats ({exc})") from None


def _stats_near(params_path, override):
    path = Path(override) if override else Path(params_path).with_name("stats.json")
    if not path.exists():
        raise errors.FormatError(f"band stats file {path} not found; pass --stats")
    return _read_stats(path)


def _say(out, name, text):
    (out / name).write_text(text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(a):
    spectra = equidistant_spectra(a.classes, a.bands, a.gap) if a.spectra == "equidistant" else None
    noise = a.noise
    if a.noise_gap is not None:
        if spectra is None:
            raise errors.ConfigError("--noise-gap needs --spectra equidistant (random spectra are drawn at run time)")
        noise = a.noise_gap * a.gap
    spec = SyntheticSpec(a.width, a.height, a.bands, a.classes, a.regions, spectra, noise, a.smooth, a.illumination)
    spec.validate()
    out = _echo(a, effective_noise=noise)
    grid, labels = generate_synthetic(spec, a.seed)
    save_raster(grid, out / "raster.t2vr")
    save_labels(labels, out / "labels.t2vl")
    stats = normalize_stats(grid, 10000, a.seed)
    _write_stats(out / "stats.json", stats, sample_count=10000, seed=a.seed)
    counts = np.bincount(labels.classes.ravel(), minlength=a.classes)
    _say(out, "synth.txt", f"raster {a.width}x{a.height}x{a.bands}, {a.classes} classes, noise sd {noise:g}\n"
         + "class pixel counts: " + " ".join(str(int(c)) for c in counts))
    return EXIT_OK


def cmd_sample(a):
    spec = TripletSpec(a.n, a.tile_size, a.neighborhood, a.seed, a.max_rejections)
    if a.workers < 1:
        raise errors.ConfigError("--workers must be >= 1")
    out = _echo(a)
    grid = load_raster(a.raster)
    tset = sample_triplets(grid, spec, workers=a.workers, source=str(Path(a.raster).resolve()))
    write_manifest(tset, out / "triplets.csv")
    r = "none" if a.neighborhood is None else a.neighborhood
    _say(out, "sample.txt", f"{len(tset)} triplets, tile size {a.tile_size}, neighborhood {r} -> {out / 'triplets.csv'}")
    return EXIT_OK


def _log_to(path):
    fh = open(path, "w")

    def log(line):
        print(line, flush=True)
        fh.write(line + "\n")
        fh.flush()

    return log, fh


def cmd_train(a):
    tcfg = _train_config(a)
    out = _echo(a)
    tset = read_manifest(a.manifest)
    ecfg = _encoder_config(a, tset.spec.tile_size, tset.grid.bands)
    stats = normalize_stats(tset.grid, a.stats_samples, a.seed)
    _write_stats(out / "stats.json", stats, sample_count=a.stats_samples, seed=a.seed)
    log, fh = _log_to(out / "train.log")
    try:
        params, report = train(tset, ecfg, tcfg, stats, log=log)
    finally:
        fh.close()
    save_params(params, ecfg, out / "params.t2vp")
    with open(out / "train_loss.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss", "triplets_seen", "fixed_distants"])
        for e, (loss, seen, fixed) in enumerate(zip(report.mean_loss, report.triplets_seen, report.fixed_distants)):
            w.writerow([e + 1, repr(loss), seen, fixed])
    return EXIT_OK


def _random_origins(grid, s, n, seed):
    rng = np.random.default_rng(seed)
    return np.column_stack([rng.integers(0, grid.width - s + 1, n), rng.integers(0, grid.height - s + 1, n)])


def cmd_embed(a):
    if a.purity is not None and not 0 <= a.purity < 1:
        raise errors.ConfigError("--purity must lie in [0, 1)")
    out = _echo(a)
    params, ecfg = load_params(a.params)
    stats = _stats_near(a.params, a.stats)
    grid = load_raster(a.raster)
    labels = load_labels(a.labels) if a.labels else None
    s = ecfg.tile_size
    if a.random is not None:
        origins = _random_origins(grid, s, a.random, a.seed)
    else:
        origins = grid_origins(grid.width, grid.height, s, a.stride)
    table = embed_tiles(grid, params, ecfg, stats, origins, labels, a.purity)
    write_table(table, out / "embeddings.csv")
    _say(out, "embed.txt", f"{len(table)} tiles of {s}px embedded in {table.dim} dims -> {out / 'embeddings.csv'}")
    return EXIT_OK


def cmd_eval(a):
    kind = a.classifier or "logreg"
    out = _echo(a, effective_classifier=kind)
    table = read_table(a.table).labeled()
    note = "" if a.classifier else " (default)"
    if a.test_table:
        test = read_table(a.test_table).labeled()
        if kind == "logreg":
            rep = logistic_regression(table, test, a.l2, a.max_iters)
        elif kind == "knn":
            rep = knn_classify(table, test, a.k)
        else:
            rep = nearest_centroid(table, test)
    else:
        spec = ModelSpec(kind, k=a.k, l2_strength=a.l2, max_iters=a.max_iters)
        rep = cross_validate(table, spec, a.folds, a.trials, a.seed)
    write_reports_csv([(kind, rep)], out / "eval.csv")
    _say(out, "eval.txt", f"classifier: {kind}{note}\n{reports_table([(kind, rep)])}")
    return EXIT_OK


def _read_centers(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["id", "x", "y"]:
        raise errors.FormatError(f"{path}: header must start with id,x,y")
    has_target = len(rows[0]) > 3 and rows[0][3] == "target"
    ids, xy, target = [], [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        try:
            ids.append(r[0])
            xy.append((int(r[1]), int(r[2])))
            target.append(float(r[3]) if has_target and r[3] else np.nan)
        except (ValueError, IndexError):
            raise errors.FormatError(f"{path} line {lineno}: malformed center row") from None
    return ids, np.array(xy, dtype=np.int64).reshape(-1, 2), np.array(target)


def cmd_regress(a):
    if a.alpha < 0:
        raise errors.ConfigError("--alpha must be >= 0")
    out = _echo(a)
    params, ecfg = load_params(a.params)
    stats = _stats_near(a.params, a.stats)
    grid = load_raster(a.raster)
    ids, centers, target = _read_centers(a.centers)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = cluster_average_embeddings(grid, params, ecfg, stats, centers, a.patch, a.samples, seed=a.seed,
                                           ids=ids, targets=target)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_table(table, out / "cluster_embeddings.csv")
    rep = cross_validate(table, ModelSpec("ridge", alpha=a.alpha), a.folds, a.trials, a.seed)
    write_reports_csv([("ridge", rep)], out / "regress.csv")
    text = reports_table([("ridge", rep)])
    if table.skipped:
        text += f"\nskipped centers: {', '.join(table.skipped)}"
    _say(out, "regress.txt", text)
    return EXIT_OK


def cmd_grid(a):
    tcfg = _train_config(a)
    for s in a.tile_sizes:
        _encoder_config(a, s, 1)  # validates every tile size up front
        for r in a.neighborhoods:
            TripletSpec(a.n, s, r, a.seed)
    out = _echo(a)
    grid = load_raster(a.raster)
    labels = load_labels(a.labels)
    stats = normalize_stats(grid, a.stats_samples, a.seed)
    rows = []
    for s in a.tile_sizes:
        ecfg = _encoder_config(a, s, grid.bands)
        origins = _random_origins(grid, s, a.eval_tiles, a.seed)
        tiles = extract_tiles(grid, origins, s)
        lab = label_tiles(origins, labels, s)
        for r in a.neighborhoods:
            rname = "none" if r is None else str(r)
            try:
                tset = sample_triplets(grid, TripletSpec(a.n, s, r, a.seed), workers=a.workers)
            except errors.CoverageError as exc:
                print(f"warning: tile size {s}, neighborhood {rname}: {exc}", file=sys.stderr)
                rows.append((s, rname, float("nan")))
                continue
            params, _ = train(tset, ecfg, tcfg, stats)
            table = EmbeddingTable(list(range(len(origins))), origins, embed_array(params, ecfg, tiles, stats), lab)
            rows.append((s, rname, _split_accuracy(table)))
    with open(out / "grid.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tile_size", "neighborhood", "accuracy"])
        for s, r, acc in rows:
            w.writerow([s, r, "" if np.isnan(acc) else repr(acc)])
    cols = ["none" if r is None else str(r) for r in a.neighborhoods]
    lookup = {(s, r): acc for s, r, acc in rows}
    body = [[s] + ["n/a" if np.isnan(lookup[(s, c)]) else f"{lookup[(s, c)]:.3f}" for c in cols] for s in a.tile_sizes]
    _say(out, "grid.txt", "test accuracy by tile size (rows) and neighborhood (columns)\n"
         + format_table(["tile_size"] + cols, body))
    return EXIT_OK


def _split_accuracy(table):
    lab = table.labeled()
    half = len(lab) // 2
    idx = np.arange(len(lab))
    train_t, test_t = lab.subset(idx[:half]), lab.subset(idx[half:])
    if len(np.unique(train_t.labels)) < 2:
        return float("nan")
    return logistic_regression(train_t, test_t).values[0]


def _query_text(results, titles):
    return "\n\n".join(f"{t}\n{r.to_text()}" for t, r in zip(titles, results))


def _write_query_csv(path, results, titles):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["query", "rank", "id", "x", "y", "distance"])
        for t, r in zip(titles, results):
            for rank, (rid, o, d) in enumerate(zip(r.ids, r.origins, r.distances)):
                w.writerow([t, rank + 1, rid, int(o[0]), int(o[1]), repr(float(d))])


def cmd_query(a):
    need = {"nearest": 1, "interp": 2, "analogy": 3}[a.mode]
    if len(a.ids) != need:
        raise errors.ConfigError(f"query {a.mode} needs exactly {need} id(s), got {len(a.ids)}")
    if a.k < 1:
        raise errors.ConfigError("--k must be >= 1")
    out = _echo(a)
    table = read_table(a.table)
    pos = {rid: i for i, rid in enumerate(table.ids)}
    missing = [i for i in a.ids if i not in pos]
    if missing:
        raise errors.FormatError(f"ids not in table: {missing}")
    z = [table.embeddings[pos[i]] for i in a.ids]
    exclude = set(a.ids) if a.exclude_sources else set()
    if a.mode == "nearest":
        results, titles = [nearest(table, z[0], a.k, exclude)], [f"nearest to {a.ids[0]}"]
    elif a.mode == "interp":
        results = interpolation_neighbors(table, a.ids[0], a.ids[1], a.steps, a.k, not a.keep_endpoints)
        titles = [f"step {i} of {a.steps - 1}" for i in range(a.steps)]
    else:
        results = [nearest(table, analogy(*z), a.k, exclude)]
        titles = [f"{a.ids[0]} + {a.ids[1]} - {a.ids[2]}"]
    _write_query_csv(out / "query.csv", results, titles)
    _say(out, "query.txt", _query_text(results, titles))
    return EXIT_OK


def _read_point_triplets(path, data):
    pos = {rid: i for i, rid in enumerate(data.ids)}
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0] != ["anchor", "neighbor", "distant"]:
        raise errors.FormatError(f"{path}: expected header anchor,neighbor,distant")
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            out.append(PointTriplet(pos[r[0]], pos[r[1]], pos[r[2]]))
        except (KeyError, IndexError):
            raise errors.FormatError(f"{path} row {lineno}: unknown point id or missing field") from None
    return out


def _point_inputs(data, index_path):
    x, _ = zscore(data.columns(non_health_names(data, load_index_spec(index_path))))
    return x


def cmd_points(a):
    required = {"synth": [], "sample": ["points"], "train": ["points", "triplets", "index"], "eval": ["points", "params", "index"]}
    missing = [f"--{f}" for f in required[a.mode] if getattr(a, f) is None]
    if missing:
        raise UsageError(f"points {a.mode}: missing {' '.join(missing)}")
    if a.mode == "train":
        tcfg = _train_config(a)
    out = _echo(a)
    if a.mode == "synth":
        data, spec = generate_points(n=a.rows, seed=a.seed)
        write_points(data, out / "points.csv")
        (out / "index.txt").write_text("".join(f"{n},{s}\n" for n, s in zip(spec.names, spec.signs)))
        _say(out, "points.txt", f"{len(data)} synthetic points with {len(data.feature_names)} features")
        return EXIT_OK
    data = load_points(a.points)
    if a.mode == "sample":
        trips = sample_point_triplets(data, a.n, a.k, a.seed)
        with open(out / "point_triplets.csv", "w", newline="") as fh:
            fh.write(f"#points={a.points}\n#k={a.k}\n#seed={a.seed}\n")
            w = csv.writer(fh)
            w.writerow(["anchor", "neighbor", "distant"])
            for t in trips:
                w.writerow([data.ids[t.anchor], data.ids[t.neighbor], data.ids[t.distant]])
        _say(out, "points.txt", f"{len(trips)} point triplets (k={a.k}); {data.imputed} missing cells imputed")
        return EXIT_OK
    if a.mode == "train":
        x = _point_inputs(data, a.index)
        trips = _read_point_triplets(a.triplets, data)
        log, fh = _log_to(out / "points_train.log")
        try:
            params, config, _ = train_point_encoder(x, trips, a.hidden, a.embed_dim, tcfg, log=log)
        finally:
            fh.close()
        save_params(params, config, out / "point_params.t2vp")
        z = embed_array(params, config, x)
        write_table(EmbeddingTable(data.ids, np.zeros((len(data), 2)), z), out / "point_embeddings.csv")
        return EXIT_OK
    params, config = load_params(a.params)
    if not isinstance(config, MLPConfig):
        raise errors.FormatError(f"{a.params} holds a tile encoder, not a point encoder")
    spec = load_index_spec(a.index)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = evaluate_point_embeddings(data, params, config, spec, a.folds, a.trials, a.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    named = [(f"{s}/{m}", r) for (s, m), r in reports.items()]
    write_reports_csv(named, out / "points_eval.csv")
    rows = [(n, r.config["dim"], r.config["selected"], f"{r.mean:.4f}", f"{r.std:.4f}") for n, r in named]
    _say(out, "points_eval.txt", format_table(["features/model", "dim", "selected", "mean_r2", "std"], rows))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "sample": cmd_sample,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "regress": cmd_regress,
    "grid": cmd_grid,
    "query": cmd_query,
    "points": cmd_points,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.CoverageError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        print("advisory: the raster leaves no room for distant tiles; use a smaller --neighborhood or --tile-size,"
              " a larger raster, or --neighborhood none", file=sys.stderr)
        return EXIT_DATA
    except (errors.FormatError, errors.BoundsError, errors.StaleManifestError, errors.ShapeError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except errors.NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
