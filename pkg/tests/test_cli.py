import json

import numpy as np
import pytest

from tilembed.cli import main
from tilembed.encoder import Block, EncoderConfig, embed_array, init_encoder, load_params
from tilembed.evaluation import EmbeddingTable, label_tiles, logistic_regression, read_table, write_table
from tilembed.raster import extract_tiles, load_labels, load_raster, normalize_stats
from tilembed.sampler import TripletSpec, read_manifest, sample_triplets
from tilembed.training import TrainConfig, train

SMALL = ["--width", "64", "--height", "64", "--classes", "3", "--regions", "9"]
NET = ["--channels", "8", "--embed-dim", "4", "--batch", "16"]


def run(*argv):
    return main([str(a) for a in argv])


def files(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if not p.name.endswith(".config.json")}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    d = tmp_path_factory.mktemp("pipe")
    assert run("synth", *SMALL, "--spectra", "equidistant", "--noise-gap", "0.5", "--out", d) == 0
    assert run("sample", "--raster", d / "raster.t2vr", "--n", 48, "--tile-size", 8, "--neighborhood", 16,
               "--out", d) == 0
    assert run("train", "--manifest", d / "triplets.csv", "--epochs", 2, *NET, "--out", d) == 0
    assert run("embed", "--params", d / "params.t2vp", "--raster", d / "raster.t2vr", "--labels",
               d / "labels.t2vl", "--out", d) == 0
    return d


class TestSynth:
    def test_defaults(self, tmp_path):
        assert run("synth", "--out", tmp_path) == 0
        grid = load_raster(tmp_path / "raster.t2vr")
        assert (grid.width, grid.height, grid.bands) == (512, 512, 4)
        assert load_labels(tmp_path / "labels.t2vl").classes.max() == 4
        cfg = json.loads((tmp_path / "synth.config.json").read_text())
        assert cfg["seed"] == 0 and cfg["classes"] == 5 and cfg["effective_noise"] == 0.1
        assert set(json.loads((tmp_path / "stats.json").read_text())) >= {"mean", "std"}

    def test_byte_identical(self, tmp_path):
        assert run("synth", *SMALL, "--out", tmp_path / "a") == 0
        assert run("synth", *SMALL, "--out", tmp_path / "b") == 0
        assert files(tmp_path / "a") == files(tmp_path / "b")

    def test_constant(self, tmp_path):
        assert run("synth", *SMALL[:4], "--classes", 1, "--noise", 0, "--out", tmp_path) == 0
        px = load_raster(tmp_path / "raster.t2vr").pixels
        assert (px == px[:, :1, :1]).all()

    def test_invalid_spec(self, tmp_path, capsys):
        assert run("synth", "--classes", 0, "--out", tmp_path) == 2
        assert run("synth", "--noise-gap", 0.5, "--out", tmp_path) == 2
        assert run("synth", "--width", "abc") == 2
        assert not (tmp_path / "raster.t2vr").exists()

    def test_noise_gap_echo(self, tmp_path):
        assert run("synth", *SMALL, "--spectra", "equidistant", "--gap", 0.4, "--noise-gap", 0.5, "--out",
                   tmp_path) == 0
        assert json.loads((tmp_path / "synth.config.json").read_text())["effective_noise"] == pytest.approx(0.2)


class TestSample:
    def test_header_only(self, pipeline, tmp_path):
        assert run("sample", "--raster", pipeline / "raster.t2vr", "--n", 0, "--tile-size", 8, "--out", tmp_path) == 0
        lines = (tmp_path / "triplets.csv").read_text().splitlines()
        assert lines and all(line.startswith("#") for line in lines)
        assert len(read_manifest(tmp_path / "triplets.csv")) == 0

    def test_none_neighborhood(self, pipeline, tmp_path):
        assert run("sample", "--raster", pipeline / "raster.t2vr", "--n", 5, "--tile-size", 8, "--neighborhood",
                   "none", "--out", tmp_path) == 0
        assert "#neighborhood=none" in (tmp_path / "triplets.csv").read_text()
        assert read_manifest(tmp_path / "triplets.csv").spec.neighborhood is None

    def test_workers_do_not_matter(self, pipeline, tmp_path):
        for w in (1, 4):
            assert run("sample", "--raster", pipeline / "raster.t2vr", "--n", 200, "--tile-size", 8,
                       "--neighborhood", 16, "--workers", w, "--out", tmp_path / str(w)) == 0
        assert (tmp_path / "1" / "triplets.csv").read_bytes() == (tmp_path / "4" / "triplets.csv").read_bytes()

    def test_usage_and_data_errors(self, pipeline, tmp_path, capsys):
        assert run("sample", "--out", tmp_path) == 2
        assert run("sample", "--raster", pipeline / "raster.t2vr", "--neighborhood", "far") == 2
        assert run("sample", "--raster", tmp_path / "missing.t2vr", "--out", tmp_path) == 3
        code = run("sample", "--raster", pipeline / "raster.t2vr", "--n", 3, "--tile-size", 60, "--neighborhood",
                   62, "--out", tmp_path)
        assert code == 3
        assert "advisory" in capsys.readouterr().err

    def test_bad_raster_file(self, tmp_path):
        (tmp_path / "bad.t2vr").write_bytes(b"not a raster")
        assert run("sample", "--raster", tmp_path / "bad.t2vr", "--out", tmp_path) == 3


class TestTrain:
    def test_zero_epochs_is_init(self, pipeline, tmp_path):
        assert run("train", "--manifest", pipeline / "triplets.csv", "--epochs", 0, *NET, "--out", tmp_path) == 0
        params, cfg = load_params(tmp_path / "params.t2vp")
        init = init_encoder(cfg)
        for k in init:
            np.testing.assert_array_equal(params[k], init[k])
        assert (tmp_path / "train.log").read_text() == ""

    def test_log_lines_and_bytes(self, pipeline, tmp_path):
        for name in ("a", "b"):
            assert run("train", "--manifest", pipeline / "triplets.csv", "--epochs", 3, *NET, "--out",
                       tmp_path / name) == 0
        assert len((tmp_path / "a" / "train.log").read_text().splitlines()) == 3
        for f in ("params.t2vp", "train_loss.csv", "stats.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        # only the timing column of the log may differ
        la = [line.split("\t")[:3] for line in (tmp_path / "a" / "train.log").read_text().splitlines()]
        lb = [line.split("\t")[:3] for line in (tmp_path / "b" / "train.log").read_text().splitlines()]
        assert la == lb

    def test_config_echo(self, pipeline, tmp_path):
        assert run("train", "--manifest", pipeline / "triplets.csv", "--epochs", 0, "--out", tmp_path) == 0
        cfg = json.loads((tmp_path / "train.config.json").read_text())
        assert (cfg["margin"], cfg["lam"], cfg["lr"], cfg["batch"], cfg["aug"]) == (50.0, 0.01, 0.001, 50, "shuffle")
        assert (cfg["beta1"], cfg["beta2"], cfg["embed_dim"], cfg["channels"]) == (0.5, 0.999, 32, [16, 32, 64])

    def test_numeric_error(self, pipeline, tmp_path, capsys):
        code = run("train", "--manifest", pipeline / "triplets.csv", "--epochs", 2, *NET, "--lr", 1e300,
                   "--out", tmp_path)
        assert code == 4
        assert "epoch=" in capsys.readouterr().err

    def test_bad_flags(self, pipeline, tmp_path):
        assert run("train", "--manifest", pipeline / "triplets.csv", "--aug", "twice") == 2
        assert run("train", "--manifest", pipeline / "triplets.csv", "--batch", 0, "--out", tmp_path) == 2
        assert run("train", "--manifest", tmp_path / "none.csv", "--out", tmp_path) == 3

    def test_stale_manifest(self, pipeline, tmp_path):
        assert run("synth", *SMALL, "--seed", 1, "--out", tmp_path) == 0
        text = (pipeline / "triplets.csv").read_text()
        lines = [f"#raster={tmp_path / 'raster.t2vr'}" if line.startswith("#raster=") else line
                 for line in text.splitlines()]
        (tmp_path / "triplets.csv").write_text("\n".join(lines) + "\n")
        assert run("train", "--manifest", tmp_path / "triplets.csv", "--epochs", 0, "--out", tmp_path) == 3


class TestEmbedEval:
    def test_embed_table(self, pipeline):
        table = read_table(pipeline / "embeddings.csv")
        assert len(table) == 64 and table.dim == 4
        assert (table.labels >= 0).all()

    def test_embed_random_and_stride(self, pipeline, tmp_path):
        assert run("embed", "--params", pipeline / "params.t2vp", "--raster", pipeline / "raster.t2vr", "--random",
                   7, "--out", tmp_path / "r") == 0
        assert len(read_table(tmp_path / "r" / "embeddings.csv")) == 7
        assert run("embed", "--params", pipeline / "params.t2vp", "--raster", pipeline / "raster.t2vr", "--stride",
                   4, "--out", tmp_path / "s") == 0
        assert len(read_table(tmp_path / "s" / "embeddings.csv")) == 15 * 15

    def test_embed_missing_stats(self, pipeline, tmp_path):
        (tmp_path / "params.t2vp").write_bytes((pipeline / "params.t2vp").read_bytes())
        assert run("embed", "--params", tmp_path / "params.t2vp", "--raster", pipeline / "raster.t2vr",
                   "--out", tmp_path) == 3

    def test_eval_defaults_to_logreg(self, pipeline, tmp_path, capsys):
        assert run("eval", "--table", pipeline / "embeddings.csv", "--folds", 2, "--trials", 1, "--out",
                   tmp_path) == 0
        summary = (tmp_path / "eval.txt").read_text()
        assert "logreg (default)" in summary
        assert json.loads((tmp_path / "eval.config.json").read_text())["effective_classifier"] == "logreg"

    def test_eval_classifiers(self, pipeline, tmp_path):
        for kind in ("knn", "centroid"):
            assert run("eval", "--table", pipeline / "embeddings.csv", "--classifier", kind, "--folds", 2,
                       "--trials", 1, "--out", tmp_path) == 0
            assert "(default)" not in (tmp_path / "eval.txt").read_text()
        assert run("eval", "--table", pipeline / "embeddings.csv", "--test-table", pipeline / "embeddings.csv",
                   "--classifier", "knn", "--k", 1, "--out", tmp_path) == 0
        assert "1.0000" in (tmp_path / "eval.txt").read_text()

    def test_eval_bad_table(self, tmp_path):
        (tmp_path / "t.csv").write_text("a,b\n1,2\n")
        assert run("eval", "--table", tmp_path / "t.csv", "--out", tmp_path) == 3


class TestQuery:
    def test_analogy_cancellation(self, pipeline, tmp_path):
        assert run("query", "nearest", "--table", pipeline / "embeddings.csv", "--ids", "3", "--k", 4, "--out",
                   tmp_path / "n") == 0
        assert run("query", "analogy", "--table", pipeline / "embeddings.csv", "--ids", "3,9,9", "--k", 4, "--out",
                   tmp_path / "a") == 0
        ids = [[line.split(",")[2] for line in (tmp_path / m / "query.csv").read_text().splitlines()[1:]]
               for m in ("n", "a")]
        assert ids[0] == ids[1] and ids[0][0] == "3"

    def test_interp_steps(self, pipeline, tmp_path):
        assert run("query", "interp", "--table", pipeline / "embeddings.csv", "--ids", "0,7", "--steps", 4, "--k", 2,
                   "--out", tmp_path) == 0
        rows = (tmp_path / "query.csv").read_text().splitlines()[1:]
        assert len(rows) == 8
        assert not any(r.split(",")[2] in ("0", "7") for r in rows)

    def test_errors(self, pipeline, tmp_path):
        assert run("query", "analogy", "--table", pipeline / "embeddings.csv", "--ids", "1,2", "--out", tmp_path) == 2
        assert run("query", "nearest", "--table", pipeline / "embeddings.csv", "--ids", "zz", "--out", tmp_path) == 3
        assert run("query", "sideways", "--table", pipeline / "embeddings.csv", "--ids", "1") == 2


class TestRegressGrid:
    def test_regress(self, pipeline, tmp_path):
        (tmp_path / "c.csv").write_text("id,x,y,target\n" + "".join(
            f"c{i},{x},{y},{t}\n" for i, (x, y, t) in enumerate([(16, 16, 1), (48, 16, 2), (16, 48, 0), (48, 48, 3),
                                                                  (32, 32, 1), (200, 200, 5)])))
        assert run("regress", "--params", pipeline / "params.t2vp", "--raster", pipeline / "raster.t2vr",
                   "--centers", tmp_path / "c.csv", "--patch", 16, "--samples", 3, "--folds", 2, "--trials", 2,
                   "--out", tmp_path) == 0
        assert "skipped centers: c5" in (tmp_path / "regress.txt").read_text()
        assert len(read_table(tmp_path / "cluster_embeddings.csv")) == 5

    def test_regress_bad_centers(self, pipeline, tmp_path):
        (tmp_path / "c.csv").write_text("name,x\n")
        assert run("regress", "--params", pipeline / "params.t2vp", "--raster", pipeline / "raster.t2vr",
                   "--centers", tmp_path / "c.csv", "--patch", 16, "--out", tmp_path) == 3

    def test_single_cell_grid_is_one_run(self, pipeline, tmp_path):
        flags = ["--tile-sizes", 8, "--neighborhoods", 16, "--n", 32, "--epochs", 1, "--eval-tiles", 40, *NET]
        assert run("grid", "--raster", pipeline / "raster.t2vr", "--labels", pipeline / "labels.t2vl", *flags,
                   "--out", tmp_path) == 0
        rows = (tmp_path / "grid.csv").read_text().splitlines()
        assert rows[0] == "tile_size,neighborhood,accuracy" and len(rows) == 2
        # the same sample + train + half-split evaluation done by hand
        grid, labels = load_raster(pipeline / "raster.t2vr"), load_labels(pipeline / "labels.t2vl")
        stats = normalize_stats(grid, 10000, 0)
        ecfg = EncoderConfig(8, 4, (Block(8),), 4, 0)
        params, _ = train(sample_triplets(grid, TripletSpec(32, 8, 16, 0)), ecfg,
                          TrainConfig(epochs=1, batch_size=16), stats)
        rng = np.random.default_rng(0)
        origins = np.column_stack([rng.integers(0, 57, 40), rng.integers(0, 57, 40)])
        z = embed_array(params, ecfg, extract_tiles(grid, origins, 8), stats)
        tab = EmbeddingTable(list(range(40)), origins, z, label_tiles(origins, labels, 8)).labeled()
        half = len(tab) // 2
        acc = logistic_regression(tab.subset(np.arange(half)), tab.subset(np.arange(half, len(tab)))).values[0]
        assert float(rows[1].split(",")[2]) == acc

    def test_grid_layout_and_coverage(self, pipeline, tmp_path, capsys):
        flags = ["--tile-sizes", "8,60", "--neighborhoods", "16,none", "--n", 16, "--epochs", 1, "--eval-tiles", 20,
                 *NET]
        assert run("grid", "--raster", pipeline / "raster.t2vr", "--labels", pipeline / "labels.t2vl", *flags,
                   "--out", tmp_path) == 0
        rows = [r.split(",") for r in (tmp_path / "grid.csv").read_text().splitlines()[1:]]
        assert [(r[0], r[1]) for r in rows] == [("8", "16"), ("8", "none"), ("60", "16"), ("60", "none")]
        assert rows[2][2] == ""  # no distant tile exists for s=60 under r=16
        layout = (tmp_path / "grid.txt").read_text().splitlines()
        assert layout[1].split() == ["tile_size", "16", "none"] and "n/a" in layout[3]


class TestPoints:
    def test_pipeline(self, tmp_path):
        assert run("points", "synth", "--rows", 40, "--out", tmp_path) == 0
        assert run("points", "sample", "--points", tmp_path / "points.csv", "--n", 100, "--out", tmp_path) == 0
        assert run("points", "train", "--points", tmp_path / "points.csv", "--triplets",
                   tmp_path / "point_triplets.csv", "--index", tmp_path / "index.txt", "--epochs", 2,
                   "--out", tmp_path) == 0
        assert len((tmp_path / "points_train.log").read_text().splitlines()) == 2
        assert run("points", "eval", "--points", tmp_path / "points.csv", "--params", tmp_path / "point_params.t2vp",
                   "--index", tmp_path / "index.txt", "--trials", 1, "--out", tmp_path) == 0
        assert len((tmp_path / "points_eval.csv").read_text().splitlines()) == 7

    def test_missing_inputs(self, tmp_path):
        assert run("points", "train", "--points", tmp_path / "p.csv", "--out", tmp_path) == 2
        assert run("points", "sample", "--points", tmp_path / "p.csv", "--out", tmp_path) == 3

    def test_tile_params_rejected(self, pipeline, tmp_path):
        assert run("points", "synth", "--rows", 20, "--out", tmp_path) == 0
        assert run("points", "eval", "--points", tmp_path / "points.csv", "--params", pipeline / "params.t2vp",
                   "--index", tmp_path / "index.txt", "--out", tmp_path) == 3


def test_no_subcommand():
    assert main([]) == 2


def test_write_table_roundtrip_via_cli(pipeline, tmp_path):
    table = read_table(pipeline / "embeddings.csv")
    write_table(table, tmp_path / "copy.csv")
    assert (tmp_path / "copy.csv").read_bytes() == (pipeline / "embeddings.csv").read_bytes()
