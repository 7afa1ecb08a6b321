import numpy as np
import pytest

from sdhkit import cli, dataset, fsdh


SYNTH_KEYS = ("source = synth\nclasses = 4\nper_class = 30\ndim = 8\n"
              "spread = 0.2\ndata_seed = 3\nanchors = 24\nsigma = 0.4\n")


def write_cfg(path, text):
    path.write_text(text)
    return str(path)


def run(args):
    return cli.main(args)


class TestTrain:
    def test_fsdh_train_writes_model_and_log(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "train.cfg",
                        SYNTH_KEYS + f"method = fsdh\nbits = 16\noutdir = {tmp_path / 'run'}\n")
        assert run(["train", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "learning_time_s=" in out
        assert (tmp_path / "run" / "model.fsdh").exists()
        assert (tmp_path / "run" / "config.txt").exists()
        log = (tmp_path / "run" / "train_log.txt").read_text()
        assert "learning_time_s=" in log
        model = fsdh.load_model(tmp_path / "run" / "model.fsdh")
        assert model.bits == 16
        assert model.trained_on.class_count == 4

    def test_sdh_allows_non_power_of_two_bits(self, tmp_path):
        cfg = write_cfg(tmp_path / "train.cfg",
                        SYNTH_KEYS + "method = sdh\nbits = 24\niters = 2\n"
                        f"outdir = {tmp_path / 'run'}\n")
        assert run(["train", "--config", cfg]) == 0
        assert (tmp_path / "run" / "trajectory.csv").exists()
        model = fsdh.load_model(tmp_path / "run" / "model.fsdh")
        assert model.bits == 24
        assert model.class_codes is None

    def test_fsdh_rejects_non_power_of_two_bits(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "train.cfg",
                        SYNTH_KEYS + f"method = fsdh\nbits = 24\noutdir = {tmp_path / 'run'}\n")
        assert run(["train", "--config", cfg]) == 2
        err = capsys.readouterr().err
        assert "error [train]" in err
        assert "A1" in err

    def test_missing_dataset_path_is_a_dataset_stage_error(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "train.cfg",
                        "source = mnist\nimages = /nonexistent/images\n"
                        f"labels = /nonexistent/labels\noutdir = {tmp_path / 'run'}\n")
        assert run(["train", "--config", cfg]) == 2
        assert "error [dataset]" in capsys.readouterr().err

    def test_set_overrides_config(self, tmp_path):
        cfg = write_cfg(tmp_path / "train.cfg",
                        SYNTH_KEYS + f"method = fsdh\nbits = 16\noutdir = {tmp_path / 'a'}\n")
        assert run(["train", "--config", cfg, "--set", "bits=32",
                    "--outdir", str(tmp_path / "b")]) == 0
        model = fsdh.load_model(tmp_path / "b" / "model.fsdh")
        assert model.bits == 32
        copied = (tmp_path / "b" / "config.txt").read_text()
        assert "bits = 32" in copied


class TestEval:
    def train_model(self, tmp_path):
        cfg = write_cfg(tmp_path / "train.cfg",
                        SYNTH_KEYS + f"method = fsdh\nbits = 16\noutdir = {tmp_path / 'run'}\n")
        assert run(["train", "--config", cfg]) == 0
        return tmp_path / "run" / "model.fsdh"

    def eval_cfg(self, tmp_path, model, outdir):
        return write_cfg(tmp_path / f"{outdir}.cfg",
                         f"model = {model}\n"
                         "db_source = synth\nquery_source = synth\n"
                         "classes = 4\nper_class = 30\ndim = 8\n"
                         "spread = 0.2\ndata_seed = 3\nradius = 2\n"
                         f"outdir = {tmp_path / outdir}\n")

    def test_self_retrieval_is_near_perfect(self, tmp_path, capsys):
        model = self.train_model(tmp_path)
        cfg = self.eval_cfg(tmp_path, model, "eval")
        assert run(["eval", "--config", cfg]) == 0
        summary = dict(line.split("=", 1) for line in
                       (tmp_path / "eval" / "summary.txt").read_text().splitlines())
        assert float(summary["precision_at_radius"]) > 0.95
        assert float(summary["map"]) > 0.95
        assert (tmp_path / "eval" / "pr_curve.csv").exists()

    def test_two_evaluations_are_identical(self, tmp_path):
        model = self.train_model(tmp_path)
        a_cfg = self.eval_cfg(tmp_path, model, "eval_a")
        b_cfg = self.eval_cfg(tmp_path, model, "eval_b")
        assert run(["eval", "--config", a_cfg]) == 0
        assert run(["eval", "--config", b_cfg]) == 0
        assert ((tmp_path / "eval_a" / "summary.txt").read_text()
                == (tmp_path / "eval_b" / "summary.txt").read_text())
        assert ((tmp_path / "eval_a" / "pr_curve.csv").read_text()
                == (tmp_path / "eval_b" / "pr_curve.csv").read_text())

    def test_dimension_mismatch_is_an_encode_stage_error(self, tmp_path, capsys):
        model = self.train_model(tmp_path)
        cfg = write_cfg(tmp_path / "bad.cfg",
                        f"model = {model}\n"
                        "db_source = synth\nquery_source = synth\n"
                        "classes = 4\nper_class = 30\ndim = 9\n"
                        "spread = 0.2\ndata_seed = 3\n"
                        f"outdir = {tmp_path / 'bad'}\n")
        assert run(["eval", "--config", cfg]) == 2
        assert "error [encode]" in capsys.readouterr().err


class TestFigures:
    def test_fig1_bundle(self, tmp_path):
        cfg = write_cfg(tmp_path / "fig1.cfg",
                        "lambda = 1.0\ndata_seed = 0\nfig1_seeds = 2\nfig1_iters = 3\n"
                        f"outdir = {tmp_path / 'fig1'}\n")
        assert run(["figures", "fig1", "--config", cfg]) == 0
        files = sorted(p.name for p in (tmp_path / "fig1").glob("fig1_*.csv"))
        assert len(files) == 5  # 2 seeds x 2 solvers + reference
        reference = (tmp_path / "fig1" / "fig1_reference.csv").read_text().splitlines()
        lam, bits, classes = 1.0, 16, 10
        assert float(reference[1]) == pytest.approx(classes * lam / (bits + lam), abs=1e-9)
        assert (tmp_path / "fig1" / "notes.txt").exists()

    def test_default_seed_count_matches_protocol(self):
        assert cli.DEFAULTS["fig1_seeds"] == "10"

    def test_bitscale_trend(self, tmp_path):
        cfg = write_cfg(tmp_path / "bs.cfg",
                        "source = synth\nclasses = 4\nper_class = 60\ndim = 8\n"
                        "spread = 0.2\ndata_seed = 3\nanchors = 32\nsigma = 0.4\n"
                        "bits_list = 16,32\ntest_per_class = 10\n"
                        "bitscale_methods = fsdh\n"
                        f"outdir = {tmp_path / 'bs'}\n")
        assert run(["figures", "bitscale", "--config", cfg]) == 0
        rows = (tmp_path / "bs" / "bitscale.csv").read_text().strip().splitlines()
        assert rows[0] == "method,bits,train_seconds,precision_at_radius"
        assert len(rows) == 3
        precisions = [float(r.split(",")[3]) for r in rows[1:]]
        assert max(precisions) - min(precisions) <= 0.03

    def test_losses_bundle(self, tmp_path):
        cfg = write_cfg(tmp_path / "losses.cfg",
                        SYNTH_KEYS + "losses_bits_list = 16,32\niters = 2\n"
                        f"outdir = {tmp_path / 'losses'}\n")
        assert run(["figures", "losses", "--config", cfg]) == 0
        rows = (tmp_path / "losses" / "losses.csv").read_text().strip().splitlines()
        assert len(rows) == 3
        for row in rows[1:]:
            _, sdh_w, _, fsdh_w, _ = row.split(",")
            assert float(fsdh_w) <= float(sdh_w)

    def test_biasmap_blocks_equal_bits(self, tmp_path):
        cfg = write_cfg(tmp_path / "bias.cfg",
                        "source = synth\nclasses = 3\nper_class = 5\ndim = 6\n"
                        "spread = 0.1\ndata_seed = 1\nbiasmap_anchors = 12\nsigma = 0.4\n"
                        "bits = 8\n"
                        f"outdir = {tmp_path / 'bias'}\n")
        assert run(["figures", "biasmap", "--config", cfg]) == 0
        btb = np.loadtxt(tmp_path / "bias" / "btb_matrix.csv", delimiter=",")
        expected = np.kron(np.eye(3), np.full((5, 5), 8.0))
        assert np.array_equal(btb, expected)
        assert (tmp_path / "bias" / "k_matrix.csv").exists()


class TestBenchAndSynth:
    def test_bench_writes_stage_rows(self, tmp_path):
        cfg = write_cfg(tmp_path / "bench.cfg",
                        SYNTH_KEYS + "bits_list = 16,32\nrepeats = 1\n"
                        f"outdir = {tmp_path / 'bench'}\n")
        assert run(["bench", "--config", cfg]) == 0
        rows = (tmp_path / "bench" / "bench.csv").read_text().strip().splitlines()
        stages = {r.split(",")[2] for r in rows[1:]}
        assert stages == {"kernel_transform", "code_construction", "linear_solve", "total"}

    def test_bench_repeat_counts_do_not_change_numerics(self, tmp_path):
        # Identical configs apart from repeats produce the same stage set.
        for repeats, name in ((1, "b1"), (3, "b3")):
            cfg = write_cfg(tmp_path / f"{name}.cfg",
                            SYNTH_KEYS + f"bits_list = 16\nrepeats = {repeats}\n"
                            f"outdir = {tmp_path / name}\n")
            assert run(["bench", "--config", cfg]) == 0
        rows1 = (tmp_path / "b1" / "bench.csv").read_text().strip().splitlines()
        rows3 = (tmp_path / "b3" / "bench.csv").read_text().strip().splitlines()
        assert [r.rsplit(",", 1)[0] for r in rows1] == [r.rsplit(",", 1)[0] for r in rows3]

    def test_synth_round_trips_through_csv_loader(self, tmp_path):
        cfg = write_cfg(tmp_path / "synth.cfg",
                        "classes = 3\nper_class = 4\ndim = 5\nspread = 0.2\n"
                        f"data_seed = 9\noutdir = {tmp_path / 'synth'}\n")
        assert run(["synth", "--config", cfg]) == 0
        loaded = dataset.load_csv(tmp_path / "synth" / "features.csv",
                                  tmp_path / "synth" / "labels.csv")
        reference = dataset.synth_blobs(3, 4, 5, 0.2, seed=9)
        assert loaded.sample_count == 12
        assert np.abs(loaded.features - reference.features).max() < 1e-12
        assert np.array_equal(loaded.labels, reference.labels)


def test_mnist_route_end_to_end(tmp_path, idx_pair):
    rng = np.random.default_rng(21)
    # 10 classes, 8 samples each, one random pixel prototype per class so
    # the class directions survive unit normalization.
    labels = np.repeat(np.arange(10, dtype=np.uint8), 8)
    protos = rng.integers(0, 200, (10, 3, 3))
    noise = rng.integers(0, 20, (80, 3, 3))
    images = np.clip(protos[labels] + noise, 0, 255).astype(np.uint8)
    images_path, labels_path = idx_pair(images, labels)
    train_cfg = write_cfg(tmp_path / "train.cfg",
                          f"source = mnist\nimages = {images_path}\nlabels = {labels_path}\n"
                          "anchors = 40\nsigma = 0.4\nmethod = fsdh\nbits = 16\n"
                          f"outdir = {tmp_path / 'run'}\n")
    assert run(["train", "--config", train_cfg]) == 0
    eval_cfg = write_cfg(tmp_path / "eval.cfg",
                         f"model = {tmp_path / 'run' / 'model.fsdh'}\n"
                         f"db_source = mnist\ndb_images = {images_path}\ndb_labels = {labels_path}\n"
                         f"query_source = mnist\nquery_images = {images_path}\n"
                         f"query_labels = {labels_path}\nquery_limit = 20\n"
                         f"outdir = {tmp_path / 'eval'}\n")
    assert run(["eval", "--config", eval_cfg]) == 0
    summary = dict(line.split("=", 1) for line in
                   (tmp_path / "eval" / "summary.txt").read_text().splitlines())
    assert float(summary["map"]) > 0.9
    assert summary["query_count"] == "20"


def test_csv_route_end_to_end(tmp_path):
    synth_cfg = write_cfg(tmp_path / "synth.cfg",
                          "classes = 4\nper_class = 25\ndim = 6\nspread = 0.2\n"
                          f"data_seed = 8\noutdir = {tmp_path / 'data'}\n")
    assert run(["synth", "--config", synth_cfg]) == 0
    features = tmp_path / "data" / "features.csv"
    labels = tmp_path / "data" / "labels.csv"
    train_cfg = write_cfg(tmp_path / "train.cfg",
                          f"source = csv\nfeatures = {features}\nlabels = {labels}\n"
                          "anchors = 30\nsigma = 0.4\nmethod = fsdh\nbits = 16\n"
                          f"outdir = {tmp_path / 'run'}\n")
    assert run(["train", "--config", train_cfg]) == 0
    eval_cfg = write_cfg(tmp_path / "eval.cfg",
                         f"model = {tmp_path / 'run' / 'model.fsdh'}\n"
                         f"db_source = csv\ndb_features = {features}\ndb_labels = {labels}\n"
                         f"query_source = csv\nquery_features = {features}\n"
                         f"query_labels = {labels}\n"
                         f"outdir = {tmp_path / 'eval'}\n")
    assert run(["eval", "--config", eval_cfg]) == 0
    summary = dict(line.split("=", 1) for line in
                   (tmp_path / "eval" / "summary.txt").read_text().splitlines())
    assert float(summary["precision_at_radius"]) > 0.9


def test_config_file_syntax_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("this is not a key value line\n")
    assert run(["train", "--config", str(bad)]) == 2
    assert "error [config]" in capsys.readouterr().err


def test_inputs_are_not_mutated(tmp_path):
    features = tmp_path / "features.csv"
    features.write_text("1,2\n3,4\n5,6\n")
    labels = tmp_path / "labels.csv"
    labels.write_text("0\n1\n0\n")
    before = (features.read_bytes(), labels.read_bytes())
    cfg = write_cfg(tmp_path / "train.cfg",
                    f"source = csv\nfeatures = {features}\nlabels = {labels}\n"
                    "normalize = unit_norm\nanchors = 3\nsigma = 0.4\n"
                    f"method = fsdh\nbits = 2\noutdir = {tmp_path / 'run'}\n")
    assert run(["train", "--config", cfg]) == 0
    assert (features.read_bytes(), labels.read_bytes()) == before
