from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfaec import cli
from mfaec.harness import (
    Checkpoint,
    CheckpointError,
    MetricsReport,
    MissingParameterError,
    NonFiniteLossError,
    TrainConfig,
    ablate,
    confusion_matrix,
    evaluate,
    load_checkpoint,
    load_train_config,
    read_ablation_csv,
    read_metrics_csv,
    save_checkpoint,
    train,
    uar_from_confusion,
    write_metrics_csv,
)
from mfaec.harness.checkpoint import from_bytes, to_bytes
from mfaec.kvconfig import ConfigError, to_kv
from mfaec.model import init_params
from mfaec.synthdata import read_corpus

from conftest import tiny_config


@pytest.fixture(scope="module")
def base():
    return TrainConfig(model=tiny_config(), epochs=2, batch_size=8, lr=1e-2, timing=False)


@pytest.fixture(scope="module")
def trained(base, tiny_examples):
    return train(base, tiny_examples[:24], tiny_examples[24:])


class TestMetrics:
    def test_perfect(self):
        r = MetricsReport.from_predictions([0, 1, 2, 3, 1], [0, 1, 2, 3, 1], 4)
        assert r.uar == 1.0
        assert np.array_equal(r.confusion, np.diag([1, 2, 1, 1]))

    def test_two_class_recalls(self):
        r = MetricsReport.from_predictions([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert r.recalls == [0.5, 1.0] and r.uar == 0.75

    def test_constant_predictor(self):
        gold = np.repeat(np.arange(4), 5)
        assert MetricsReport.from_predictions(gold, np.zeros(20, int), 4).uar == 0.25

    def test_absent_class_ignored(self):
        r = MetricsReport.from_predictions([0, 0, 1], [0, 0, 0], 3)
        assert np.isnan(r.recalls[2]) and r.uar == 0.5

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40),
           st.permutations(range(4)))
    def test_relabeling_invariance(self, pairs, perm):
        gold, pred = zip(*pairs)
        a = uar_from_confusion(confusion_matrix(gold, pred, 4))
        b = uar_from_confusion(confusion_matrix([perm[g] for g in gold], [perm[p] for p in pred], 4))
        assert a == pytest.approx(b, abs=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
    def test_uar_brute_force(self, pairs):
        gold, pred = zip(*pairs)
        r = MetricsReport.from_predictions(gold, pred, 4)
        assert r.confusion.sum(axis=1).tolist() == [gold.count(c) for c in range(4)]
        recalls = [sum(g == p == c for g, p in pairs) / gold.count(c)
                   for c in range(4) if gold.count(c)]
        assert r.uar == pytest.approx(sum(recalls) / len(recalls), abs=1e-15)

    def test_csv_round_trip(self, tmp_path):
        r = MetricsReport.from_predictions([0, 1, 1], [0, 1, 0], 2, loss_emo=0.1 + 0.2, epoch=3)
        path = tmp_path / "m.csv"
        write_metrics_csv(path, [r.row("x", "full", 7)], 2)
        assert path.read_text().splitlines()[0] == (
            "run_id,mode,seed,epoch,uar,recall_0,recall_1,loss_emo,loss_d,loss_e,wall_s")
        back = read_metrics_csv(path)[0]
        assert back["loss_emo"] == 0.1 + 0.2 and back["uar"] == 0.75 and back["seed"] == 7


class TestTrain:
    def test_zero_epochs(self, base, tiny_examples):
        result = train(replace(base, epochs=0), tiny_examples)
        assert result.metrics == []
        init = init_params(base.model, "full", np.random.default_rng(base.seed))
        assert all(np.array_equal(result.checkpoint.params[k], init[k].data) for k in init)

    def test_reports_per_epoch(self, trained):
        assert [m.epoch for m in trained.metrics] == [1, 2]
        assert all(m.wall_s == 0.0 for m in trained.metrics)
        assert trained.checkpoint.step == 2 * 3

    def test_eval_interval(self, base, tiny_examples):
        result = train(replace(base, epochs=3, eval_interval=2), tiny_examples[:8])
        assert [m.epoch for m in result.metrics] == [2, 3]

    def test_deterministic(self, base, tiny_examples, trained):
        again = train(base, tiny_examples[:24], tiny_examples[24:])
        assert to_bytes(again.checkpoint) == to_bytes(trained.checkpoint)
        assert all(a.same_as(b, ignore_time=False) for a, b in zip(again.metrics, trained.metrics))

    def test_non_finite_loss(self, base, tiny_examples):
        bad = list(tiny_examples[:8])
        bad[5] = replace(bad[5], frames=np.full_like(bad[5].frames, np.nan))
        with pytest.raises(NonFiniteLossError, match="batch"):
            train(replace(base, epochs=1, batch_size=4), bad)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TrainConfig(beta=-1)
        with pytest.raises(ValueError):
            TrainConfig(mode="no-cme")

    def test_config_file(self, tmp_path):
        path = tmp_path / "t.cfg"
        path.write_text("# run\nepochs = 3\nlr = 0.01\nmode = no-mf\nmodel.d = 16\nmodel.h = 2\n")
        cfg = load_train_config(path)
        assert (cfg.epochs, cfg.lr, cfg.mode, cfg.model.d, cfg.model.h) == (3, 0.01, "no-mf", 16, 2)
        path.write_text(to_kv(cfg) + "bogus = 1\n")
        with pytest.raises(ConfigError, match="bogus"):
            load_train_config(path)


class TestEvaluate:
    def test_thread_count_invariant(self, trained, tiny_examples):
        reports = [evaluate(trained.checkpoint, tiny_examples, batch_size=4, workers=w) for w in (1, 3)]
        assert reports[0].same_as(reports[1])

    def test_stripped_checkpoint_identical(self, trained, tiny_examples):
        full = evaluate(trained.checkpoint, tiny_examples)
        stripped = evaluate(trained.checkpoint.stripped(), tiny_examples)
        assert full.same_as(stripped, ignore_time=False)

    def test_missing_parameters(self, base, tiny_examples):
        no_mf = train(replace(base, epochs=0, mode="no-mf"), tiny_examples).checkpoint
        with pytest.raises(MissingParameterError):
            evaluate(no_mf, tiny_examples, mode="full")

    def test_empty_data(self, trained):
        with pytest.raises(ValueError):
            evaluate(trained.checkpoint, [])


class TestCheckpoint:
    def test_round_trip_byte_identical(self, trained, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(trained.checkpoint, a)
        loaded = load_checkpoint(a)
        save_checkpoint(loaded, b)
        assert a.read_bytes() == b.read_bytes()
        assert loaded.step == trained.checkpoint.step
        assert loaded.rng_state == trained.checkpoint.rng_state
        for k, v in trained.checkpoint.params.items():
            assert loaded.params[k].tobytes() == v.tobytes()

    def test_strip_aux(self, trained, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(trained.checkpoint, path)
        stripped = load_checkpoint(path, strip_aux=True)
        assert not stripped.has_aux and trained.checkpoint.has_aux
        assert len(to_bytes(stripped)) < path.stat().st_size

    @pytest.mark.parametrize("damage,match", [
        (lambda raw: b"XFAEC" + raw[5:], "magic"),
        (lambda raw: raw[:5] + b"\x02\x00" + raw[7:], "version"),
        (lambda raw: raw[:-8], "truncated"),
        (lambda raw: raw[:9], "truncated"),
        (lambda raw: raw.replace(b'"cls.b"', b'"cls.q"'), "unknown tensor"),
    ])
    def test_rejects_damage(self, trained, damage, match):
        with pytest.raises(CheckpointError, match=match):
            from_bytes(damage(to_bytes(trained.checkpoint)))

    def test_unknown_name_on_save(self, trained):
        ck = trained.checkpoint
        bad = Checkpoint(ck.config, ck.mode, {**ck.params, "extra.w": np.zeros(2)})
        with pytest.raises(CheckpointError, match="unknown"):
            to_bytes(bad)


class TestAblate:
    def test_single_run_matches_direct(self, base, tiny_examples, tmp_path):
        table = ablate(base, ["full"], [7], tiny_examples[:24], tiny_examples[24:], tmp_path / "a.csv")
        direct = train(replace(base, seed=7), tiny_examples[:24], tiny_examples[24:])
        assert len(table.runs) == 1
        assert table.runs[0].report.same_as(direct.metrics[-1], ignore_time=False)
        assert table.medians() == {"full": direct.metrics[-1].uar}
        assert read_ablation_csv(tmp_path / "a.csv") == table.rows()

    def test_needs_modes_and_seeds(self, base):
        with pytest.raises(ValueError):
            ablate(base, [], [1], [])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.kv").write_text("vocab_size = 12\nkeywords_per_emotion = 1\nmin_len = 3\n"
                               "max_len = 4\nframe_dim = 3\nframes_per_token = 2\n")
    (d / "corrupt.kv").write_text("p_sub = 0.2\np_ins = 0.1\n")
    (d / "train.cfg").write_text(
        "epochs = 1\nbatch_size = 8\ntiming = false\nrun_id = cli\n"
        "model.d = 8\nmodel.h = 2\nmodel.enc_layers_speech = 1\nmodel.enc_layers_text = 1\n"
        "model.frame_dim = 3\nmodel.vocab_size = 12\nmodel.d_ff = 8\nmodel.d_max = 4\n")
    return d


class TestCLI:
    def test_pipeline(self, workspace, capsys):
        d = workspace
        assert cli.main(["gen-data", "--spec", str(d / "spec.kv"), "--corrupt", str(d / "corrupt.kv"),
                         "--n", "20", "--out", str(d / "c.tsv"), "--seed", "3"]) == 0
        corpus = read_corpus(d / "c.tsv")
        assert len(corpus) == 20 and all(len(ex.transcript) <= 4 for ex in corpus)

        assert cli.main(["train", "--config", str(d / "train.cfg"), "--data", str(d / "c.tsv"),
                         "--out", str(d / "m.ckpt"), "--metrics", str(d / "train.csv")]) == 0
        assert len(read_metrics_csv(d / "train.csv")) == 1

        for flag, name in (([], "full.csv"), (["--strip-aux"], "strip.csv")):
            assert cli.main(["eval", "--ckpt", str(d / "m.ckpt"), "--data", str(d / "c.tsv"),
                             "--metrics", str(d / name)] + flag) == 0
        assert (d / "full.csv").read_bytes() == (d / "strip.csv").read_bytes()
        assert "UAR" in capsys.readouterr().out

        assert cli.main(["ablate", "--config", str(d / "train.cfg"), "--modes", "full,no-mf",
                         "--seeds", "1", "--data", str(d / "c.tsv"), "--out", str(d / "abl.csv")]) == 0
        assert [r["mode"] for r in read_ablation_csv(d / "abl.csv")] == ["full", "no-mf"]

    def test_align(self, tmp_path):
        (tmp_path / "hyp").write_text("u1\ta x c\nu2\t\nu3\ta c\n")
        (tmp_path / "ref").write_text("u1\ta b c\nu2\ta\nu3\ta b c\n")
        out = tmp_path / "out"
        assert cli.main(["align", "--hyp", str(tmp_path / "hyp"), "--ref", str(tmp_path / "ref"),
                         "--out", str(out)]) == 0
        assert out.read_text().splitlines() == [
            "u1\tK C K\t1:b", "u2\tUNALIGNABLE\t", "u3\tK C\t1:b c"]

    @pytest.mark.parametrize("argv", [
        ["eval", "--ckpt", "/nonexistent.ckpt", "--data", "/nonexistent.tsv"],
        ["train", "--config", "/nonexistent.cfg", "--out", "/tmp/x"],
        ["gen-data", "--n", "0", "--out", "/tmp/never.tsv"],
    ])
    def test_errors_exit_nonzero(self, argv, capsys):
        assert cli.main(argv) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_checkpoint_exit_code(self, tmp_path):
        (tmp_path / "junk.ckpt").write_bytes(b"not a checkpoint at all")
        assert cli.main(["eval", "--ckpt", str(tmp_path / "junk.ckpt"),
                         "--data", str(tmp_path / "c.tsv")]) == 1
