import json

import numpy as np
import pytest

from stackdet import cli
from stackdet.bank import apply_mnorm, compute_mnorm_stats, enroll, score_all
from stackdet.data import load_scores, save_embeddings
from stackdet.metrics import TrialLabel, stack_reduce, sweep_both
from stackdet.synth import PartitionSpec, PopulationConfig, generate_population


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Small population exported as the CSV files the CLI consumes."""
    root = tmp_path_factory.mktemp("cli")
    cfg = PopulationConfig(dimension=6, speaker_spread=1.0, channel_spread=0.8, seed=41)
    pop = generate_population(
        cfg,
        PartitionSpec(8, 5, 3, 20),
        PartitionSpec(8, 4, 1, 4),
        PartitionSpec(8, 30, 1, 30),
    )
    bl = set(pop.blacklist_speaker_ids)
    train_bl = pop.train.subset([s in bl for s in pop.train.speaker_ids])
    dev_bl = pop.dev.subset([s in bl for s in pop.dev.speaker_ids])
    save_embeddings(train_bl, root / "train_blacklist.csv")
    save_embeddings(dev_bl, root / "dev_blacklist.csv")
    save_embeddings(pop.test, root / "test_trials.csv")
    with (root / "test_labels.csv").open("w", encoding="utf-8", newline="") as f:
        for utt, spk in zip(pop.test.utterance_ids, pop.test.speaker_ids):
            f.write(f"{utt},{spk if spk is not None else '-'}\n")
    return root, pop, train_bl


def read_all_bytes(directory):
    return {
        p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()
    }


class TestEnroll:
    def test_creates_bank_and_stats(self, workspace, tmp_path, capsys):
        root, pop, train_bl = workspace
        out = tmp_path / "bank"
        rc = cli.main(
            ["enroll", "--train", str(root / "train_blacklist.csv"), "--out-dir", str(out)]
        )
        assert rc == 0
        assert (out / "bank.csv").exists() and (out / "mnorm.json").exists()
        assert capsys.readouterr().out.strip() == "enrolled S=8 D=6 cohort=24"

    def test_repeat_runs_are_byte_identical(self, workspace, tmp_path):
        root, _, _ = workspace
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert (
                cli.main(
                    [
                        "enroll",
                        "--train",
                        str(root / "train_blacklist.csv"),
                        "--out-dir",
                        str(out),
                    ]
                )
                == 0
            )
            outs.append(read_all_bytes(out))
        assert outs[0] == outs[1]

    def test_augment_extends_cohort(self, workspace, tmp_path, capsys):
        root, _, _ = workspace
        rc = cli.main(
            [
                "enroll",
                "--train",
                str(root / "train_blacklist.csv"),
                "--augment",
                str(root / "dev_blacklist.csv"),
                "--out-dir",
                str(tmp_path / "bank"),
            ]
        )
        assert rc == 0
        assert capsys.readouterr().out.strip() == "enrolled S=8 D=6 cohort=32"

    def test_unlabeled_row_is_an_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("u1,a,1.0,0.0\nu2,-,0.0,1.0\n", encoding="utf-8")
        rc = cli.main(
            ["enroll", "--train", str(bad), "--out-dir", str(tmp_path / "bank")]
        )
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error:")
        assert "u2" in err

    def test_bank_round_trips(self, workspace, tmp_path):
        root, _, train_bl = workspace
        out = tmp_path / "bank"
        cli.main(
            ["enroll", "--train", str(root / "train_blacklist.csv"), "--out-dir", str(out)]
        )
        loaded = cli.load_bank(out)
        direct = enroll(train_bl)
        assert loaded.speaker_ids == direct.speaker_ids
        assert loaded.directions.tobytes() == direct.directions.tobytes()
        direct_stats = compute_mnorm_stats(direct, train_bl)
        assert loaded.mnorm.mu.tobytes() == direct_stats.mu.tobytes()
        assert loaded.mnorm.sigma.tobytes() == direct_stats.sigma.tobytes()
        assert loaded.mnorm.cohort_size == direct_stats.cohort_size


@pytest.fixture(scope="module")
def bank_dir(workspace, tmp_path_factory):
    root, _, _ = workspace
    out = tmp_path_factory.mktemp("bank") / "bank"
    assert (
        cli.main(
            ["enroll", "--train", str(root / "train_blacklist.csv"), "--out-dir", str(out)]
        )
        == 0
    )
    return out


class TestScore:
    def test_matches_library_bit_exactly(self, workspace, bank_dir, tmp_path):
        root, pop, train_bl = workspace
        out = tmp_path / "scores.csv"
        rc = cli.main(
            [
                "score",
                "--bank",
                str(bank_dir),
                "--trials",
                str(root / "test_trials.csv"),
                "--out",
                str(out),
                "--norm-mode",
                "full",
            ]
        )
        assert rc == 0
        b = enroll(train_bl)
        expected = apply_mnorm(
            score_all(b, pop.test), compute_mnorm_stats(b, train_bl), "full"
        )
        got = load_scores(out)
        assert got.trial_ids == expected.trial_ids
        assert got.detector_ids == expected.detector_ids
        assert got.scores.tobytes() == expected.scores.tobytes()

    def test_norm_mode_changes_scores(self, workspace, bank_dir, tmp_path):
        root, _, _ = workspace
        args = [
            "score",
            "--bank",
            str(bank_dir),
            "--trials",
            str(root / "test_trials.csv"),
        ]
        assert cli.main(args + ["--out", str(tmp_path / "raw.csv"), "--norm-mode", "none"]) == 0
        assert cli.main(args + ["--out", str(tmp_path / "full.csv"), "--norm-mode", "full"]) == 0
        raw = load_scores(tmp_path / "raw.csv")
        full = load_scores(tmp_path / "full.csv")
        assert raw.detector_ids == full.detector_ids
        assert not np.array_equal(raw.scores, full.scores)


class TestEval:
    def run_eval(self, workspace, bank_dir, out, extra=()):
        root, _, _ = workspace
        return cli.main(
            [
                "eval",
                "--bank",
                str(bank_dir),
                "--trials",
                str(root / "test_trials.csv"),
                "--labels",
                str(root / "test_labels.csv"),
                "--out-dir",
                str(out),
                *extra,
            ]
        )

    def test_report_matches_library_pipeline(self, workspace, bank_dir, tmp_path):
        root, pop, train_bl = workspace
        assert self.run_eval(workspace, bank_dir, tmp_path / "out") == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text("utf-8"))
        b = enroll(train_bl)
        matrix = apply_mnorm(
            score_all(b, pop.test), compute_mnorm_stats(b, train_bl), "full"
        )
        index = {s: i for i, s in enumerate(b.speaker_ids)}
        labels = [
            TrialLabel(u, None if s is None else index[s])
            for u, s in zip(pop.test.utterance_ids, pop.test.speaker_ids)
        ]
        top_s, top_1 = sweep_both(stack_reduce(matrix), labels)
        assert report["mode_reports"]["top_s"]["eer"] == top_s.eer
        assert report["mode_reports"]["top_1"]["eer"] == top_1.eer
        assert report["mode_reports"]["top_s"]["counts"] == [8, 30]
        assert report["schema_version"] == 1
        assert report["timing"] is None
        assert (tmp_path / "out" / "det_top_s.csv").read_text("utf-8").startswith(
            "theta,p_fa,p_miss\n"
        )

    def test_byte_identical_across_runs_and_threads(self, workspace, bank_dir, tmp_path):
        assert self.run_eval(workspace, bank_dir, tmp_path / "a") == 0
        assert self.run_eval(workspace, bank_dir, tmp_path / "b") == 0
        assert self.run_eval(workspace, bank_dir, tmp_path / "c", ("--threads", "4")) == 0
        a = read_all_bytes(tmp_path / "a")
        assert a == read_all_bytes(tmp_path / "b")
        assert a == read_all_bytes(tmp_path / "c")

    def test_norm_modes_differ_only_via_score_transform(self, workspace, bank_dir, tmp_path):
        assert self.run_eval(workspace, bank_dir, tmp_path / "raw", ("--norm-mode", "none")) == 0
        assert self.run_eval(workspace, bank_dir, tmp_path / "full", ("--norm-mode", "full")) == 0
        raw = json.loads((tmp_path / "raw" / "report.json").read_text("utf-8"))
        full = json.loads((tmp_path / "full" / "report.json").read_text("utf-8"))
        assert raw.keys() == full.keys()
        for mode in ("top_s", "top_1"):
            assert raw["mode_reports"][mode]["counts"] == full["mode_reports"][mode]["counts"]
        assert (
            raw["mode_reports"]["top_s"]["eer_threshold"]
            != full["mode_reports"]["top_s"]["eer_threshold"]
        )

    def test_missing_label_is_an_error(self, workspace, bank_dir, tmp_path, capsys):
        root, _, _ = workspace
        labels = tmp_path / "incomplete.csv"
        lines = (root / "test_labels.csv").read_text("utf-8").splitlines()[:-1]
        labels.write_text("\n".join(lines) + "\n", encoding="utf-8")
        rc = cli.main(
            [
                "eval",
                "--bank",
                str(bank_dir),
                "--trials",
                str(root / "test_trials.csv"),
                "--labels",
                str(labels),
                "--out-dir",
                str(tmp_path / "out"),
            ]
        )
        assert rc == 1
        assert "missing label" in capsys.readouterr().err

    def test_unknown_truth_speaker_is_an_error(self, workspace, bank_dir, tmp_path, capsys):
        root, pop, _ = workspace
        labels = tmp_path / "bad.csv"
        rows = [f"{u},nobody" for u in pop.test.utterance_ids]
        labels.write_text("\n".join(rows) + "\n", encoding="utf-8")
        rc = cli.main(
            [
                "eval",
                "--bank",
                str(bank_dir),
                "--trials",
                str(root / "test_trials.csv"),
                "--labels",
                str(labels),
                "--out-dir",
                str(tmp_path / "out"),
            ]
        )
        assert rc == 1
        assert "not in the bank" in capsys.readouterr().err


class TestEvalFullScale:
    def test_full_benchmark_counts_match_library(self, tmp_path):
        # full trial/detector counts of the benchmark test partition
        cfg = PopulationConfig(dimension=32, channel_spread=3.0, seed=88)
        pop = generate_population(
            cfg,
            PartitionSpec(3631, 0, 3, 0),
            PartitionSpec(0, 0),
            PartitionSpec(3631, 12386, 1, 12386),
        )
        train_csv = tmp_path / "train.csv"
        trials_csv = tmp_path / "trials.csv"
        labels_csv = tmp_path / "labels.csv"
        save_embeddings(pop.train, train_csv)
        save_embeddings(pop.test, trials_csv)
        with labels_csv.open("w", encoding="utf-8", newline="") as f:
            for utt, spk in zip(pop.test.utterance_ids, pop.test.speaker_ids):
                f.write(f"{utt},{spk if spk is not None else '-'}\n")
        bank_dir = tmp_path / "bank"
        assert cli.main(["enroll", "--train", str(train_csv), "--out-dir", str(bank_dir)]) == 0
        assert cli.load_bank(bank_dir).mnorm.cohort_size == 10893
        out = tmp_path / "eval"
        assert cli.main(
            [
                "eval",
                "--bank", str(bank_dir),
                "--trials", str(trials_csv),
                "--labels", str(labels_csv),
                "--out-dir", str(out),
            ]
        ) == 0
        report = json.loads((out / "report.json").read_text("utf-8"))
        assert report["mode_reports"]["top_s"]["counts"] == [3631, 12386]

        b = enroll(pop.train)
        matrix = apply_mnorm(
            score_all(b, pop.test), compute_mnorm_stats(b, pop.train), "full"
        )
        index = {s: i for i, s in enumerate(b.speaker_ids)}
        labels = [
            TrialLabel(u, None if s is None else index[s])
            for u, s in zip(pop.test.utterance_ids, pop.test.speaker_ids)
        ]
        top_s, top_1 = sweep_both(stack_reduce(matrix), labels)
        assert report["mode_reports"]["top_s"]["eer"] == top_s.eer
        assert report["mode_reports"]["top_1"]["eer"] == top_1.eer
        assert report["mode_reports"]["top_1"]["eer_threshold"] == top_1.eer_threshold


class TestSimulate:
    def test_repeat_runs_identical_and_dominant(self, tmp_path):
        args = [
            "simulate",
            "--sizes",
            "5,8",
            "--replicates",
            "2",
            "--seed",
            "7",
            "--dimension",
            "8",
            "--channel-spread",
            "1.0",
        ]
        for name in ("a", "b"):
            assert cli.main(args + ["--out-dir", str(tmp_path / name)]) == 0
        a = read_all_bytes(tmp_path / "a")
        assert a == read_all_bytes(tmp_path / "b")
        rows = [
            line.split(",")
            for line in (tmp_path / "a" / "size_sweep.csv")
            .read_text("utf-8")
            .strip()
            .split("\n")[1:]
        ]
        assert [r[0] for r in rows] == ["5", "8"]
        for _, top_s, top_1 in rows:
            assert float(top_1) >= float(top_s) - 1e-12

    def test_default_size_list_has_six_rows(self, tmp_path):
        rc = cli.main(
            [
                "simulate",
                "--out-dir",
                str(tmp_path / "out"),
                "--dimension",
                "8",
                "--replicates",
                "1",
                "--seed",
                "3",
            ]
        )
        assert rc == 0
        lines = (
            (tmp_path / "out" / "size_sweep.csv").read_text("utf-8").strip().split("\n")
        )
        assert len(lines) == 1 + 6
        sidecar = json.loads((tmp_path / "out" / "size_sweep.json").read_text("utf-8"))
        assert sidecar["sizes"] == [10, 50, 100, 500, 1000, 3631]


class TestUsageErrors:
    def test_missing_required_flag_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["enroll", "--out-dir", "x"])
        assert exc.value.code == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_unknown_subcommand_exits_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_bad_size_list(self, tmp_path, capsys):
        rc = cli.main(
            ["simulate", "--out-dir", str(tmp_path), "--sizes", "5,x"]
        )
        assert rc == 1
        assert capsys.readouterr().err.startswith("error: bad size list")
