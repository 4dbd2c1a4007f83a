"""Command-line harness: enroll, score, eval, and simulate subcommands.

All outputs are deterministic given the flags: repeated runs produce
byte-identical files, and ``--threads`` never changes an output byte (it
only caps worker threads).  Wall-clock timings therefore go to stderr, not
into report files.  Errors are printed to stderr with an ``error:`` prefix
and a nonzero exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bank as bank_mod
from . import data, metrics, synth

SCHEMA_VERSION = 1
BANK_FILE = "bank.csv"
MNORM_FILE = "mnorm.json"
DEFAULT_DET_POINTS = 512


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # stable machine-parsable diagnostics
        self.exit(2, f"error: {message}\n")


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(part) for part in text.split(",") if part != ""]
    except ValueError:
        raise ValueError(f"bad size list {text!r}; expected comma-separated integers")
    if not sizes:
        raise ValueError("empty size list")
    return sizes


def save_bank(b: bank_mod.DetectorBank, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    as_set = data.EmbeddingSet(b.speaker_ids, b.speaker_ids, b.directions)
    data.save_embeddings(as_set, out_dir / BANK_FILE)
    if b.mnorm is None:
        raise ValueError("bank has no normalization statistics to persist")
    payload = {
        "schema_version": SCHEMA_VERSION,
        "cohort_size": b.mnorm.cohort_size,
        "detector_ids": list(b.speaker_ids),
        "mu": [float(v) for v in b.mnorm.mu],
        "sigma": [float(v) for v in b.mnorm.sigma],
    }
    with (out_dir / MNORM_FILE).open("w", encoding="utf-8", newline="") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_bank(bank_dir) -> bank_mod.DetectorBank:
    bank_dir = Path(bank_dir)
    bank_path = bank_dir / BANK_FILE
    if not bank_path.exists():
        raise ValueError(f"no {BANK_FILE} in {bank_dir}")
    as_set = data.load_embeddings(bank_path)
    b = bank_mod.DetectorBank(as_set.utterance_ids, as_set.vectors)
    stats_path = bank_dir / MNORM_FILE
    if stats_path.exists():
        with stats_path.open("r", encoding="utf-8") as f:
            payload = json.load(f)
        if tuple(payload["detector_ids"]) != b.speaker_ids:
            raise ValueError(f"{stats_path}: detector ids do not match {BANK_FILE}")
        stats = bank_mod.MNormStats(
            np.array(payload["mu"], dtype=np.float64),
            np.array(payload["sigma"], dtype=np.float64),
            int(payload["cohort_size"]),
        )
        b = b.with_mnorm(stats)
    return b


def _load_labels(path, b: bank_mod.DetectorBank) -> dict[str, int | None]:
    """Label CSV rows are ``utterance_id,truth`` with ``-`` for background."""
    index = {spk: i for i, spk in enumerate(b.speaker_ids)}
    mapping: dict[str, int | None] = {}
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        for rownum, rec in enumerate(csv.reader(f), start=1):
            if len(rec) != 2:
                raise data.DataFormatError(
                    f"{path}: row {rownum}: expected utterance_id,truth"
                )
            utt, truth = rec
            if utt in mapping:
                raise data.DataFormatError(
                    f"{path}: row {rownum}: duplicate label for {utt!r}"
                )
            if truth == data.UNLABELED:
                mapping[utt] = None
            elif truth in index:
                mapping[utt] = index[truth]
            else:
                raise ValueError(
                    f"{path}: row {rownum}: truth speaker {truth!r} is not in the bank"
                )
    return mapping


def _scored_matrix(b, trials, norm_mode, threads):
    matrix = bank_mod.score_all(b, trials, threads=threads)
    if norm_mode != "none":
        if b.mnorm is None:
            raise ValueError(
                f"normalization mode {norm_mode!r} needs {MNORM_FILE} in the bank directory"
            )
        matrix = bank_mod.apply_mnorm(matrix, b.mnorm, norm_mode)
    return matrix


def cmd_enroll(args) -> int:
    train = data.load_embeddings(args.train)
    augment = data.load_embeddings(args.augment) if args.augment else None
    b = bank_mod.enroll(train, augment)
    cohort = train if augment is None else data.concatenate([train, augment])
    stats = bank_mod.compute_mnorm_stats(b, cohort, threads=args.threads)
    save_bank(b.with_mnorm(stats), Path(args.out_dir))
    print(f"enrolled S={len(b)} D={b.dimension} cohort={stats.cohort_size}")
    return 0


def cmd_score(args) -> int:
    b = load_bank(args.bank)
    trials = data.load_embeddings(args.trials, expected_dimension=b.dimension)
    matrix = _scored_matrix(b, trials, args.norm_mode, args.threads)
    data.save_scores(matrix, args.out)
    print(f"scored trials={matrix.n_trials} detectors={matrix.n_detectors}")
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    b = load_bank(args.bank)
    trials = data.load_embeddings(args.trials, expected_dimension=b.dimension)
    mapping = _load_labels(args.labels, b)
    labels = []
    for utt in trials.utterance_ids:
        if utt not in mapping:
            raise ValueError(f"{args.labels}: missing label for trial {utt!r}")
        labels.append(metrics.TrialLabel(utt, mapping[utt]))
    matrix = _scored_matrix(b, trials, args.norm_mode, args.threads)
    stack = metrics.stack_reduce(matrix)
    top_s, top_1 = metrics.sweep_both(stack, labels)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema_version": SCHEMA_VERSION,
        # threads deliberately omitted: outputs must not depend on it
        "config": {
            "subcommand": "eval",
            "bank": str(args.bank),
            "trials": str(args.trials),
            "labels": str(args.labels),
            "norm_mode": args.norm_mode,
            "det_points": args.det_points,
        },
        "mode_reports": {"top_s": top_s.to_dict(), "top_1": top_1.to_dict()},
        # wall-clock goes to stderr so repeated runs stay byte-identical
        "timing": None,
    }
    with (out_dir / "report.json").open("w", encoding="utf-8", newline="") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    for rep, name in ((top_s, "det_top_s.csv"), (top_1, "det_top_1.csv")):
        metrics.save_det_points(
            metrics.det_points(rep, args.det_points), out_dir / name
        )
    print(f"top_s_eer={top_s.eer!r} top_1_eer={top_1.eer!r}")
    print(
        f"timing: eval took {time.perf_counter() - started:.3f}s", file=sys.stderr
    )
    return 0


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    sizes = _parse_sizes(args.sizes)
    config = synth.PopulationConfig(
        dimension=args.dimension,
        speaker_spread=args.speaker_spread,
        channel_spread=args.channel_spread,
        seed=args.seed,
    )
    test_spec = synth.default_partition_specs()[2]
    if max(sizes) > test_spec.blacklist_speakers:
        test_spec = synth.PartitionSpec(
            max(sizes),
            test_spec.background_speakers,
            test_spec.blacklist_utts_per_speaker,
            test_spec.background_utts,
        )
    result = synth.run_size_sweep(
        config,
        sizes,
        args.replicates,
        test_spec,
        norm_mode=args.norm_mode,
        threads=args.threads,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth.save_size_sweep(
        result,
        out_dir / "size_sweep.csv",
        out_dir / "size_sweep.json",
        config={
            "subcommand": "simulate",
            "dimension": config.dimension,
            "speaker_spread": config.speaker_spread,
            "channel_spread": config.channel_spread,
            "seed": config.seed,
            "sizes": sizes,
            "replicates": args.replicates,
            "norm_mode": args.norm_mode,
            "test_spec": {
                "blacklist_speakers": test_spec.blacklist_speakers,
                "background_speakers": test_spec.background_speakers,
                "blacklist_utts_per_speaker": test_spec.blacklist_utts_per_speaker,
                "background_utts": test_spec.background_utts,
            },
        },
    )
    for k, s, o in zip(result.sizes, result.top_s_eer, result.top_1_eer):
        print(f"size={k} top_s_eer={float(s):.6f} top_1_eer={float(o):.6f}")
    print(
        f"timing: simulate took {time.perf_counter() - started:.3f}s",
        file=sys.stderr,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="stackdet",
        description="Multi-target (blacklist) speaker detection workflows",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_threads(p):
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="worker thread cap; never changes any output byte",
        )

    def add_norm(p):
        p.add_argument(
            "--norm-mode",
            choices=bank_mod.NORM_MODES,
            default="full",
            help="score normalization applied after raw scoring",
        )

    p = sub.add_parser("enroll", help="build a detector bank from labeled utterances")
    p.add_argument("--train", required=True, help="labeled embedding CSV to enroll")
    p.add_argument("--augment", help="optional extra labeled embedding CSV to pool in")
    p.add_argument("--out-dir", required=True, help="directory for bank.csv + mnorm.json")
    add_threads(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("score", help="score trials against a bank into a CSV")
    p.add_argument("--bank", required=True, help="bank directory written by enroll")
    p.add_argument("--trials", required=True, help="embedding CSV of trials")
    p.add_argument("--out", required=True, help="output score CSV path")
    add_norm(p)
    add_threads(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="run both stack-detector sweeps and write reports")
    p.add_argument("--bank", required=True, help="bank directory written by enroll")
    p.add_argument("--trials", required=True, help="embedding CSV of trials")
    p.add_argument("--labels", required=True, help="CSV of utterance_id,truth ('-' = background)")
    p.add_argument("--out-dir", required=True, help="directory for report.json + DET CSVs")
    p.add_argument(
        "--det-points",
        type=int,
        default=DEFAULT_DET_POINTS,
        help="maximum operating points per DET CSV",
    )
    add_norm(p)
    add_threads(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run the synthetic blacklist-size experiment")
    p.add_argument("--out-dir", required=True, help="directory for size_sweep.csv/.json")
    p.add_argument(
        "--sizes",
        default=",".join(str(k) for k in synth.DEFAULT_SWEEP_SIZES),
        help="comma-separated nondecreasing blacklist sizes",
    )
    p.add_argument("--replicates", type=int, default=synth.DEFAULT_SWEEP_REPLICATES)
    p.add_argument("--seed", type=int, default=synth.DEFAULT_SEED)
    p.add_argument("--dimension", type=int, default=synth.DEFAULT_DIMENSION)
    p.add_argument("--speaker-spread", type=float, default=synth.DEFAULT_SPEAKER_SPREAD)
    p.add_argument("--channel-spread", type=float, default=synth.DEFAULT_CHANNEL_SPREAD)
    p.add_argument(
        "--norm-mode",
        choices=bank_mod.NORM_MODES,
        default="none",
        help="score normalization inside the sweep",
    )
    add_threads(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
