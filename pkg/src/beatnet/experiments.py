"""The three-experiment protocol and its run-directory bookkeeping.

Experiment 1 trains from scratch on the NormalSinus+LongTerm subset and
reports metrics on its Train and Test partitions. Experiment 2 takes
the experiment-1 checkpoint as-is and evaluates it on every other
subset's Test partition. Experiment 3 fine-tunes that checkpoint's FC
head (conv trunk frozen) on each target subset's Train partition, then
reports on Train and Test.

Every run directory receives: the resolved config snapshot, a
run_info.json with content hashes of the caches and checkpoints used
(no timestamps, so reruns are byte-comparable), reports as CSV + JSON,
and an SVG chart. Training logs include wall-clock times and are the
one deliberately non-reproducible file.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chart import render_mcc_chart
from .config import Settings, render_snapshot
from .errors import (
    DataError,
    MissingCache,
    MissingCheckpoint,
    NoReportsFound,
    UsageError,
)
from .metrics import EvalReport, build_report, reports_from_json, \
    reports_to_csv, reports_to_json
from .nn import predict_labels
from .records import load_manifest, load_record
from .segments import (
    SUBSET_NAMES,
    TEST,
    TRAIN,
    LabeledDataset,
    build_subsets,
    load_cache,
    save_cache,
    stats_csv,
)
from .synthetic import make_synthetic_records
from .train import TrainConfig, load_checkpoint, save_checkpoint, train, transfer

SOURCE_SUBSET = "NormalSinus+LongTerm"

STATS_FILE = "dataset_stats.csv"
REPORTS_CSV = "reports.csv"
REPORTS_JSON = "reports.json"
CHART_FILE = "mcc_chart.svg"
CONFIG_SNAPSHOT = "config.ini"
RUN_INFO = "run_info.json"
EXP1_CHECKPOINT = "checkpoint.hbdl"


def subset_slug(subset: str) -> str:
    """Filesystem-safe lowercase name for a subset."""
    return re.sub(r"[^a-z0-9]+", "-", subset.lower()).strip("-")


def cache_file(cache_dir: Path, subset: str, partition: str) -> Path:
    return Path(cache_dir) / f"{subset_slug(subset)}.{partition.lower()}.hbds"


def load_cache_checked(cache_dir: Path, subset: str,
                        partition: str) -> LabeledDataset:
    path = cache_file(cache_dir, subset, partition)
    if not path.exists():
        raise MissingCache(f"no cache for {subset} {partition} at {path}; "
                           f"run ingest or build-dataset first")
    ds = load_cache(path)
    if ds.subset_name != subset or ds.partition != partition:
        raise MissingCache(f"cache {path} holds {ds.subset_name} "
                           f"{ds.partition}, expected {subset} {partition}")
    return ds


def _write_caches(datasets: dict, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    ordered = [datasets[key] for key in sorted(datasets)]
    for ds in ordered:
        path = cache_file(out_dir, ds.subset_name, ds.partition)
        save_cache(ds, path)
        written.append(path)
    (out_dir / STATS_FILE).write_text(stats_csv(ordered))
    return written


def run_ingest(manifest_path, out_dir, settings: Settings) -> list[Path]:
    """Decode every manifest record, build all subsets, write the caches.

    Any per-record failure aborts the run with the record id in the
    message; nothing is skipped silently.
    """
    sources, root = load_manifest(manifest_path)
    records = []
    for source in sources:
        try:
            records.append(load_record(source, root, settings.beat_codes))
        except DataError as exc:
            raise type(exc)(f"record {source.record_id!r}: {exc}") from exc
    datasets = build_subsets(records, settings.train_fraction, settings.seed,
                             settings.max_record_seconds)
    return _write_caches(datasets, Path(out_dir))


def build_synthetic_caches(out_dir, settings: Settings, n_subjects: int = 4,
                           duration: float = 12.5, fs: float = 250.0,
                           seed: int = 0,
                           tags=("NormalSinus", "LongTerm")) -> list[Path]:
    """Synthetic stand-in for ingest: same cache layout, generated data."""
    records = make_synthetic_records(n_subjects, duration, fs, seed, tags)
    datasets = build_subsets(records, settings.train_fraction, seed,
                             settings.max_record_seconds)
    return _write_caches(datasets, Path(out_dir))


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved plan for one experiment run."""

    experiment_id: int
    source_subset: str
    target_subsets: tuple
    train_config: TrainConfig
    out_dir: Path

    def __post_init__(self):
        if self.experiment_id not in (1, 2, 3):
            raise UsageError(f"experiment id must be 1, 2 or 3, got "
                             f"{self.experiment_id}")


def _file_hash(path: Path) -> str:
    return hashlib.blake2b(path.read_bytes(), digest_size=16).hexdigest()


def evaluate_dataset(params, net_config, dataset: LabeledDataset,
              settings: Settings, seed: int) -> EvalReport:
    preds = predict_labels(net_config, params, dataset.X)
    return build_report(preds, dataset.y.astype(np.int64),
                        dataset.subset_name, dataset.partition,
                        settings.bootstrap_reps, settings.bootstrap_fraction,
                        seed)


def _present_targets(cache_dir: Path, partitions) -> list[str]:
    """Non-source subsets whose caches exist for all wanted partitions."""
    out = []
    for subset in SUBSET_NAMES:
        if subset == SOURCE_SUBSET:
            continue
        if all(cache_file(cache_dir, subset, p).exists() for p in partitions):
            out.append(subset)
    return out


def _finish_run(spec: ExperimentSpec, settings: Settings, seed: int,
                reports: list[EvalReport], cache_paths: list[Path],
                checkpoint_paths: list[Path]) -> None:
    out = spec.out_dir
    (out / REPORTS_CSV).write_text(reports_to_csv(reports))
    (out / REPORTS_JSON).write_text(reports_to_json(reports))
    (out / CHART_FILE).write_text(render_mcc_chart(
        reports, f"Experiment {spec.experiment_id}: MCC with 90% CIs"))
    (out / CONFIG_SNAPSHOT).write_text(render_snapshot(settings, seed))
    info = {
        "experiment": spec.experiment_id,
        "seed": seed,
        "source_subset": spec.source_subset,
        "target_subsets": list(spec.target_subsets),
        "caches": {p.name: _file_hash(p) for p in cache_paths},
        "checkpoints": {p.name: _file_hash(p) for p in checkpoint_paths},
    }
    (out / RUN_INFO).write_text(json.dumps(info, indent=2, sort_keys=True)
                                + "\n")


def run_experiment(experiment_id: int, cache_dir, out_dir,
                   settings: Settings, seed: int | None = None,
                   checkpoint=None) -> list[EvalReport]:
    """Run one experiment end to end; returns its reports.

    ``checkpoint`` (the experiment-1 output) is required for experiments
    2 and 3. Target subsets without caches are skipped so the protocol
    runs on whichever datasets are actually present; having none at all
    is an error.
    """
    if experiment_id not in (1, 2, 3):
        raise UsageError(f"experiment id must be 1, 2 or 3, got "
                         f"{experiment_id}")
    cache_dir = Path(cache_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eff_seed = settings.seed if seed is None else seed

    if experiment_id == 1:
        spec = ExperimentSpec(1, SOURCE_SUBSET, (),
                              settings.train_config(eff_seed), out_dir)
        return _run_experiment1(spec, cache_dir, settings, eff_seed)
    if checkpoint is None:
        raise MissingCheckpoint(
            f"experiment {experiment_id} needs the experiment-1 checkpoint "
            f"(--checkpoint)")
    checkpoint = Path(checkpoint)
    if not checkpoint.exists():
        raise MissingCheckpoint(f"checkpoint {checkpoint} does not exist")
    if experiment_id == 2:
        targets = _present_targets(cache_dir, (TEST,))
        if not targets:
            raise MissingCache(f"no target subset caches in {cache_dir}")
        spec = ExperimentSpec(2, SOURCE_SUBSET, tuple(targets),
                              settings.train_config(eff_seed), out_dir)
        return _run_experiment2(spec, cache_dir, settings, eff_seed,
                                checkpoint)
    targets = _present_targets(cache_dir, (TRAIN, TEST))
    if not targets:
        raise MissingCache(f"no target subset caches in {cache_dir}")
    spec = ExperimentSpec(3, SOURCE_SUBSET, tuple(targets),
                          settings.train_config(eff_seed, freeze_conv=True),
                          out_dir)
    return _run_experiment3(spec, cache_dir, settings, eff_seed, checkpoint)


def _run_experiment1(spec: ExperimentSpec, cache_dir: Path,
                     settings: Settings, seed: int) -> list[EvalReport]:
    train_ds = load_cache_checked(cache_dir, spec.source_subset, TRAIN)
    test_ds = load_cache_checked(cache_dir, spec.source_subset, TEST)
    params, history = train(train_ds, spec.train_config)
    ckpt = spec.out_dir / EXP1_CHECKPOINT
    save_checkpoint(params, spec.train_config.network, ckpt)
    (spec.out_dir / "train_log.csv").write_text(history.to_csv())
    reports = [
        evaluate_dataset(params, spec.train_config.network, train_ds, settings, seed),
        evaluate_dataset(params, spec.train_config.network, test_ds, settings, seed),
    ]
    _finish_run(spec, settings, seed, reports,
                [cache_file(cache_dir, spec.source_subset, p)
                 for p in (TRAIN, TEST)], [ckpt])
    return reports


def _run_experiment2(spec: ExperimentSpec, cache_dir: Path,
                     settings: Settings, seed: int,
                     checkpoint: Path) -> list[EvalReport]:
    params, net_config = load_checkpoint(checkpoint)
    reports = []
    caches = []
    for subset in spec.target_subsets:
        ds = load_cache_checked(cache_dir, subset, TEST)
        caches.append(cache_file(cache_dir, subset, TEST))
        reports.append(evaluate_dataset(params, net_config, ds, settings, seed))
    _finish_run(spec, settings, seed, reports, caches, [checkpoint])
    return reports


def _run_experiment3(spec: ExperimentSpec, cache_dir: Path,
                     settings: Settings, seed: int,
                     checkpoint: Path) -> list[EvalReport]:
    reports = []
    caches = []
    checkpoints = [checkpoint]
    for subset in spec.target_subsets:
        train_ds = load_cache_checked(cache_dir, subset, TRAIN)
        test_ds = load_cache_checked(cache_dir, subset, TEST)
        caches.extend(cache_file(cache_dir, subset, p)
                      for p in (TRAIN, TEST))
        params, history = transfer(checkpoint, train_ds, spec.train_config)
        slug = subset_slug(subset)
        ckpt = spec.out_dir / f"checkpoint_{slug}.hbdl"
        save_checkpoint(params, spec.train_config.network, ckpt)
        checkpoints.append(ckpt)
        (spec.out_dir / f"train_log_{slug}.csv").write_text(history.to_csv())
        net = spec.train_config.network
        reports.append(evaluate_dataset(params, net, train_ds, settings, seed))
        reports.append(evaluate_dataset(params, net, test_ds, settings, seed))
    _finish_run(spec, settings, seed, reports, caches, checkpoints)
    return reports


def consolidate_reports(run_dir) -> tuple[str, str]:
    """Merge every reports.json under ``run_dir`` into one summary.

    Returns (markdown, csv) and raises NoReportsFound when the scan
    comes up empty. Sections are ordered by directory name.
    """
    run_dir = Path(run_dir)
    found = sorted(run_dir.glob(f"**/{REPORTS_JSON}"))
    if not found:
        raise NoReportsFound(f"no {REPORTS_JSON} anywhere under {run_dir}")

    md = ["# Beat detection results", ""]
    csv_lines = ["source,subset,partition,n_segments,metric,point,"
                 "boot_mean,ci_low,ci_high"]
    for path in found:
        reports = reports_from_json(path.read_text())
        rel = path.parent.relative_to(run_dir)
        name = str(rel) if str(rel) != "." else run_dir.name
        md.append(f"## {name}")
        md.append("")
        info_path = path.parent / RUN_INFO
        if info_path.exists():
            info = json.loads(info_path.read_text())
            md.append(f"Experiment {info.get('experiment', '?')}, "
                      f"seed {info.get('seed', '?')}.")
            md.append("")
        snap_path = path.parent / CONFIG_SNAPSHOT
        if snap_path.exists():
            net_lines = _network_section(snap_path.read_text())
            if net_lines:
                md.append("Network: " + "; ".join(net_lines) + ".")
                md.append("")
        md.append("| subset | partition | segments | MCC [90% CI] | +p | "
                  "Se | F1 |")
        md.append("|---|---|---|---|---|---|---|")
        for r in reports:
            m = r.metrics
            md.append(
                f"| {r.subset_name} | {r.partition} | {r.n_segments} | "
                f"{m['mcc'].point:.3f} [{m['mcc'].ci_low:.3f}, "
                f"{m['mcc'].ci_high:.3f}] | {m['precision'].point:.3f} | "
                f"{m['sensitivity'].point:.3f} | {m['f1'].point:.3f} |")
            for metric_name, mc in m.items():
                csv_lines.append(
                    f"{name},{r.subset_name},{r.partition},{r.n_segments},"
                    f"{metric_name},{mc.point:.6f},{mc.boot_mean:.6f},"
                    f"{mc.ci_low:.6f},{mc.ci_high:.6f}")
        md.append("")
    return "\n".join(md) + "\n", "\n".join(csv_lines) + "\n"


def _network_section(snapshot_text: str) -> list[str]:
    lines = []
    in_network = False
    for line in snapshot_text.splitlines():
        line = line.strip()
        if line.startswith("["):
            in_network = line == "[network]"
            continue
        if in_network and line:
            lines.append(line.replace(" = ", "="))
    return lines


def write_summary(run_dir) -> tuple[Path, Path]:
    """Write summary.md and summary.csv into ``run_dir``."""
    md, csv_text = consolidate_reports(run_dir)
    run_dir = Path(run_dir)
    md_path = run_dir / "summary.md"
    csv_path = run_dir / "summary.csv"
    md_path.write_text(md)
    csv_path.write_text(csv_text)
    return md_path, csv_path
