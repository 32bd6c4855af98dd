#!/usr/bin/env python3
"""
Main orchestrator for the cavitation detection pipeline.
This module coordinates all stages: loading, splitting, windowing, feature
extraction, feature engineering, boosting, prediction and evaluation.
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from evaluation import EvalReport, correlation_summary, evaluate, subsequence_correlation
from feature_engineering import run_asfe
from feature_extractor import FeatureTable, featurize_segments
from generate_synthetic_data import (
    BENCH_COUNTS,
    FULL_SIGNAL_LENGTH,
    SynthSpec,
    SyntheticDatasetGenerator,
)
from gradient_boosting import GbtModel, predict, train
from pipeline_config import PipelineConfig, load_config
from pipeline_errors import ConfigError, DataError, PipelineError
from report_generator import EvalReportGenerator, write_grid
from signal_dataset import (
    DatasetManifest,
    SignalRecord,
    SplitAssignment,
    get_task,
    load_manifest,
    load_records,
    split_records,
)
from sliding_window import (
    BENCH_WINDOW_SIZES,
    count_segments,
    read_segment_index,
    segment_dataset,
    write_segments,
)
from verify_outputs import OutputVerifier

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "window_size", "k", "train_segments", "test_segments", "features",
    "accuracy", "macro_precision", "macro_recall", "macro_f1", "auc",
]
ABLATION_COLUMNS = ["configuration", "window_size", "k", *SWEEP_COLUMNS[2:]]


class _ConsoleFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        prefix = "  ⚠ " if record.levelno >= logging.WARNING else "    "
        return prefix + record.getMessage()


class CavitationProcessor:
    """Main orchestrator for cavitation detection runs."""

    def __init__(self, config: PipelineConfig, verbose: bool = False):
        """
        Initialize the processor.

        Args:
            config: Validated pipeline configuration
            verbose: Show progress bars for featurizing and boosting
        """
        self.config = config
        self.verbose = verbose
        self.task = get_task(config.task)

        self.output_dir = Path(config.out_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _stage(self, message: str) -> None:
        print(f"  ✓ {message}")
        # run.log copy; the console already shows the ✓ line
        logger.info(message, extra={"stage_line": True})

    # ------------------------------------------------------------------ stages

    def load_dataset(self, manifest_path: Optional[Path] = None) -> Tuple[DatasetManifest, List[SignalRecord]]:
        manifest_path = manifest_path or self.config.manifest
        if manifest_path is None:
            raise ConfigError("no manifest given (set 'manifest' in the config or pass --manifest)", stage="config")
        manifest = load_manifest(manifest_path)
        records = load_records(manifest, workers=self.config.workers)
        counts = ", ".join(f"{label} {n}" for label, n in manifest.label_counts().items())
        self._stage(f"Loaded {len(records)} records ({counts})")
        return manifest, records

    def split(self, records: Sequence[SignalRecord], out_dir: Optional[Path] = None) -> SplitAssignment:
        split = split_records(records, self.config.train_fraction, self.config.seed)
        counts = split.counts()
        if out_dir is not None:
            split.to_frame().to_csv(out_dir / "split.csv", index=False)
        self._stage(f"Split records: {counts['train']} train / {counts['test']} test (seed {self.config.seed})")
        return split

    def featurize(self, records: Sequence[SignalRecord], split: SplitAssignment,
                  window_size: int) -> Tuple[FeatureTable, FeatureTable]:
        train_segments, test_segments = segment_dataset(records, split, window_size)
        self._stage(f"Windowed at {window_size}: {len(train_segments)} train / {len(test_segments)} test segments")

        dump_dir = self.config.dump_spectrum
        train_table = featurize_segments(train_segments, self.config.workers, self.verbose,
                                         dump_dir / "train" if dump_dir else None)
        test_table = featurize_segments(test_segments, self.config.workers, self.verbose,
                                        dump_dir / "test" if dump_dir else None)
        self._stage(f"Extracted {len(train_table.feature_columns)} features per segment")
        return train_table, test_table

    def engineer(self, train_table: FeatureTable, test_table: FeatureTable, manifest: Optional[DatasetManifest],
                 k: Optional[int] = None, out_dir: Optional[Path] = None) -> Tuple[FeatureTable, FeatureTable]:
        asfe = self.config.asfe if k is None else replace(self.config.asfe, k=k)
        levels = None
        if manifest is not None:
            levels = {"pressure": manifest.pressure_levels, "opening": manifest.opening_levels}
        train_out, test_out, report = run_asfe(train_table, test_table, asfe, self.task, levels)
        if out_dir is not None:
            with open(out_dir / "asfe_report.json", "w") as f:
                json.dump(report.to_dict(), f, indent=2)
        selected = ", ".join(name for name, _ in report.selected)
        self._stage(f"Feature engineering k={asfe.k}: selected [{selected}]")
        self._stage(f"  {report.aggregation_columns} aggregates + {report.cross_columns} crosses "
                    f"= {report.total_columns} features")
        if report.note:
            print(f"  ⚠ {report.note}")
        return train_out, test_out

    def train_model(self, train_table: FeatureTable) -> GbtModel:
        model = train(train_table, self.config.gbt, self.task, show_progress=self.verbose)
        self._stage(f"Trained {len(model.forest)} trees on {len(train_table)} rows")
        return model

    def predict_frame(self, model: GbtModel, table: FeatureTable) -> pd.DataFrame:
        """Predictions with the row keys, actual label and one probability column per class."""
        probabilities = predict(model, table)
        frame = table.frame[["parent_id", "window_index", "partition", "label"]].reset_index(drop=True).copy()
        frame["actual"] = [self.task.class_of(state) for state in frame["label"]]
        frame["predicted"] = [model.classes[i] for i in np.argmax(probabilities, axis=1)]
        for j, name in enumerate(model.classes):
            frame[f"p_{name}"] = probabilities[:, j]
        return frame

    def evaluate_frame(self, predictions: pd.DataFrame) -> EvalReport:
        columns = [f"p_{name}" for name in self.task.classes]
        missing = [c for c in columns if c not in predictions.columns]
        if missing:
            raise DataError(f"predictions lack probability columns {missing} for task {self.task.name}",
                            stage="evaluate")
        return evaluate(self.task, predictions["label"].tolist(), predictions[columns].to_numpy(dtype=np.float64))

    def _score(self, train_table: FeatureTable, test_table: FeatureTable) -> EvalReport:
        model = train(train_table, self.config.gbt, self.task)
        return self.evaluate_frame(self.predict_frame(model, test_table))

    # ---------------------------------------------------------------- commands

    def cmd_run(self) -> EvalReport:
        """
        Full pipeline: split, window, FFT features, feature engineering,
        boosting, prediction and evaluation. Every artifact lands in the output directory.

        Returns:
            EvalReport of the test partition
        """
        print(f"Running {self.task.name} pipeline into {self.output_dir}...")
        with _RunLog(self.output_dir / "run.log"):
            manifest, records = self.load_dataset()
            split = self.split(records, self.output_dir)
            train_table, test_table = self.featurize(records, split, self.config.window_size)

            if self.config.asfe_enabled:
                train_table, test_table = self.engineer(train_table, test_table, manifest, out_dir=self.output_dir)
            train_table.to_csv(self.output_dir / "features_train.csv")
            test_table.to_csv(self.output_dir / "features_test.csv")

            model = self.train_model(train_table)
            model.save(self.output_dir / "model.json")

            predictions = self.predict_frame(model, test_table)
            predictions.to_csv(self.output_dir / "predictions.csv", index=False)

            report = self.evaluate_frame(predictions)
            EvalReportGenerator(self.output_dir).write_all(report, figures=self.config.figures)
            with open(self.output_dir / "config.json", "w") as f:
                json.dump(self.config.to_dict(), f, indent=2)
            self._stage(f"Test accuracy {report.accuracy:.4f}, AUC {report.roc.auc:.4f} "
                        f"({report.rows} segments)")
        return report

    def cmd_segment(self, out_dir: Path) -> pd.DataFrame:
        _, records = self.load_dataset()
        out_dir.mkdir(parents=True, exist_ok=True)
        split = self.split(records, out_dir)
        train_segments, test_segments = segment_dataset(records, split, self.config.window_size)
        index = write_segments(train_segments + test_segments, out_dir)
        self._stage(f"Wrote {len(index)} segments and index.csv to {out_dir}")
        return index

    def cmd_featurize(self, index_path: Path, out_csv: Path) -> FeatureTable:
        segments = read_segment_index(index_path)
        table = featurize_segments(segments, self.config.workers, self.verbose, self.config.dump_spectrum)
        table.to_csv(out_csv)
        self._stage(f"Featurized {len(table)} segments into {out_csv}")
        return table

    def cmd_engineer(self, table_csv: Path, out_dir: Path, test_csv: Optional[Path] = None) -> None:
        """
        Feature engineering on a train/test pair. With a single table the rows
        are divided by their partition tag.
        """
        manifest = load_manifest(self.config.manifest, check_files=False) if self.config.manifest else None
        table = FeatureTable.read_csv(table_csv)
        if test_csv is None:
            train_table, test_table = table.partition("train"), table.partition("test")
        else:
            train_table, test_table = table, FeatureTable.read_csv(test_csv)
        train_out, test_out = self.engineer(train_table, test_table, manifest, out_dir=out_dir)
        train_out.to_csv(out_dir / "features_train.csv")
        test_out.to_csv(out_dir / "features_test.csv")

    def cmd_train(self, train_csv: Path, model_path: Path) -> GbtModel:
        table = FeatureTable.read_csv(train_csv)
        held_out = table.frame["partition"] == "test"
        if held_out.any():
            logger.warning("ignoring %d rows tagged test in %s", int(held_out.sum()), train_csv)
            table = FeatureTable(table.frame[~held_out].reset_index(drop=True), list(table.feature_columns))
        model = self.train_model(table)
        model.save(model_path)
        self._stage(f"Model saved to {model_path}")
        return model

    def cmd_predict(self, model_path: Path, table_csv: Path, out_csv: Path) -> pd.DataFrame:
        model = GbtModel.load(model_path)
        if model.task != self.task.name:
            self.task = get_task(model.task)
        predictions = self.predict_frame(model, FeatureTable.read_csv(table_csv))
        predictions.to_csv(out_csv, index=False)
        self._stage(f"Wrote {len(predictions)} predictions to {out_csv}")
        return predictions

    def cmd_evaluate(self, predictions_csv: Path, out_dir: Path) -> EvalReport:
        try:
            predictions = pd.read_csv(predictions_csv, dtype={"parent_id": str, "label": str},
                                      keep_default_na=False, float_precision="round_trip")
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise DataError(f"cannot read predictions {predictions_csv}: {e}", stage="evaluate")
        if "partition" in predictions.columns and (predictions["partition"] == "test").any():
            predictions = predictions[predictions["partition"] == "test"]
        report = self.evaluate_frame(predictions)
        EvalReportGenerator(out_dir).write_all(report, figures=self.config.figures)
        self._stage(f"Accuracy {report.accuracy:.4f}, AUC {report.roc.auc:.4f}; report in {out_dir}")
        return report

    def cmd_synth(self, out_dir: Path, spec_path: Optional[Path] = None, full_length: bool = False) -> Path:
        values = dict(self.config.synth)
        if spec_path:
            values.update(SynthSpec.load(spec_path).to_dict())
        values.setdefault("seed", self.config.seed)
        if full_length:
            values["full_length"] = True
        spec = SynthSpec.from_dict(values)
        manifest_path = SyntheticDatasetGenerator(spec).write_dataset(out_dir, workers=self.config.workers)
        self._stage(f"Wrote {sum(spec.counts.values())} synthetic records of {spec.signal_length} samples; "
                    f"manifest {manifest_path}")
        return manifest_path

    def cmd_window_counts(self, window_sizes: Optional[Sequence[int]] = None) -> pd.DataFrame:
        """
        Segment counts per partition for each window size, from metadata only.
        Without a manifest the bench layout (356 records of 4 687 500 samples) is used.
        """
        if self.config.manifest:
            manifest = load_manifest(self.config.manifest, check_files=False)
        else:
            spec = SynthSpec(counts=dict(BENCH_COUNTS), signal_length=FULL_SIGNAL_LENGTH, seed=self.config.seed)
            manifest = SyntheticDatasetGenerator(spec).manifest(Path("signals"))
        split = split_records(manifest, self.config.train_fraction, self.config.seed)
        lengths = {entry.id: manifest.signal_length for entry in manifest.entries}

        rows = []
        for window_size in window_sizes or BENCH_WINDOW_SIZES:
            train_count, test_count = count_segments(lengths, split, window_size)
            rows.append({"window_size": window_size, "train_segments": train_count, "test_segments": test_count})
            print(f"  ✓ W={window_size:>8}: {train_count:>5} train / {test_count:>5} test")
        frame = pd.DataFrame(rows)
        frame.to_csv(self.output_dir / "window_counts.csv", index=False)
        return frame

    def _grid_row(self, report: EvalReport, window_size: int, k: Any,
                  train_table: FeatureTable, test_table: FeatureTable) -> Dict[str, Any]:
        return {
            "window_size": window_size,
            "k": k,
            "train_segments": len(train_table),
            "test_segments": len(test_table),
            "features": len(train_table.feature_columns),
            "accuracy": report.accuracy,
            "macro_precision": report.scores.macro_precision,
            "macro_recall": report.scores.macro_recall,
            "macro_f1": report.scores.macro_f1,
            "auc": report.roc.auc,
        }

    def cmd_sweep(self) -> pd.DataFrame:
        """Accuracy grid over window sizes x k, plus a no-engineering baseline per window size."""
        print(f"Sweeping {len(self.config.sweep.window_sizes)} window sizes x k in {self.config.sweep.ks}...")
        manifest, records = self.load_dataset()
        split = self.split(records)

        rows = []
        for window_size in self.config.sweep.window_sizes:
            base_train, base_test = self.featurize(records, split, window_size)
            report = self._score(base_train, base_test)
            rows.append(self._grid_row(report, window_size, "none", base_train, base_test))
            for k in self.config.sweep.ks:
                train_table, test_table = self.engineer(base_train, base_test, manifest, k=k)
                report = self._score(train_table, test_table)
                rows.append(self._grid_row(report, window_size, k, train_table, test_table))
                self._stage(f"W={window_size} k={k}: accuracy {report.accuracy:.4f}")

        path = write_grid(rows, self.output_dir / "sweep.csv", SWEEP_COLUMNS)
        self._stage(f"Sweep grid saved to {path}")
        return pd.DataFrame(rows, columns=SWEEP_COLUMNS)

    def cmd_ablation(self) -> pd.DataFrame:
        """
        Compare plain boosting on whole signals, boosting on windows, and
        boosting on windows with feature engineering, all on one split.
        """
        print("Running ablation...")
        manifest, records = self.load_dataset()
        split = self.split(records)
        whole = min(len(record) for record in records)

        rows = []
        whole_train, whole_test = self.featurize(records, split, whole)
        report = self._score(whole_train, whole_test)
        rows.append({"configuration": "gbt", **self._grid_row(report, whole, "none", whole_train, whole_test)})

        train_table, test_table = self.featurize(records, split, self.config.window_size)
        report = self._score(train_table, test_table)
        rows.append({"configuration": "gbt+nosw",
                     **self._grid_row(report, self.config.window_size, "none", train_table, test_table)})

        asfe_train, asfe_test = self.engineer(train_table, test_table, manifest)
        report = self._score(asfe_train, asfe_test)
        rows.append({"configuration": "gbt+nosw+asfe",
                     **self._grid_row(report, self.config.window_size, self.config.asfe.k, asfe_train, asfe_test)})

        for row in rows:
            self._stage(f"{row['configuration']:<14} accuracy {row['accuracy']:.4f}  AUC {row['auc']:.4f}")
        write_grid(rows, self.output_dir / "ablation.csv", ABLATION_COLUMNS)
        return pd.DataFrame(rows, columns=ABLATION_COLUMNS)

    def cmd_correlate(self, out_dir: Path) -> pd.DataFrame:
        """Pearson matrix between the windows of every record, plus a per-label summary."""
        _, records = self.load_dataset()
        matrix_dir = out_dir / "correlation"
        matrix_dir.mkdir(parents=True, exist_ok=True)

        rows = []
        for record in sorted(records, key=lambda r: r.id):
            matrix = subsequence_correlation(record, self.config.window_size)
            pd.DataFrame(matrix).to_csv(matrix_dir / f"{record.id}.csv", index=False)
            rows.append({"record_id": record.id, "label": record.label.value, "windows": matrix.shape[0],
                         **correlation_summary(matrix)})

        frame = pd.DataFrame(rows)
        frame.to_csv(out_dir / "correlation_records.csv", index=False)
        by_label = {
            label: {"records": int(len(group)), "mean": float(group["mean"].mean()),
                    "min": float(group["min"].min()), "max": float(group["max"].max())}
            for label, group in frame.groupby("label", sort=True)
        }
        with open(out_dir / "correlation_summary.json", "w") as f:
            json.dump({"window_size": self.config.window_size, "by_label": by_label}, f, indent=2)
        for label, summary in by_label.items():
            self._stage(f"{label}: mean r {summary['mean']:.3f} (range {summary['min']:.3f} to {summary['max']:.3f})")
        return frame


class _RunLog:
    """Attach a run.log file handler to the root logger for the duration of a run."""

    def __init__(self, path: Path):
        self.handler = logging.FileHandler(path, mode="w")
        self.handler.setLevel(logging.INFO)
        self.handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        self.previous_level = logging.WARNING

    def __enter__(self):
        root = logging.getLogger()
        self.previous_level = root.level
        root.setLevel(min(root.level or logging.INFO, logging.INFO))
        root.addHandler(self.handler)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None:
            # file only; main() reports the failure on the console
            self.handler.handle(logger.makeRecord(logger.name, logging.ERROR, __file__, 0, "%s", (exc,), None))
        root = logging.getLogger()
        root.removeHandler(self.handler)
        root.setLevel(self.previous_level)
        self.handler.close()
        return False


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON or TOML config file")
    common.add_argument("--manifest", type=Path, help="Dataset manifest")
    common.add_argument("--out", type=Path, help="Output directory")
    common.add_argument("--window-size", type=int, help="Samples per window")
    common.add_argument("--train-fraction", type=float, help="Share of records used for training")
    common.add_argument("--seed", type=int, help="Split seed")
    common.add_argument("--task", choices=["binary", "four_class", "five_class"], help="Classification task")
    common.add_argument("--k", type=int, help="Top-k features for feature engineering")
    common.add_argument("--no-asfe", action="store_true", help="Skip feature engineering")
    common.add_argument("--workers", type=int, help="Threads for loading and featurizing")
    common.add_argument("--dump-spectrum", type=Path, help="Write each segment's spectrum CSV here")
    common.add_argument("--no-figures", action="store_true", help="Skip SVG figures")
    common.add_argument("-v", "--verbose", action="store_true", help="Progress bars and info logging")

    parser = argparse.ArgumentParser(
        description="Valve cavitation detection - windowing, spectral features, feature engineering and boosting"
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    subparsers.add_parser("run", parents=[common], help="Run the full pipeline")

    segment_parser = subparsers.add_parser("segment", parents=[common], help="Split and window a dataset")
    segment_parser.add_argument("segments_dir", type=Path, nargs="?",
                                help="Directory for segment files and index.csv (default: --out)")

    featurize_parser = subparsers.add_parser("featurize", parents=[common], help="Feature table from a segment index")
    featurize_parser.add_argument("index", type=Path, help="index.csv written by 'segment'")
    featurize_parser.add_argument("table", type=Path, help="Feature CSV to write")

    engineer_parser = subparsers.add_parser("engineer", parents=[common], help="Feature engineering on a feature table")
    engineer_parser.add_argument("table", type=Path, help="Feature CSV (train rows, or both partitions)")
    engineer_parser.add_argument("engineered_dir", type=Path)
    engineer_parser.add_argument("--test-table", type=Path, help="Separate test feature CSV")

    train_parser = subparsers.add_parser("train", parents=[common], help="Train a model on a feature table")
    train_parser.add_argument("table", type=Path)
    train_parser.add_argument("model", type=Path)

    predict_parser = subparsers.add_parser("predict", parents=[common], help="Predict with a saved model")
    predict_parser.add_argument("model", type=Path)
    predict_parser.add_argument("table", type=Path)
    predict_parser.add_argument("predictions", type=Path)

    evaluate_parser = subparsers.add_parser("evaluate", parents=[common], help="Evaluate a predictions CSV")
    evaluate_parser.add_argument("predictions", type=Path)
    evaluate_parser.add_argument("report_dir", type=Path)

    synth_parser = subparsers.add_parser("synth", parents=[common], help="Generate a synthetic dataset")
    synth_parser.add_argument("dataset_dir", type=Path)
    synth_parser.add_argument("--spec", type=Path, help="SynthSpec JSON")
    synth_parser.add_argument("--full-length", action="store_true", help="Signals of 4 687 500 samples")

    subparsers.add_parser("sweep", parents=[common], help="Accuracy grid over window sizes and k")
    subparsers.add_parser("ablation", parents=[common], help="Compare gbt, gbt+nosw and gbt+nosw+asfe")

    counts_parser = subparsers.add_parser("window-counts", parents=[common], help="Segment counts per window size")
    counts_parser.add_argument("--sizes", type=int, nargs="+", help="Window sizes (default: bench grid)")

    correlate_parser = subparsers.add_parser("correlate", parents=[common], help="Correlation between windows")
    correlate_parser.add_argument("correlation_dir", type=Path)

    verify_parser = subparsers.add_parser("verify", help="Compare the artifacts of two runs")
    verify_parser.add_argument("reference", type=Path)
    verify_parser.add_argument("candidate", type=Path)
    verify_parser.add_argument("--report-dir", type=Path, help="Write diffs here")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {
        "manifest": getattr(args, "manifest", None),
        "out_dir": getattr(args, "out", None),
        "window_size": getattr(args, "window_size", None),
        "train_fraction": getattr(args, "train_fraction", None),
        "seed": getattr(args, "seed", None),
        "task": getattr(args, "task", None),
        "workers": getattr(args, "workers", None),
        "dump_spectrum": getattr(args, "dump_spectrum", None),
    }
    if getattr(args, "no_asfe", False):
        overrides["asfe_enabled"] = False
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    if getattr(args, "k", None) is not None:
        overrides["asfe"] = {"k": args.k}
    return overrides


def _configure_logging(verbose: bool) -> None:
    root = logging.getLogger()
    # one console handler, even when main() runs repeatedly in one process
    for existing in [h for h in root.handlers if isinstance(h.formatter, _ConsoleFormatter)]:
        root.removeHandler(existing)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_ConsoleFormatter())
    handler.addFilter(lambda record: not getattr(record, "stage_line", False))
    handler.setLevel(logging.INFO if verbose else logging.WARNING)
    root.addHandler(handler)
    root.setLevel(logging.INFO)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for CLI."""
    parser = _build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        print("\nExamples:")
        print("  python cavitation_processor.py synth data/synth")
        print("  python cavitation_processor.py run --manifest data/synth/manifest.json --out runs/a")
        print("  python cavitation_processor.py run --manifest data/synth/manifest.json --task four_class --k 8")
        print("  python cavitation_processor.py sweep --manifest data/synth/manifest.json")
        print("  python cavitation_processor.py window-counts")
        print("  python cavitation_processor.py verify runs/a runs/b")
        return 0

    _configure_logging(getattr(args, "verbose", False))
    try:
        if args.command == "verify":
            results = OutputVerifier(args.reference, args.candidate, args.report_dir).run_verification_suite()
            return 0 if all(results.values()) else 1

        config = load_config(args.config, _overrides(args))
        processor = CavitationProcessor(config, verbose=args.verbose)

        if args.command == "run":
            processor.cmd_run()
        elif args.command == "segment":
            processor.cmd_segment(args.segments_dir or processor.output_dir)
        elif args.command == "featurize":
            processor.cmd_featurize(args.index, args.table)
        elif args.command == "engineer":
            args.engineered_dir.mkdir(parents=True, exist_ok=True)
            processor.cmd_engineer(args.table, args.engineered_dir, args.test_table)
        elif args.command == "train":
            processor.cmd_train(args.table, args.model)
        elif args.command == "predict":
            processor.cmd_predict(args.model, args.table, args.predictions)
        elif args.command == "evaluate":
            processor.cmd_evaluate(args.predictions, args.report_dir)
        elif args.command == "synth":
            processor.cmd_synth(args.dataset_dir, args.spec, args.full_length)
        elif args.command == "sweep":
            processor.cmd_sweep()
        elif args.command == "ablation":
            processor.cmd_ablation()
        elif args.command == "window-counts":
            processor.cmd_window_counts(args.sizes)
        elif args.command == "correlate":
            args.correlation_dir.mkdir(parents=True, exist_ok=True)
            processor.cmd_correlate(args.correlation_dir)
    except PipelineError as e:
        print(f"✗ {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
