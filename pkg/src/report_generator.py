"""
Report generator module for evaluation artifacts.
This module turns an EvalReport into eval.json, CSV tables, SVG figures and a
plain-text summary.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from evaluation import EvalReport  # noqa: E402

# Fixed hash salt keeps SVG element ids stable between runs
matplotlib.rcParams["svg.hashsalt"] = "cavitation-report"
SVG_METADATA = {"Date": None}


class EvalReportGenerator:
    """Write the artifacts of one evaluation into an output directory."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        self.class_colors = {
            "ChokedFlowCavitation": "#b2182b",
            "ConstantCavitation": "#ef8a62",
            "IncipientCavitation": "#fddbc7",
            "TurbulentFlow": "#67a9cf",
            "NoFlow": "#2166ac",
            "NonCavitation": "#2166ac",
            "NoCavitation": "#2166ac",
            "Cavitation": "#b2182b",
        }

    def write_all(self, report: EvalReport, figures: bool = True) -> Dict[str, Path]:
        """
        Write every artifact of the report.

        Args:
            report: Evaluation to publish
            figures: Also render roc.svg and confusion.svg

        Returns:
            Artifact name -> path
        """
        written = {
            "eval.json": self.write_json(report),
            "roc.csv": self.write_roc_csv(report),
            "confusion.csv": self.write_confusion_csv(report),
            "summary.txt": self.write_summary(report),
        }
        if figures:
            written["roc.svg"] = self.plot_roc(report)
            written["confusion.svg"] = self.plot_confusion(report)
        return written

    def write_json(self, report: EvalReport, name: str = "eval.json") -> Path:
        path = self.out_dir / name
        with open(path, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
        return path

    def write_roc_csv(self, report: EvalReport) -> Path:
        path = self.out_dir / "roc.csv"
        report.roc.to_frame().to_csv(path, index=False)
        return path

    def write_confusion_csv(self, report: EvalReport) -> Path:
        path = self.out_dir / "confusion.csv"
        report.confusion.to_frame().to_csv(path)
        return path

    def plot_roc(self, report: EvalReport) -> Path:
        """ROC curve, plus the one-vs-rest curves for multiclass tasks."""
        path = self.out_dir / "roc.svg"
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.plot([0, 1], [0, 1], linestyle=":", color="grey", linewidth=1)
        ax.step(report.roc.fpr, report.roc.tpr, where="post", color="black",
                label=f"{report.roc_method} (AUC {report.roc.auc:.4f})")
        if len(report.classes) > 2:
            for name, curve in report.class_roc.items():
                if curve is None:
                    continue
                ax.plot(curve.fpr, curve.tpr, linewidth=1, color=self.class_colors.get(name),
                        label=f"{name} (AUC {curve.auc:.4f})")
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(f"ROC, {report.task}")
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        return path

    def plot_confusion(self, report: EvalReport) -> Path:
        path = self.out_dir / "confusion.svg"
        matrix = report.confusion.matrix
        fig, ax = plt.subplots(figsize=(1.2 * len(report.classes) + 2, 1.2 * len(report.classes) + 1.5))
        ax.imshow(matrix, cmap="Blues")
        ticks = range(len(report.classes))
        ax.set_xticks(ticks, report.classes, rotation=45, ha="right")
        ax.set_yticks(ticks, report.classes)
        threshold = matrix.max() / 2 if matrix.size else 0
        for i in ticks:
            for j in ticks:
                ax.text(j, i, str(matrix[i, j]), ha="center", va="center",
                        color="white" if matrix[i, j] > threshold else "black")
        ax.set_xlabel("Predicted")
        ax.set_ylabel("Actual")
        ax.set_title(f"Confusion, {report.task} (accuracy {report.accuracy:.4f})")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
        return path

    def write_summary(self, report: EvalReport) -> Path:
        path = self.out_dir / "summary.txt"
        path.write_text(self.format_summary(report))
        return path

    def format_summary(self, report: EvalReport) -> str:
        """Plain text version of the report for the console and summary.txt."""
        scores = report.scores
        text = f"Evaluation: {report.task} ({report.rows} rows)\n"
        text += "=" * 50 + "\n\n"
        text += f"Accuracy:        {scores.accuracy:.4f}\n"
        text += f"Macro precision: {scores.macro_precision:.4f}\n"
        text += f"Macro recall:    {scores.macro_recall:.4f}\n"
        text += f"Macro F1:        {scores.macro_f1:.4f}\n"
        text += f"AUC ({report.roc_method}): {report.roc.auc:.4f}\n\n"

        text += "Per class:\n"
        for name, s in scores.per_class.items():
            curve = report.class_roc.get(name)
            auc = f"{curve.auc:.4f}" if curve else "n/a"
            text += (f"  - {name}: precision {s.precision:.4f}, recall {s.recall:.4f}, "
                     f"F1 {s.f1:.4f}, AUC {auc}, support {s.support}\n")
        if scores.undefined:
            text += "\nUndefined ratios (reported as 0):\n"
            for name, what in scores.undefined.items():
                text += f"  - {name}: {', '.join(what)}\n"
        return text


def write_grid(rows: List[Dict[str, Any]], path: Union[str, Path], columns: Optional[List[str]] = None) -> Path:
    """Write sweep or ablation rows as CSV."""
    path = Path(path)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path
