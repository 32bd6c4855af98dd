#!/usr/bin/env python3
"""
Output Verification Tool - Compares the artifacts of two pipeline runs.
Two runs with the same config and seed must produce byte-identical feature
tables, models, predictions and reports.
"""

import difflib
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

# Artifacts a run must reproduce exactly; run.log carries timestamps and is excluded
DETERMINISTIC_ARTIFACTS = [
    "split.csv",
    "features_train.csv",
    "features_test.csv",
    "asfe_report.json",
    "model.json",
    "predictions.csv",
    "eval.json",
    "roc.csv",
    "confusion.csv",
]


class OutputVerifier:
    """Verifies that a candidate run directory matches a reference run exactly."""

    def __init__(self, reference_dir: Union[str, Path], candidate_dir: Union[str, Path],
                 comparison_dir: Optional[Union[str, Path]] = None):
        self.reference_dir = Path(reference_dir)
        self.candidate_dir = Path(candidate_dir)
        self.comparison_dir = Path(comparison_dir) if comparison_dir else None
        if self.comparison_dir:
            self.comparison_dir.mkdir(parents=True, exist_ok=True)

    def normalize_data(self, data: Any, ignore_fields: Optional[List[str]] = None) -> Any:
        """
        Drop ignored keys at every nesting level.

        Args:
            data: Parsed JSON value
            ignore_fields: Keys to remove (e.g. absolute paths)
        """
        ignore_fields = ignore_fields or []
        if isinstance(data, dict):
            return {k: self.normalize_data(v, ignore_fields) for k, v in data.items() if k not in ignore_fields}
        if isinstance(data, list):
            return [self.normalize_data(item, ignore_fields) for item in data]
        return data

    def compare_json_files(self, name: str, ignore_fields: Optional[List[str]] = None) -> Tuple[bool, str]:
        """
        Compare one JSON artifact structurally.

        Returns:
            (match_status, comparison_report)
        """
        try:
            with open(self.reference_dir / name, "r") as f:
                reference = self.normalize_data(json.load(f), ignore_fields)
            with open(self.candidate_dir / name, "r") as f:
                candidate = self.normalize_data(json.load(f), ignore_fields)
        except FileNotFoundError as e:
            return False, f"FILE NOT FOUND: {e}"
        except json.JSONDecodeError as e:
            return False, f"JSON PARSE ERROR: {e}"

        if reference == candidate:
            return True, "MATCH: outputs are identical"
        return False, "MISMATCH:\n\n" + self._diff(
            json.dumps(reference, indent=2, sort_keys=True),
            json.dumps(candidate, indent=2, sort_keys=True),
            name,
        )

    def compare_bytes(self, name: str) -> Tuple[bool, str]:
        """Compare one artifact byte for byte, with a text diff on mismatch."""
        try:
            reference = (self.reference_dir / name).read_bytes()
            candidate = (self.candidate_dir / name).read_bytes()
        except FileNotFoundError as e:
            return False, f"FILE NOT FOUND: {e}"

        if reference == candidate:
            return True, "MATCH: outputs are identical"
        try:
            diff = self._diff(reference.decode(), candidate.decode(), name)
        except UnicodeDecodeError:
            diff = f"binary contents differ ({len(reference)} vs {len(candidate)} bytes)"
        return False, "MISMATCH:\n\n" + diff

    def _diff(self, reference: str, candidate: str, name: str) -> str:
        diff = difflib.unified_diff(
            reference.splitlines(keepends=True),
            candidate.splitlines(keepends=True),
            fromfile=f"reference: {name}",
            tofile=f"candidate: {name}",
            lineterm="",
        )
        return "".join(diff)

    def save_comparison_report(self, name: str, match_status: bool, report: str) -> Optional[Path]:
        if not self.comparison_dir:
            return None
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        status = "PASS" if match_status else "FAIL"
        path = self.comparison_dir / f"{name.replace('.', '_')}_{status}_{timestamp}.txt"
        with open(path, "w") as f:
            f.write(f"Artifact: {name}\n")
            f.write(f"Status: {status}\n")
            f.write("=" * 60 + "\n\n")
            f.write(report)
        return path

    def run_verification_suite(self, artifacts: Optional[List[str]] = None) -> Dict[str, bool]:
        """
        Compare every artifact present in the reference run.

        Args:
            artifacts: Names to compare (defaults to DETERMINISTIC_ARTIFACTS)

        Returns:
            Artifact name -> passed
        """
        print("\n" + "=" * 60)
        print("RUN OUTPUT VERIFICATION")
        print("=" * 60 + "\n")

        results: Dict[str, bool] = {}
        for name in artifacts or DETERMINISTIC_ARTIFACTS:
            if not (self.reference_dir / name).exists() and not (self.candidate_dir / name).exists():
                continue
            match, report = self.compare_bytes(name)
            if not match and name.endswith(".json"):
                structurally_equal, structural_report = self.compare_json_files(name)
                if not structurally_equal:
                    report = structural_report
            results[name] = match
            print(f"  {'✓' if match else '✗'} {name}: {report.splitlines()[0]}")
            if not match:
                self.save_comparison_report(name, match, report)

        passed = sum(results.values())
        print(f"\nTotal: {passed}/{len(results)} artifacts identical")
        if passed != len(results):
            print("⚠ Runs differ; see the comparison reports for diffs")
        return results
