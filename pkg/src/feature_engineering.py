"""
Adaptive selection feature engineering.

A probe boosting model ranks the base statistics by importance; the top k are
aggregated per operating-condition group (upstream pressure, valve opening)
and then crossed pairwise into ratio and difference columns. Everything that
is fitted (selection, group lookups) sees training rows only.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from feature_extractor import FEATURE_NAMES, FeatureTable
from gradient_boosting import GbtHyperParams, feature_importance, train
from pipeline_errors import ConfigError, DataError, PipelineError, SchemaError
from signal_dataset import ClassificationTask

logger = logging.getLogger(__name__)

APPLY_OPS = ("median", "mean", "max", "min")
GROUP_KEYS = ("pressure", "opening")
K_RANGE = (5, 10)
RATIO_EPSILON = 1e-12

# Cross counts as printed for k = 5..10; rows k >= 6 follow m = k + 20 instead of m = 5k
PRINTED_CROSS_COUNTS = {5: 1200, 6: 1300, 7: 1404, 8: 1512, 9: 1624, 10: 1740}


@dataclass(frozen=True)
class AsfeConfig:
    """
    Attributes:
        k: Number of top-ranked features to aggregate and cross
        apply_ops: Aggregations applied per group
        group_keys: Metadata columns the rows are grouped by
        probe_params: Hyperparameters of the ranking model
        strict: Reject group values unseen at fit time instead of falling back to the global aggregate
        epsilon: Ratio denominators with smaller magnitude are clamped to 0
    """

    k: int = 5
    apply_ops: Tuple[str, ...] = APPLY_OPS
    group_keys: Tuple[str, ...] = GROUP_KEYS
    probe_params: GbtHyperParams = field(default_factory=lambda: GbtHyperParams(num_rounds=50))
    strict: bool = False
    epsilon: float = RATIO_EPSILON

    def validate(self) -> "AsfeConfig":
        if not K_RANGE[0] <= self.k <= K_RANGE[1]:
            raise ConfigError(f"asfe k must be in [{K_RANGE[0]}, {K_RANGE[1]}], got {self.k}", stage="config")
        if tuple(self.apply_ops) != APPLY_OPS:
            raise ConfigError(f"asfe apply_ops must be {list(APPLY_OPS)}", stage="config")
        if tuple(self.group_keys) != GROUP_KEYS:
            raise ConfigError(f"asfe group_keys must be {list(GROUP_KEYS)}", stage="config")
        if not self.epsilon > 0:
            raise ConfigError("asfe epsilon must be positive", stage="config")
        self.probe_params.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "apply_ops": list(self.apply_ops),
            "group_keys": list(self.group_keys),
            "probe_params": self.probe_params.to_dict(),
            "strict": self.strict,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "AsfeConfig":
        values = dict(values)
        probe = values.pop("probe_params", None)
        for key in ("apply_ops", "group_keys"):
            if key in values:
                values[key] = tuple(values[key])
        unknown = sorted(set(values) - {"k", "apply_ops", "group_keys", "strict", "epsilon"})
        if unknown:
            raise ConfigError(f"unknown asfe settings: {unknown}", stage="config")
        if probe is not None:
            merged = {**GbtHyperParams(num_rounds=50).to_dict(), **probe}
            values["probe_params"] = GbtHyperParams.from_dict(merged)
        return cls(**values).validate()


def aggregate_column(feature: str, op: str) -> str:
    return f"agg_{op}({feature})"


def _fit_rows(table: FeatureTable) -> pd.DataFrame:
    """Rows eligible for fitting: everything not tagged as test."""
    return table.frame[table.frame["partition"] != "test"]


def _base_features(table: FeatureTable) -> List[str]:
    base = [name for name in FEATURE_NAMES if name in table.feature_columns]
    return base or list(table.feature_columns)


def rank_features(
    train_table: FeatureTable,
    probe_params: GbtHyperParams,
    task: ClassificationTask,
) -> List[Tuple[str, float]]:
    """Importance ranking of the base features from a probe model trained on the training rows."""
    base = _base_features(train_table)
    rows = _fit_rows(train_table).reset_index(drop=True)
    if len(rows) < 2:
        raise DataError("feature selection needs at least 2 training rows", stage="asfe")
    probe = train(FeatureTable(rows, base), probe_params, task)
    return feature_importance(probe, kind="gain")


def select_top_k(
    train_table: FeatureTable,
    k: int,
    probe_params: GbtHyperParams,
    task: ClassificationTask,
) -> List[str]:
    """
    The k base features with the highest probe-model importance.

    Args:
        train_table: Training rows with the base statistics
        k: Number of features to keep
        probe_params: Ranking model hyperparameters
        task: Task whose labels the probe is trained on

    Returns:
        Feature names, most important first (ties by name)
    """
    available = len(_base_features(train_table))
    if not 1 <= k <= available:
        raise ConfigError(f"cannot select top {k} of {available} features", stage="asfe")
    return [name for name, _ in rank_features(train_table, probe_params, task)[:k]]


@dataclass(frozen=True)
class AggregationPlan:
    """
    Per (feature, op) lookups from group value to aggregate, fitted on training rows.

    lookups[(feature, op, key)] maps a level of `key` to the aggregate of the
    feature over the training rows at that level; global_values holds the
    ungrouped aggregate used as fallback.
    """

    selected: Tuple[str, ...]
    ops: Tuple[str, ...]
    group_keys: Tuple[str, ...]
    lookups: Dict[Tuple[str, str, str], Dict[float, float]]
    global_values: Dict[Tuple[str, str], float]

    @property
    def output_columns(self) -> List[str]:
        return [aggregate_column(feature, op) for feature in self.selected for op in self.ops]

    def to_dict(self) -> Dict[str, Any]:
        lookups: Dict[str, Dict[str, Dict[str, float]]] = {}
        for (feature, op, key), table in self.lookups.items():
            lookups.setdefault(aggregate_column(feature, op), {})[key] = {
                repr(level): value for level, value in sorted(table.items())
            }
        return {
            "selected": list(self.selected),
            "ops": list(self.ops),
            "group_keys": list(self.group_keys),
            "lookups": lookups,
            "global": {aggregate_column(f, op): v for (f, op), v in self.global_values.items()},
        }


def fit_aggregation(
    train_table: FeatureTable,
    selected: Sequence[str],
    config: AsfeConfig,
    levels: Optional[Mapping[str, Sequence[float]]] = None,
) -> AggregationPlan:
    """
    Fit group aggregates of the selected features on training rows.

    Args:
        train_table: Feature table; rows tagged "test" are ignored
        selected: Features to aggregate
        config: ASFE settings
        levels: Declared levels per group key; a declared level without
            training rows is an error in strict mode and falls back otherwise

    Returns:
        AggregationPlan
    """
    rows = _fit_rows(train_table)
    if rows.empty:
        raise DataError("aggregation fit has no training rows", stage="asfe")
    missing = [c for c in (*selected, *config.group_keys) if c not in rows.columns]
    if missing:
        raise SchemaError(f"aggregation fit is missing columns {missing}", stage="asfe")

    selected = list(selected)
    ops = list(config.apply_ops)
    lookups: Dict[Tuple[str, str, str], Dict[float, float]] = {}
    for key in config.group_keys:
        grouped = rows.groupby(key, sort=True)[selected].agg(ops)
        for level in (levels or {}).get(key, ()):
            if float(level) not in grouped.index:
                if config.strict:
                    raise DataError(f"group {key}={level:g} has no training rows", stage="asfe")
                logger.warning("group %s=%g has no training rows; its rows will use the global aggregate",
                               key, level)
        for feature in selected:
            for op in ops:
                column = grouped[(feature, op)]
                lookups[(feature, op, key)] = {float(level): float(value) for level, value in column.items()}

    overall = rows[selected].agg(ops)
    global_values = {(feature, op): float(overall.loc[op, feature]) for feature in selected for op in ops}
    return AggregationPlan(
        selected=tuple(selected),
        ops=tuple(ops),
        group_keys=tuple(config.group_keys),
        lookups=lookups,
        global_values=global_values,
    )


def apply_aggregation(table: FeatureTable, plan: AggregationPlan, strict: bool = False) -> Tuple[FeatureTable, int]:
    """
    Append the 4k aggregate columns: mean of the row's pressure-group and
    opening-group aggregates.

    Returns:
        (augmented table, number of lookups that fell back to the global aggregate)
    """
    block = {}
    fallbacks = 0
    for feature in plan.selected:
        for op in plan.ops:
            parts = []
            for key in plan.group_keys:
                values = table.frame[key].astype(float).map(plan.lookups[(feature, op, key)])
                unseen = values.isna()
                if unseen.any():
                    if strict:
                        level = table.frame.loc[unseen, key].iloc[0]
                        raise DataError(f"group {key}={float(level):g} was not seen at fit time", stage="asfe")
                    fallbacks += int(unseen.sum())
                    values = values.fillna(plan.global_values[(feature, op)])
                parts.append(values.to_numpy(dtype=np.float64))
            block[aggregate_column(feature, op)] = 0.5 * (parts[0] + parts[1])

    if fallbacks:
        logger.warning("%d aggregate lookups used the global fallback", fallbacks)
    frame = pd.DataFrame(block, columns=plan.output_columns)
    return table.with_features(frame), fallbacks


@dataclass(frozen=True)
class CrossPlan:
    """Ordered pairs over the merged source list; ratios first, then differences."""

    sources: Tuple[str, ...]

    @classmethod
    def from_aggregation(cls, plan: AggregationPlan) -> "CrossPlan":
        return cls(sources=(*plan.selected, *plan.output_columns))

    @property
    def pairs(self) -> List[Tuple[str, str]]:
        return [(a, b) for a in self.sources for b in self.sources if a != b]

    @property
    def output_columns(self) -> List[str]:
        pairs = self.pairs
        return [f"ratio({a},{b})" for a, b in pairs] + [f"diff({a},{b})" for a, b in pairs]


def build_crosses(table: FeatureTable, plan: CrossPlan, epsilon: float = RATIO_EPSILON) -> Tuple[FeatureTable, int]:
    """
    Append ratio and difference columns for every ordered pair of sources.

    Ratios whose denominator magnitude is below epsilon are set to 0.

    Returns:
        (augmented table, number of clamped ratio cells)
    """
    if len(set(plan.sources)) != len(plan.sources):
        raise SchemaError("cross sources must be distinct", stage="asfe")
    missing = [c for c in plan.sources if c not in table.feature_columns]
    if missing:
        raise SchemaError(f"cross sources missing from table: {missing}", stage="asfe")

    values = table.matrix(plan.sources)
    m = len(plan.sources)
    i_index, j_index = np.nonzero(~np.eye(m, dtype=bool))
    numerators, denominators = values[:, i_index], values[:, j_index]

    small = np.abs(denominators) < epsilon
    ratios = np.zeros_like(numerators)
    np.divide(numerators, denominators, out=ratios, where=~small)
    clamps = int(small.sum())
    if clamps:
        logger.warning("%d ratio cells had |denominator| < %g and were set to 0", clamps, epsilon)

    block = pd.DataFrame(np.hstack([ratios, numerators - denominators]), columns=plan.output_columns)
    return table.with_features(block), clamps


def expected_cross_count(k: int) -> int:
    m = k + len(APPLY_OPS) * k
    return 2 * m * (m - 1)


@dataclass
class AsfeReport:
    k: int
    selected: List[Tuple[str, float]]
    aggregation_columns: int
    cross_columns: int
    total_columns: int
    clamps: Dict[str, int]
    fallbacks: Dict[str, int]
    printed_cross_count: Optional[int]
    note: str = ""
    plan: Optional[AggregationPlan] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "selected": [{"feature": name, "importance": score} for name, score in self.selected],
            "aggregation_columns": self.aggregation_columns,
            "cross_columns": self.cross_columns,
            "total_columns": self.total_columns,
            "formula_cross_columns": expected_cross_count(self.k),
            "printed_cross_columns": self.printed_cross_count,
            "clamps": dict(self.clamps),
            "fallbacks": dict(self.fallbacks),
            "note": self.note,
            "aggregation_plan": self.plan.to_dict() if self.plan else None,
        }


def run_asfe(
    train_table: FeatureTable,
    test_table: FeatureTable,
    config: AsfeConfig,
    task: ClassificationTask,
    levels: Optional[Mapping[str, Sequence[float]]] = None,
) -> Tuple[FeatureTable, FeatureTable, AsfeReport]:
    """
    Selection, aggregation and crosses, fitted on train and applied to both partitions.

    Args:
        train_table: Training feature rows
        test_table: Testing feature rows with the same schema
        config: ASFE settings
        task: Task the selection probe is trained on
        levels: Declared pressure/opening levels (from the manifest)

    Returns:
        (augmented train, augmented test, report)
    """
    config = config.validate()
    if list(train_table.feature_columns) != list(test_table.feature_columns):
        raise SchemaError("train and test feature tables have different columns", stage="asfe")
    overlap = set(train_table.keys()) & set(test_table.keys())
    if overlap:
        raise DataError(f"{len(overlap)} segment(s) appear in both partitions", stage="asfe")

    ranking = rank_features(train_table, config.probe_params, task)
    if config.k > len(ranking):
        raise ConfigError(f"cannot select top {config.k} of {len(ranking)} features", stage="asfe")
    selected = [name for name, _ in ranking[: config.k]]

    plan = fit_aggregation(train_table, selected, config, levels)
    train_agg, train_fallbacks = apply_aggregation(train_table, plan, config.strict)
    test_agg, test_fallbacks = apply_aggregation(test_table, plan, config.strict)

    cross_plan = CrossPlan.from_aggregation(plan)
    train_out, train_clamps = build_crosses(train_agg, cross_plan, config.epsilon)
    test_out, test_clamps = build_crosses(test_agg, cross_plan, config.epsilon)

    aggregation_columns = len(plan.output_columns)
    cross_columns = len(cross_plan.output_columns)
    if aggregation_columns != len(APPLY_OPS) * config.k or cross_columns != expected_cross_count(config.k):
        raise PipelineError(
            f"column count identity violated: {aggregation_columns} aggregates, {cross_columns} crosses "
            f"for k={config.k}", stage="asfe")

    printed = PRINTED_CROSS_COUNTS.get(config.k)
    note = ""
    if printed is not None and printed != cross_columns:
        note = (f"cross count {cross_columns} follows 2*m*(m-1) with m = 5k = {5 * config.k}; "
                f"the tabulated count is {printed} (m = k + 20)")
        logger.info(note)

    report = AsfeReport(
        k=config.k,
        selected=ranking[: config.k],
        aggregation_columns=aggregation_columns,
        cross_columns=cross_columns,
        total_columns=len(train_out.feature_columns),
        clamps={"train": train_clamps, "test": test_clamps},
        fallbacks={"train": train_fallbacks, "test": test_fallbacks},
        printed_cross_count=printed,
        note=note,
        plan=plan,
    )
    return train_out, test_out, report
