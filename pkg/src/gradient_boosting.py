"""
Gradient-boosted regression trees with a second-order regularized objective.

Each round fits one tree per output (one for binary logistic, one per class
for softmax) to the gradient/hessian statistics of the current scores.
Splits come from an exact greedy search over sorted feature values, leaves
take the closed-form minimizer -G/(H + lambda), and every accepted split's
gain is accumulated into the feature importance.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit, logsumexp, softmax
from tqdm import tqdm

from pipeline_errors import ConfigError, DataError, NumericError, SchemaError
from signal_dataset import ClassificationTask, get_task

logger = logging.getLogger(__name__)

MODEL_FORMAT = "gbt-model/1"
_PRIOR_CLIP = 1e-6


@dataclass(frozen=True)
class GbtHyperParams:
    """
    Training hyperparameters.

    Attributes:
        num_rounds: Boosting rounds
        max_depth: Maximum tree depth (0 = single-leaf trees)
        learning_rate: Shrinkage applied to every tree's output
        reg_lambda: L2 penalty on leaf weights
        gamma: Penalty per leaf; a split must gain more than gamma
        min_child_hessian: Minimum hessian sum on each side of a split
        num_classes: Number of classes (2 = binary logistic)
        seed: Kept with the model for reproducibility records
    """

    num_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1.0
    num_classes: int = 2
    seed: int = 0

    def validate(self) -> "GbtHyperParams":
        problems = []
        if self.num_rounds < 0:
            problems.append("num_rounds must be >= 0")
        if self.max_depth < 0:
            problems.append("max_depth must be >= 0")
        if not 0 < self.learning_rate <= 1:
            problems.append("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0:
            problems.append("lambda must be >= 0")
        if self.gamma < 0:
            problems.append("gamma must be >= 0")
        if self.min_child_hessian < 0:
            problems.append("min_child_hessian must be >= 0")
        if self.num_classes < 2:
            problems.append("num_classes must be >= 2")
        if problems:
            raise ConfigError("invalid boosting parameters: " + "; ".join(problems), stage="config")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "GbtHyperParams":
        values = dict(values)
        if "lambda" in values:
            values["reg_lambda"] = values.pop("lambda")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown boosting parameters: {unknown}", stage="config")
        return cls(**values).validate()


@dataclass
class TreeNode:
    """Internal split node (feature >= 0) or leaf (feature == -1)."""

    weight: float = 0.0
    feature: int = -1
    threshold: float = 0.0
    default_left: bool = True
    gain: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def leaf_weights(self) -> List[float]:
        if self.is_leaf:
            return [self.weight]
        return self.left.leaf_weights() + self.right.leaf_weights()

    def to_dict(self) -> Dict[str, Any]:
        if self.is_leaf:
            return {"leaf": self.weight}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "default_left": self.default_left,
            "gain": self.gain,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "TreeNode":
        if "leaf" in record:
            return cls(weight=float(record["leaf"]))
        return cls(
            feature=int(record["feature"]),
            threshold=float(record["threshold"]),
            default_left=bool(record["default_left"]),
            gain=float(record["gain"]),
            left=cls.from_dict(record["left"]),
            right=cls.from_dict(record["right"]),
        )


def predict_tree(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf weight reached by every row of X."""
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        current, rows = stack.pop()
        if rows.size == 0:
            continue
        if current.is_leaf:
            out[rows] = current.weight
            continue
        x = X[rows, current.feature]
        go_left = np.where(np.isnan(x), current.default_left, x <= current.threshold)
        stack.append((current.left, rows[go_left]))
        stack.append((current.right, rows[~go_left]))
    return out


@dataclass
class GbtModel:
    """
    Trained forest.

    forest holds (round, class_index, tree) in training order; binary models
    have one output (class_index 0 scores the positive class).
    """

    forest: List[Tuple[int, int, TreeNode]]
    base_score: List[float]
    params: GbtHyperParams
    feature_names: List[str]
    classes: List[str]
    task: str
    feature_importance: Dict[str, float] = field(default_factory=dict)
    split_counts: Dict[str, int] = field(default_factory=dict)
    objective_trace: List[float] = field(default_factory=list)

    @property
    def objective(self) -> str:
        return "binary" if len(self.classes) == 2 else "multiclass"

    @property
    def num_outputs(self) -> int:
        return 1 if self.objective == "binary" else len(self.classes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": MODEL_FORMAT,
            "task": self.task,
            "objective": self.objective,
            "classes": list(self.classes),
            "feature_names": list(self.feature_names),
            "params": self.params.to_dict(),
            "base_score": list(self.base_score),
            "feature_importance": dict(self.feature_importance),
            "split_counts": dict(self.split_counts),
            "objective_trace": list(self.objective_trace),
            "trees": [
                {"round": r, "class_index": k, "tree": tree.to_dict()} for r, k, tree in self.forest
            ],
        }

    @classmethod
    def from_dict(cls, document: Dict[str, Any]) -> "GbtModel":
        if document.get("format") != MODEL_FORMAT:
            raise SchemaError(f"unsupported model format {document.get('format')!r}", stage="predict")
        return cls(
            forest=[(int(t["round"]), int(t["class_index"]), TreeNode.from_dict(t["tree"]))
                    for t in document["trees"]],
            base_score=[float(b) for b in document["base_score"]],
            params=GbtHyperParams.from_dict(document["params"]),
            feature_names=list(document["feature_names"]),
            classes=list(document["classes"]),
            task=document["task"],
            feature_importance={k: float(v) for k, v in document["feature_importance"].items()},
            split_counts={k: int(v) for k, v in document.get("split_counts", {}).items()},
            objective_trace=[float(v) for v in document.get("objective_trace", [])],
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "GbtModel":
        path = Path(path)
        try:
            with open(path, "r") as f:
                document = json.load(f)
        except OSError as e:
            raise DataError(f"cannot read model {path}: {e}", stage="predict")
        except json.JSONDecodeError as e:
            raise DataError(f"malformed model {path}: line {e.lineno}: {e.msg}", stage="predict")
        return cls.from_dict(document)


def _check_finite(values: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{what} contains non-finite values", stage="train")


def grad_hess(task: str, labels: np.ndarray, raw_scores: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    First and second derivatives of the log-loss with respect to raw scores.

    Args:
        task: "binary" (sigmoid, scores shape (n,)) or "multiclass" (softmax, shape (n, K))
        labels: Integer class index per row
        raw_scores: Current raw scores

    Returns:
        (g, h) with the same shape as raw_scores
    """
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    labels = np.asarray(labels)
    _check_finite(raw_scores, "raw scores")
    if task == "binary":
        p = expit(raw_scores)
        return p - labels, p * (1.0 - p)
    if task == "multiclass":
        p = softmax(raw_scores, axis=1)
        onehot = np.zeros_like(p)
        onehot[np.arange(labels.size), labels] = 1.0
        return p - onehot, p * (1.0 - p)
    raise ConfigError(f"unknown objective '{task}'", stage="train")


def log_loss(task: str, labels: np.ndarray, raw_scores: np.ndarray) -> float:
    """Summed log-loss at the given raw scores."""
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    if task == "binary":
        return float(np.sum(np.logaddexp(0.0, raw_scores) - labels * raw_scores))
    rows = np.arange(labels.size)
    return float(np.sum(logsumexp(raw_scores, axis=1) - raw_scores[rows, labels]))


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    """Minimizer of G*w + (H + lambda) * w^2 / 2."""
    if not H + reg_lambda > 0:
        raise NumericError(f"leaf weight undefined: H + lambda = {H + reg_lambda} <= 0", stage="train")
    return -G / (H + reg_lambda)


def split_gain(G_L: float, H_L: float, G_R: float, H_R: float, reg_lambda: float, gamma: float) -> float:
    """Objective reduction of splitting a leaf into (L, R), net of the leaf penalty gamma."""
    denominators = (H_L + reg_lambda, H_R + reg_lambda, H_L + H_R + reg_lambda)
    if min(denominators) <= 0:
        raise NumericError(f"split gain undefined: non-positive denominator in {denominators}", stage="train")
    return 0.5 * (
        G_L ** 2 / denominators[0] + G_R ** 2 / denominators[1] - (G_L + G_R) ** 2 / denominators[2]
    ) - gamma


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    gain: float
    default_left: bool


def find_best_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_hessian: float,
) -> Optional[SplitCandidate]:
    """
    Exact greedy search over every feature and every gap between adjacent
    distinct sorted values. Missing values are tried on both sides.

    Returns:
        Best split with gain > 0, or None
    """
    n, num_features = X.shape
    if n < 2 or num_features == 0:
        return None

    G, H = float(g.sum()), float(h.sum())
    if H + reg_lambda <= 0:
        return None

    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    missing = np.isnan(xs)
    gs = np.where(missing, 0.0, g[order])
    hs = np.where(missing, 0.0, h[order])

    G_present, H_present = gs.sum(axis=0), hs.sum(axis=0)
    G_missing, H_missing = G - G_present, H - H_present

    GL, HL = np.cumsum(gs, axis=0)[:-1], np.cumsum(hs, axis=0)[:-1]
    GR, HR = G_present - GL, H_present - HL
    boundary = xs[:-1] < xs[1:]

    parent = G ** 2 / (H + reg_lambda)

    def gains(gl, hl, gr, hr):
        ok = boundary & (hl >= min_child_hessian) & (hr >= min_child_hessian)
        ok &= (hl + reg_lambda > 0) & (hr + reg_lambda > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            value = 0.5 * (gl ** 2 / (hl + reg_lambda) + gr ** 2 / (hr + reg_lambda) - parent) - gamma
        return np.where(ok, value, -np.inf)

    gain_left = gains(GL + G_missing, HL + H_missing, GR, HR)
    gain_right = gains(GL, HL, GR + G_missing, HR + H_missing)
    best_gain = np.maximum(gain_left, gain_right)

    # feature-major scan: ties resolve to the lowest feature, then the lowest threshold
    flat = best_gain.T.ravel()
    position = int(np.argmax(flat))
    gain = float(flat[position])
    if not gain > 0:
        return None

    feature, i = divmod(position, n - 1)
    low, high = xs[i, feature], xs[i + 1, feature]
    threshold = float((low + high) / 2)
    if not low <= threshold < high:
        threshold = float(low)
    return SplitCandidate(
        feature=int(feature),
        threshold=threshold,
        gain=gain,
        default_left=bool(gain_left[i, feature] >= gain_right[i, feature]),
    )


class _TreeGrower:
    """Grows one tree on fixed gradient statistics."""

    def __init__(self, X: np.ndarray, params: GbtHyperParams, importance: np.ndarray, counts: np.ndarray):
        self.X = X
        self.params = params
        self.importance = importance
        self.counts = counts

    def grow(self, g: np.ndarray, h: np.ndarray) -> TreeNode:
        return self._grow(np.arange(self.X.shape[0]), g, h, depth=0)

    def _leaf(self, g: np.ndarray, h: np.ndarray) -> TreeNode:
        G, H = float(g.sum()), float(h.sum())
        if H + self.params.reg_lambda <= 0:
            return TreeNode(weight=0.0)
        return TreeNode(weight=leaf_weight(G, H, self.params.reg_lambda))

    def _grow(self, rows: np.ndarray, g: np.ndarray, h: np.ndarray, depth: int) -> TreeNode:
        g_rows, h_rows = g[rows], h[rows]
        if depth >= self.params.max_depth or rows.size < 2:
            return self._leaf(g_rows, h_rows)

        split = find_best_split(
            self.X[rows], g_rows, h_rows,
            self.params.reg_lambda, self.params.gamma, self.params.min_child_hessian,
        )
        if split is None:
            return self._leaf(g_rows, h_rows)

        x = self.X[rows, split.feature]
        go_left = np.where(np.isnan(x), split.default_left, x <= split.threshold)
        self.importance[split.feature] += split.gain
        self.counts[split.feature] += 1
        return TreeNode(
            feature=split.feature,
            threshold=split.threshold,
            default_left=split.default_left,
            gain=split.gain,
            left=self._grow(rows[go_left], g, h, depth + 1),
            right=self._grow(rows[~go_left], g, h, depth + 1),
        )


def _tree_penalty(tree: TreeNode, params: GbtHyperParams) -> float:
    weights = np.asarray(tree.leaf_weights()) * params.learning_rate
    return params.gamma * weights.size + 0.5 * params.reg_lambda * float(np.sum(weights ** 2))


def train_arrays(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    params: GbtHyperParams,
    classes: Optional[Sequence[str]] = None,
    task_name: str = "",
    show_progress: bool = False,
) -> GbtModel:
    """
    Boost trees on a numeric matrix.

    Args:
        X: (n, F) feature matrix
        y: Integer class index per row
        feature_names: Column names of X
        params: Hyperparameters; num_classes decides binary vs softmax
        classes: Class names (defaults to "0".."K-1")
        task_name: Task recorded in the model
        show_progress: Show a tqdm bar over rounds

    Returns:
        Trained GbtModel
    """
    params = params.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError(f"training needs at least 2 rows, got {X.shape[0] if X.ndim else 0}", stage="train")
    if X.shape[1] < 1:
        raise DataError("training needs at least one numeric feature", stage="train")
    if X.shape[1] != len(feature_names):
        raise SchemaError(f"{X.shape[1]} columns but {len(feature_names)} feature names", stage="train")
    if y.shape != (X.shape[0],):
        raise DataError("labels must have one entry per row", stage="train")
    if y.min() < 0 or y.max() >= params.num_classes:
        raise DataError(f"labels must lie in [0, {params.num_classes})", stage="train")
    if np.any(np.isinf(X)):
        raise NumericError("feature matrix contains infinite values", stage="train")

    classes = list(classes) if classes is not None else [str(k) for k in range(params.num_classes)]
    objective = "binary" if params.num_classes == 2 else "multiclass"
    num_outputs = 1 if objective == "binary" else params.num_classes

    model = GbtModel(
        forest=[],
        base_score=[0.0] * num_outputs,
        params=params,
        feature_names=list(feature_names),
        classes=classes,
        task=task_name,
    )

    priors = np.clip(np.bincount(y, minlength=params.num_classes) / y.size, _PRIOR_CLIP, 1 - _PRIOR_CLIP)
    if objective == "binary":
        model.base_score = [float(np.log(priors[1] / (1 - priors[1])))]

    if np.unique(y).size < 2:
        logger.warning("training set holds a single label (%s); returning a base-score-only model",
                       classes[int(y[0])])
        if objective == "multiclass":
            model.base_score = [float(v) for v in np.log(priors)]
        model.feature_importance = {name: 0.0 for name in feature_names}
        model.split_counts = {name: 0 for name in feature_names}
        return model

    importance = np.zeros(X.shape[1])
    counts = np.zeros(X.shape[1], dtype=np.int64)
    grower = _TreeGrower(X, params, importance, counts)

    if objective == "binary":
        scores = np.full(X.shape[0], model.base_score[0])
    else:
        scores = np.zeros((X.shape[0], num_outputs))

    penalty = 0.0
    for round_index in tqdm(range(params.num_rounds), desc="boost", unit="round", disable=not show_progress):
        g, h = grad_hess(objective, y, scores)
        if objective == "binary":
            tree = grower.grow(g, h)
            model.forest.append((round_index, 0, tree))
            scores = scores + params.learning_rate * predict_tree(tree, X)
            penalty += _tree_penalty(tree, params)
        else:
            update = np.zeros_like(scores)
            for k in range(num_outputs):
                tree = grower.grow(g[:, k], h[:, k])
                model.forest.append((round_index, k, tree))
                update[:, k] = predict_tree(tree, X)
                penalty += _tree_penalty(tree, params)
            scores = scores + params.learning_rate * update
        model.objective_trace.append(log_loss(objective, y, scores) + penalty)

    model.feature_importance = {name: float(importance[j]) for j, name in enumerate(feature_names)}
    model.split_counts = {name: int(counts[j]) for j, name in enumerate(feature_names)}
    return model


def train(table, params: GbtHyperParams, task: Union[str, ClassificationTask], show_progress: bool = False) -> GbtModel:
    """
    Train on the rows of a FeatureTable.

    Args:
        table: FeatureTable of training rows (label column holds flow states)
        params: Hyperparameters; num_classes is taken from the task
        task: Classification task or its name

    Returns:
        Trained GbtModel
    """
    task = get_task(task) if isinstance(task, str) else task
    params = GbtHyperParams(**{**params.to_dict(), "num_classes": len(task.classes)})
    return train_arrays(
        table.matrix(),
        task.encode(table.labels()),
        table.feature_columns,
        params,
        classes=task.classes,
        task_name=task.name,
        show_progress=show_progress,
    )


def _design_matrix(model: GbtModel, rows) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(model.feature_names):
            raise SchemaError(
                f"model expects {len(model.feature_names)} features, got array of shape {X.shape}", stage="predict")
        return X
    table_columns = list(rows.feature_columns)
    if sorted(table_columns) != sorted(model.feature_names):
        missing = sorted(set(model.feature_names) - set(table_columns))
        extra = sorted(set(table_columns) - set(model.feature_names))
        raise SchemaError(
            f"feature schema mismatch: {len(missing)} missing (e.g. {missing[:3]}), "
            f"{len(extra)} unexpected (e.g. {extra[:3]})", stage="predict")
    return rows.matrix(model.feature_names)


def predict_raw(model: GbtModel, rows) -> np.ndarray:
    """Raw scores: base + learning_rate * sum of tree outputs."""
    X = _design_matrix(model, rows)
    totals = np.zeros((X.shape[0], model.num_outputs))
    for _, k, tree in model.forest:
        totals[:, k] += predict_tree(tree, X)
    raw = np.asarray(model.base_score) + model.params.learning_rate * totals
    return raw[:, 0] if model.objective == "binary" else raw


def predict(model: GbtModel, rows) -> np.ndarray:
    """
    Class probabilities per row, shape (n, number of classes).

    Args:
        model: Trained model
        rows: FeatureTable with the model's feature columns, or an (n, F) array
    """
    raw = predict_raw(model, rows)
    if model.objective == "binary":
        p = expit(raw)
        return np.column_stack([1.0 - p, p])
    return softmax(raw, axis=1)


def feature_importance(model: GbtModel, kind: str = "gain") -> List[Tuple[str, float]]:
    """
    Features ordered by importance, descending; ties broken by name.

    Args:
        kind: "gain" (total split gain) or "weight" (number of splits)
    """
    if kind == "gain":
        scores = {name: model.feature_importance.get(name, 0.0) for name in model.feature_names}
    elif kind == "weight":
        scores = {name: float(model.split_counts.get(name, 0)) for name in model.feature_names}
    else:
        raise ConfigError(f"unknown importance kind '{kind}'", stage="train")
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))
