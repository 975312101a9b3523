"""Tree-ensemble surrogate over (economy features, profit weight).

A bagged ensemble of exact-greedy variance-reduction regression trees,
selected over a small hyperparameter grid by group-aware k-fold CV,
then refit on all rows.  The fitted model recommends a near-optimal
profit weight by grid argmax, explains itself globally via normalized
impurity-decrease importances, and locally via permutation-sampling
Shapley values with an exact efficiency correction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .rng import stream
from .worldgen import ValidationError

DEFAULT_GRID = (
    {"n_trees": 20, "max_depth": 6, "min_leaf": 5},
    {"n_trees": 40, "max_depth": 8, "min_leaf": 3},
    {"n_trees": 20, "max_depth": 10, "min_leaf": 2},
)

MODEL_FORMAT_VERSION = 1
BACKGROUND_ROWS = 256


@dataclass
class SurrogateData:
    """Training table: features (w1 included as a column), target score,
    and the firm grouping with its near-optimal-w1 labels."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    w1_index: int
    groups: np.ndarray
    labels: dict[int, float]

    @classmethod
    def from_rows(cls, dataset_rows, label_rows, feature_names) -> "SurrogateData":
        """Build from experiment rows: [sim, firm, *features, w1, target]."""
        X = []
        y = []
        groups = []
        keymap: dict[tuple, int] = {}
        for row in dataset_rows:
            sim, fid = int(row[0]), int(row[1])
            key = (sim, fid)
            gid = keymap.setdefault(key, len(keymap))
            X.append([float(v) for v in row[2:-1]])
            y.append(float(row[-1]))
            groups.append(gid)
        labels = {}
        for sim, fid, w1 in label_rows:
            key = (int(sim), int(fid))
            if key in keymap:
                labels[keymap[key]] = float(w1)
        names = list(feature_names) + ["w1"]
        return cls(
            X=np.asarray(X, dtype=np.float64),
            y=np.asarray(y, dtype=np.float64),
            feature_names=names,
            w1_index=len(names) - 1,
            groups=np.asarray(groups, dtype=np.int64),
            labels=labels,
        )


# -- trees -------------------------------------------------------------------


def _build_tree(X, y, max_depth, min_leaf, importance):
    """Exact greedy variance-reduction tree; thresholds are observed values
    (x <= threshold goes left).  Returns flat node arrays."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def grow(idx, depth):
        node = new_node()
        ys = y[idx]
        value[node] = float(ys.mean())
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        parent_sse = float(((ys - ys.mean()) ** 2).sum())
        if parent_sse <= 1e-12:
            return node

        best_gain = 0.0
        best = None
        n = idx.size
        total = ys.sum()
        for j in range(X.shape[1]):
            xs = X[idx, j]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            ys_sorted = ys[order]
            cuts = np.flatnonzero(xs_sorted[:-1] < xs_sorted[1:]) + 1  # left sizes
            if cuts.size == 0:
                continue
            cuts = cuts[(cuts >= min_leaf) & (n - cuts >= min_leaf)]
            if cuts.size == 0:
                continue
            prefix = np.cumsum(ys_sorted)
            left_sum = prefix[cuts - 1]
            right_sum = total - left_sum
            # Maximizing explained sum of squares == minimizing child SSE.
            explained = left_sum**2 / cuts + right_sum**2 / (n - cuts) - total**2 / n
            pos = int(np.argmax(explained))
            gain = float(explained[pos])
            if gain > best_gain + 1e-12:
                best_gain = gain
                best = (j, float(xs_sorted[cuts[pos] - 1]), order, cuts[pos])
        if best is None:
            return node

        j, thr, order, n_left = best
        importance[j] += best_gain
        feature[node] = j
        threshold[node] = thr
        left[node] = grow(idx[order[:n_left]], depth + 1)
        right[node] = grow(idx[order[n_left:]], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return {
        "feature": np.asarray(feature, dtype=np.int64),
        "threshold": np.asarray(threshold, dtype=np.float64),
        "left": np.asarray(left, dtype=np.int64),
        "right": np.asarray(right, dtype=np.int64),
        "value": np.asarray(value, dtype=np.float64),
    }


def _apply_tree(tree, X):
    node = np.zeros(X.shape[0], dtype=np.int64)
    out = np.empty(X.shape[0])
    active = np.arange(X.shape[0])
    while active.size:
        nd = node[active]
        feats = tree["feature"][nd]
        leaf = feats < 0
        if leaf.any():
            done = active[leaf]
            out[done] = tree["value"][node[done]]
            active = active[~leaf]
            if not active.size:
                break
            nd = node[active]
            feats = tree["feature"][nd]
        go_left = X[active, feats] <= tree["threshold"][nd]
        node[active] = np.where(go_left, tree["left"][nd], tree["right"][nd])
    return out


@dataclass
class TreeEnsembleModel:
    feature_names: list[str]
    w1_index: int
    trees: list[dict]
    hyperparams: dict
    baseline: float = 0.0
    background: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    importance: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise ValidationError(
                [f"expected {len(self.feature_names)} features, got {X.shape[1]}"]
            )
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += _apply_tree(tree, X)
        return acc / len(self.trees)

    def save(self, path) -> None:
        doc = {
            "version": MODEL_FORMAT_VERSION,
            "feature_names": self.feature_names,
            "w1_index": self.w1_index,
            "hyperparams": self.hyperparams,
            "baseline": self.baseline,
            "importance": self.importance.tolist(),
            "background": self.background.tolist(),
            "trees": [
                {k: (v.tolist() if k != "feature" else v.tolist()) for k, v in t.items()}
                for t in self.trees
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TreeEnsembleModel":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValidationError([f"unsupported model format version: {doc.get('version')}"])
        trees = [
            {
                "feature": np.asarray(t["feature"], dtype=np.int64),
                "threshold": np.asarray(t["threshold"], dtype=np.float64),
                "left": np.asarray(t["left"], dtype=np.int64),
                "right": np.asarray(t["right"], dtype=np.int64),
                "value": np.asarray(t["value"], dtype=np.float64),
            }
            for t in doc["trees"]
        ]
        return cls(
            feature_names=list(doc["feature_names"]),
            w1_index=int(doc["w1_index"]),
            trees=trees,
            hyperparams=dict(doc["hyperparams"]),
            baseline=float(doc["baseline"]),
            background=np.asarray(doc["background"], dtype=np.float64),
            importance=np.asarray(doc["importance"], dtype=np.float64),
        )


def _fit_ensemble(X, y, hp, seed) -> tuple[list[dict], np.ndarray]:
    trees = []
    importance = np.zeros(X.shape[1])
    n = X.shape[0]
    for i in range(hp["n_trees"]):
        rng = stream(seed, "tree", i)
        boot = rng.integers(0, n, size=n)
        trees.append(_build_tree(X[boot], y[boot], hp["max_depth"], hp["min_leaf"], importance))
    return trees, importance


# -- cross-validated fitting ---------------------------------------------------


@dataclass
class EvalReport:
    k: int
    selected: dict
    per_fold: list[dict]
    grid_results: list[dict]

    def aggregate(self, key: str) -> float:
        return float(np.mean([fold[key] for fold in self.per_fold]))


def _r2(y_true, y_pred) -> float:
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    ss_res = float(((y_true - y_pred) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def _group_folds(groups: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Disjoint covering row folds, split by group id, seed-deterministic."""
    unique = np.unique(groups)
    order = unique[stream(seed, "folds").permutation(unique.size)]
    fold_of_group = {int(g): i % k for i, g in enumerate(order)}
    row_fold = np.array([fold_of_group[int(g)] for g in groups])
    return [np.flatnonzero(row_fold == i) for i in range(k)]


def fit_surrogate(
    data: SurrogateData,
    grid=DEFAULT_GRID,
    k: int = 5,
    seed: int = 0,
    rec_resolution: int = 101,
) -> tuple[TreeEnsembleModel, EvalReport]:
    """Grid-search by k-fold CV, refit the winner on all rows.

    Per fold the report carries score-prediction MAE/R2 and, where
    labels exist, recommendation-vs-label MAE/R2.
    """
    n = data.X.shape[0]
    if not grid:
        raise ValidationError(["hyperparameter grid must not be empty"])
    if n < k:
        raise ValidationError([f"dataset has {n} rows, fewer than k={k} folds"])
    folds = _group_folds(data.groups, k, seed)

    grid_results = []
    best_idx = 0
    best_r2 = -np.inf
    fold_details: list[list[dict]] = []
    for gi, hp in enumerate(grid):
        details = []
        for fi, test_idx in enumerate(folds):
            if test_idx.size == 0:
                continue
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            Xtr, ytr = data.X[train_mask], data.y[train_mask]
            trees, _ = _fit_ensemble(Xtr, ytr, hp, stream(seed, "cv", gi, fi).integers(2**63))
            model = TreeEnsembleModel(data.feature_names, data.w1_index, trees, dict(hp))
            pred = model.predict(data.X[test_idx])
            detail = {
                "fold": fi,
                "score_mae": float(np.abs(pred - data.y[test_idx]).mean()),
                "score_r2": _r2(data.y[test_idx], pred),
                "n_rows": int(test_idx.size),
            }
            recs, labels = [], []
            for gid in np.unique(data.groups[test_idx]):
                if int(gid) not in data.labels:
                    continue
                rows = np.flatnonzero(data.groups == gid)
                features = np.delete(data.X[rows[0]], data.w1_index)
                recs.append(recommend_profit_weight(model, features, rec_resolution))
                labels.append(data.labels[int(gid)])
            if labels:
                recs = np.asarray(recs)
                labels = np.asarray(labels)
                detail["rec_mae"] = float(np.abs(recs - labels).mean())
                detail["rec_r2"] = _r2(labels, recs)
                detail["n_groups"] = int(labels.size)
            details.append(detail)
        mean_r2 = float(np.mean([d["score_r2"] for d in details]))
        grid_results.append({"hyperparams": dict(hp), "mean_score_r2": mean_r2})
        fold_details.append(details)
        if mean_r2 > best_r2:
            best_r2 = mean_r2
            best_idx = gi

    hp = dict(grid[best_idx])
    trees, importance = _fit_ensemble(data.X, data.y, hp, stream(seed, "final").integers(2**63))
    total = importance.sum()
    model = TreeEnsembleModel(
        feature_names=data.feature_names,
        w1_index=data.w1_index,
        trees=trees,
        hyperparams=hp,
        importance=importance / total if total > 0 else importance,
    )
    model.baseline = float(model.predict(data.X).mean())
    take = min(BACKGROUND_ROWS, n)
    pick = stream(seed, "background").choice(n, size=take, replace=False)
    model.background = data.X[np.sort(pick)]
    report = EvalReport(
        k=k, selected=hp, per_fold=fold_details[best_idx], grid_results=grid_results
    )
    return model, report


# -- inference-side operations ---------------------------------------------


def predict_score(model: TreeEnsembleModel, features, w1: float) -> float:
    """Predicted target for one firm-feature vector at a given profit weight."""
    features = np.asarray(features, dtype=np.float64)
    if features.size != len(model.feature_names) - 1:
        raise ValidationError(
            [f"expected {len(model.feature_names) - 1} firm features, got {features.size}"]
        )
    row = np.insert(features, model.w1_index, w1)
    return float(model.predict(row[None, :])[0])


def recommend_profit_weight(model: TreeEnsembleModel, features, resolution: int = 101) -> float:
    """Grid argmax of the predicted score over w1 in [0,1]; ties -> lower w1."""
    if resolution < 11:
        raise ValidationError(["recommendation grid resolution must be >= 11"])
    features = np.asarray(features, dtype=np.float64)
    if features.size != len(model.feature_names) - 1:
        raise ValidationError(
            [f"expected {len(model.feature_names) - 1} firm features, got {features.size}"]
        )
    w1s = np.linspace(0.0, 1.0, resolution)
    X = np.repeat(features[None, :], resolution, axis=0)
    X = np.insert(X, model.w1_index, w1s, axis=1)
    preds = model.predict(X)
    return float(w1s[int(np.argmax(preds))])


def feature_importance(model: TreeEnsembleModel) -> dict[str, float]:
    """Normalized impurity-decrease share per feature (sums to 1)."""
    return {name: float(v) for name, v in zip(model.feature_names, model.importance)}


@dataclass
class Attribution:
    feature_names: list[str]
    values: list[float]
    baseline: float
    prediction: float
    n_permutations: int
    sampling_residual: float

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "prediction": self.prediction,
            "n_permutations": self.n_permutations,
            "sampling_residual": self.sampling_residual,
            "contributions": dict(zip(self.feature_names, self.values)),
        }


def shapley_attribution(
    model: TreeEnsembleModel, sample, n_permutations: int = 500, seed: int = 0
) -> Attribution:
    """Permutation-sampling Shapley values with marginal background draws.

    Each permutation walks one background row toward the sample feature
    by feature, crediting prediction deltas.  The leftover between the
    summed credits and (prediction - baseline) is spread over features
    proportionally to |credit| so efficiency holds exactly.
    """
    if n_permutations < 10:
        raise ValidationError(["n_permutations must be >= 10"])
    if model.background.size == 0:
        raise ValidationError(["model carries no background sample for attribution"])
    x = np.asarray(sample, dtype=np.float64)
    P = len(model.feature_names)
    if x.size != P:
        raise ValidationError([f"expected {P} features, got {x.size}"])

    rng = stream(seed, "shapley")
    perms = np.stack([rng.permutation(P) for _ in range(n_permutations)])
    zs = model.background[rng.integers(0, model.background.shape[0], size=n_permutations)]

    # One (P+1)-row block per permutation: background, then cumulative overwrites.
    blocks = np.empty((n_permutations * (P + 1), P))
    for i in range(n_permutations):
        cur = zs[i].copy()
        blocks[i * (P + 1)] = cur
        for step, j in enumerate(perms[i]):
            cur[j] = x[j]
            blocks[i * (P + 1) + step + 1] = cur
    preds = model.predict(blocks).reshape(n_permutations, P + 1)
    deltas = np.diff(preds, axis=1)

    contrib = np.zeros(P)
    for i in range(n_permutations):
        contrib[perms[i]] += deltas[i]
    contrib /= n_permutations

    prediction = float(model.predict(x[None, :])[0])
    residual = (prediction - model.baseline) - float(contrib.sum())
    weights = np.abs(contrib)
    if weights.sum() > 0:
        contrib = contrib + residual * weights / weights.sum()
    else:
        contrib = contrib + residual / P
    # Exact efficiency: absorb float dust into the largest contribution.
    dust = (prediction - model.baseline) - float(contrib.sum())
    contrib[int(np.argmax(np.abs(contrib)))] += dust

    return Attribution(
        feature_names=list(model.feature_names),
        values=[float(v) for v in contrib],
        baseline=model.baseline,
        prediction=prediction,
        n_permutations=n_permutations,
        sampling_residual=float(residual),
    )
