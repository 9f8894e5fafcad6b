"""Per-operator latency regressors: CART trees, bagged forests, and
stagewise least-squares gradient boosting.

Targets are fit in log space by default (latencies span several orders of
magnitude across a sampling grid and the selection metric is relative).
Fitting is fully deterministic given (samples, hyperparameters, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientData, OpMismatch, PerfcastError
from .workload import OperatorKind, WorkloadVector, op_from_name

_EXP_CLAMP = 60.0  # log-space predictions are clamped to +-60 before exp


@dataclass
class TreeNode:
    """Axis-aligned binary regression tree stored as flat node arrays."""

    feature: np.ndarray   # int, -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.intp)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                break
            idx = np.where(active)[0]
            go_left = X[idx, feat[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])
        return self.value[node]


def _best_split(X, y, min_samples_leaf, feature_indices):
    """Greedy variance-reduction split; thresholds are midpoints of sorted
    unique values. Returns (gain, feature, threshold) or None."""
    n = len(y)
    if n < 2 * min_samples_leaf:
        return None
    total, total2 = y.sum(), (y * y).sum()
    parent_sse = total2 - total * total / n
    best = None
    for j in feature_indices:
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        cut = np.arange(min_samples_leaf - 1, n - min_samples_leaf)
        if len(cut) == 0:
            continue
        valid = xs[cut] < xs[cut + 1]
        if not valid.any():
            continue
        cs, cs2 = np.cumsum(ys), np.cumsum(ys * ys)
        nl = cut + 1.0
        nr = n - nl
        sl, sl2 = cs[cut], cs2[cut]
        child_sse = (sl2 - sl * sl / nl) + ((total2 - sl2) - (total - sl) ** 2 / nr)
        child_sse = np.where(valid, child_sse, np.inf)
        i = int(np.argmin(child_sse))
        gain = parent_sse - child_sse[i]
        if gain > 1e-12 and (best is None or gain > best[0] + 1e-15):
            thr = (xs[cut[i]] + xs[cut[i] + 1]) / 2.0
            best = (float(gain), int(j), float(thr))
    return best


def fit_tree(X, y, max_depth: int = 12, min_samples_leaf: int = 1,
             rng: np.random.Generator | None = None,
             max_features: int | None = None) -> TreeNode:
    """CART regression tree on (X, y). Splits are rejected when they cannot
    reduce variance; leaves predict the sample mean."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise InsufficientData("cannot fit a tree on zero samples")
    k = X.shape[1]

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx, depth):
        node = new_node()
        value[node] = float(y[idx].mean())
        if depth >= max_depth:
            return node
        if max_features is not None and max_features < k and rng is not None:
            feats = np.sort(rng.choice(k, size=max_features, replace=False))
        else:
            feats = range(k)
        split = _best_split(X[idx], y[idx], min_samples_leaf, feats)
        if split is None:
            return node
        _, j, thr = split
        mask = X[idx, j] <= thr
        feature[node], threshold[node] = j, thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(len(y)), 0)
    return TreeNode(np.asarray(feature, dtype=np.intp),
                    np.asarray(threshold, dtype=float),
                    np.asarray(left, dtype=np.intp),
                    np.asarray(right, dtype=np.intp),
                    np.asarray(value, dtype=float))


@dataclass
class TrainedRegressor:
    """Immutable fitted ensemble for one (operator, direction) pair."""

    kind: str                    # "forest" | "gbt"
    trees: list[TreeNode]
    op: OperatorKind | None = None
    direction: str | None = None
    gbt_learning_rate: float = 0.0
    gbt_base: float = 0.0
    log_target: bool = True
    hyperparams: dict = field(default_factory=dict)
    train_stats: dict = field(default_factory=dict)
    feat_min: tuple[float, ...] = ()
    feat_max: tuple[float, ...] = ()

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "forest":
            z = np.mean([t.predict(X) for t in self.trees], axis=0) \
                if self.trees else np.zeros(len(X))
        else:
            z = np.full(len(X), self.gbt_base)
            for t in self.trees:
                z = z + self.gbt_learning_rate * t.predict(X)
        if self.log_target:
            return np.exp(np.clip(z, -_EXP_CLAMP, _EXP_CLAMP))
        return z

    def is_extrapolation(self, feats) -> bool:
        if not self.feat_min:
            return False
        return any(f < lo or f > hi
                   for f, lo, hi in zip(feats, self.feat_min, self.feat_max))


def _as_arrays(samples):
    X = np.asarray([list(f) for f, _ in samples], dtype=float)
    y = np.asarray([t for _, t in samples], dtype=float)
    return X, y


def _targets(y, log_target):
    if not log_target:
        return y
    if (y <= 0).any():
        raise PerfcastError("log-target fit requires strictly positive targets")
    return np.log(y)


def _ranges(X):
    return tuple(X.min(axis=0)), tuple(X.max(axis=0))


def fit_forest(samples, n_trees: int = 100, max_depth: int = 12,
               min_samples_leaf: int = 1, seed: int = 0, bootstrap: bool = True,
               max_features: int | None = None, log_target: bool = True,
               op=None, direction=None) -> TrainedRegressor:
    """Random forest: CARTs on bootstrap resamples, mean-aggregated.
    Per-tree rngs are keyed by (seed, tree index) so fitting order does not
    matter."""
    X, y = _as_arrays(samples)
    z = _targets(y, log_target)
    trees = []
    for i in range(n_trees):
        rng = np.random.default_rng((seed, i))
        idx = rng.integers(0, len(z), len(z)) if bootstrap else np.arange(len(z))
        trees.append(fit_tree(X[idx], z[idx], max_depth, min_samples_leaf,
                              rng=rng, max_features=max_features))
    lo, hi = _ranges(X)
    return TrainedRegressor(
        "forest", trees, op=op, direction=direction, log_target=log_target,
        hyperparams={"n_trees": n_trees, "max_depth": max_depth,
                     "min_samples_leaf": min_samples_leaf, "seed": seed,
                     "bootstrap": bootstrap},
        train_stats={"n_samples": len(z)}, feat_min=lo, feat_max=hi)


def fit_gbt(samples, n_estimators: int = 300, learning_rate: float = 0.1,
            max_depth: int = 6, min_samples_leaf: int = 1, seed: int = 0,
            log_target: bool = True, op=None, direction=None) -> TrainedRegressor:
    """Stagewise least-squares boosting: start from the target mean and
    repeatedly fit depth-bounded trees to the residuals."""
    X, y = _as_arrays(samples)
    z = _targets(y, log_target)
    base = float(z.mean())
    pred = np.full(len(z), base)
    trees = []
    for _ in range(n_estimators):
        t = fit_tree(X, z - pred, max_depth, min_samples_leaf)
        trees.append(t)
        pred = pred + learning_rate * t.predict(X)
    lo, hi = _ranges(X)
    return TrainedRegressor(
        "gbt", trees, op=op, direction=direction,
        gbt_learning_rate=learning_rate, gbt_base=base, log_target=log_target,
        hyperparams={"n_estimators": n_estimators, "learning_rate": learning_rate,
                     "max_depth": max_depth, "min_samples_leaf": min_samples_leaf,
                     "seed": seed},
        train_stats={"n_samples": len(z)}, feat_min=lo, feat_max=hi)


def mape(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    return float(np.mean(np.abs(y_pred - y_true) / np.abs(y_true)))


def default_candidate_grid() -> list[dict]:
    grid = []
    for n_trees in (50, 200):
        for depth in (8, 12):
            grid.append({"kind": "forest", "n_trees": n_trees, "max_depth": depth})
    for n_est in (200, 500):
        for lr in (0.05, 0.1):
            for depth in (4, 6):
                grid.append({"kind": "gbt", "n_estimators": n_est,
                             "learning_rate": lr, "max_depth": depth})
    return grid


@dataclass
class FitReport:
    candidates: list[dict]
    val_mape: list[float]
    selected: int
    train_mape: float
    n_train: int
    n_val: int

    def rows(self):
        for i, (cand, err) in enumerate(zip(self.candidates, self.val_mape)):
            yield {"candidate": cand, "val_mape": err, "selected": i == self.selected}


def _fit_candidate(cand: dict, samples, seed: int, log_target: bool,
                   op=None, direction=None) -> TrainedRegressor:
    params = {k: v for k, v in cand.items() if k != "kind"}
    if cand["kind"] == "forest":
        return fit_forest(samples, seed=seed, log_target=log_target,
                          op=op, direction=direction, **params)
    if cand["kind"] == "gbt":
        return fit_gbt(samples, seed=seed, log_target=log_target,
                       op=op, direction=direction, **params)
    raise PerfcastError(f"unknown candidate kind {cand['kind']!r}")


def _candidate_size(cand: dict) -> tuple[int, int]:
    trees = cand.get("n_trees", cand.get("n_estimators", 0))
    return trees, cand.get("max_depth", 0)


def select_model(samples, candidate_grid=None, seed: int = 0,
                 log_target: bool = True, op=None,
                 direction=None) -> tuple[TrainedRegressor, FitReport]:
    """Score every candidate on a deterministic 80/20 split by MAPE, then
    refit the winner on the full dataset. Ties break toward fewer trees,
    then shallower depth, then grid order."""
    samples = list(samples)
    if len(samples) < 10:
        raise InsufficientData(f"need >= 10 samples, got {len(samples)}")
    if candidate_grid is None:
        candidate_grid = default_candidate_grid()
    if not candidate_grid:
        raise PerfcastError("empty candidate grid")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(samples))
    n_val = max(1, len(samples) // 5)
    val_idx = set(perm[:n_val].tolist())
    train = [samples[i] for i in range(len(samples)) if i not in val_idx]
    val = [samples[i] for i in sorted(val_idx)]
    val_X = [list(f) for f, _ in val]
    val_y = [t for _, t in val]

    scores = []
    for cand in candidate_grid:
        model = _fit_candidate(cand, train, seed, log_target, op, direction)
        scores.append(mape(val_y, model.predict(val_X)))

    order = sorted(range(len(candidate_grid)),
                   key=lambda i: (scores[i], *_candidate_size(candidate_grid[i]), i))
    best = order[0]
    final = _fit_candidate(candidate_grid[best], samples, seed, log_target,
                           op, direction)
    full_X = [list(f) for f, _ in samples]
    full_y = [t for _, t in samples]
    train_err = mape(full_y, final.predict(full_X))
    final.train_stats.update({"val_mape": scores[best], "n_samples": len(samples)})
    report = FitReport(list(candidate_grid), scores, best, train_err,
                       len(train), len(val))
    return final, report


def predict_latency(model: TrainedRegressor, vec: WorkloadVector) -> float:
    """Latency (microseconds) for one workload vector."""
    if model.op is not None and model.op is not vec.op:
        raise OpMismatch(f"model is for {model.op}, vector is {vec.op}")
    if model.direction is not None and model.direction != vec.direction:
        raise OpMismatch(f"model is for direction {model.direction!r}, "
                         f"vector is {vec.direction!r}")
    out = float(model.predict([list(vec.feats)])[0])
    return max(out, 0.0)


# --- model file format -------------------------------------------------
#
# Self-describing UTF-8 text, one declaration per line:
#
#   perfcast-model v1
#   op <OperatorName|->         direction <fwd|bwd|na|->
#   kind <forest|gbt>           log_target <0|1>
#   learning_rate/base          (gbt coefficients, hex floats)
#   feat_min / feat_max         training feature hull, hex floats
#   hyperparams/train_stats     single-line JSON
#   trees <count>, then per tree:
#     tree <n_nodes>
#     <feature> <threshold.hex> <left> <right> <value.hex>   (one per node)
#
# Hex floats make load(save(m)) prediction-equivalent bit for bit.

_MAGIC = "perfcast-model v1"


def save_model(model: TrainedRegressor, path):
    lines = [_MAGIC,
             f"op {model.op.value if model.op else '-'}",
             f"direction {model.direction or '-'}",
             f"kind {model.kind}",
             f"log_target {int(model.log_target)}",
             f"learning_rate {float(model.gbt_learning_rate).hex()}",
             f"base {float(model.gbt_base).hex()}",
             "feat_min " + " ".join(float(v).hex() for v in model.feat_min),
             "feat_max " + " ".join(float(v).hex() for v in model.feat_max),
             "hyperparams " + json.dumps(model.hyperparams, sort_keys=True),
             "train_stats " + json.dumps(model.train_stats, sort_keys=True),
             f"trees {len(model.trees)}"]
    for t in model.trees:
        lines.append(f"tree {t.n_nodes}")
        for i in range(t.n_nodes):
            lines.append(f"{t.feature[i]} {float(t.threshold[i]).hex()} "
                         f"{t.left[i]} {t.right[i]} {float(t.value[i]).hex()}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    tmp.replace(path)


class _LineReader:
    def __init__(self, text):
        self.lines = text.split("\n")
        self.i = 0
        self.offset = 0

    def next(self, expect: str | None = None) -> str:
        if self.i >= len(self.lines):
            raise FormatError(self.offset, "unexpected end of file")
        line = self.lines[self.i]
        self.i += 1
        at = self.offset
        self.offset += len(line.encode("utf-8")) + 1
        if expect is not None:
            if not line.startswith(expect + " ") and line != expect:
                raise FormatError(at, f"expected {expect!r}, got {line!r}")
            return line[len(expect):].strip()
        return line


def load_model(path) -> TrainedRegressor:
    text = Path(path).read_text(encoding="utf-8")
    r = _LineReader(text)
    if r.next() != _MAGIC:
        raise FormatError(0, f"bad magic, expected {_MAGIC!r}")
    try:
        op_s = r.next("op")
        op = None if op_s == "-" else op_from_name(op_s)
        dir_s = r.next("direction")
        direction = None if dir_s == "-" else dir_s
        kind = r.next("kind")
        log_target = bool(int(r.next("log_target")))
        lr = float.fromhex(r.next("learning_rate"))
        base = float.fromhex(r.next("base"))
        feat_min = tuple(float.fromhex(v) for v in r.next("feat_min").split())
        feat_max = tuple(float.fromhex(v) for v in r.next("feat_max").split())
        hyperparams = json.loads(r.next("hyperparams"))
        train_stats = json.loads(r.next("train_stats"))
        n_trees = int(r.next("trees"))
        trees = []
        for _ in range(n_trees):
            n_nodes = int(r.next("tree"))
            feats = np.empty(n_nodes, dtype=np.intp)
            thr = np.empty(n_nodes)
            left = np.empty(n_nodes, dtype=np.intp)
            right = np.empty(n_nodes, dtype=np.intp)
            val = np.empty(n_nodes)
            for i in range(n_nodes):
                parts = r.next().split()
                if len(parts) != 5:
                    raise FormatError(r.offset, "malformed node line")
                feats[i] = int(parts[0])
                thr[i] = float.fromhex(parts[1])
                left[i] = int(parts[2])
                right[i] = int(parts[3])
                val[i] = float.fromhex(parts[4])
            trees.append(TreeNode(feats, thr, left, right, val))
    except FormatError:
        raise
    except (ValueError, KeyError) as exc:
        raise FormatError(r.offset, str(exc)) from None
    if kind not in ("forest", "gbt"):
        raise FormatError(0, f"unknown model kind {kind!r}")
    return TrainedRegressor(kind, trees, op=op, direction=direction,
                            gbt_learning_rate=lr, gbt_base=base,
                            log_target=log_target, hyperparams=hyperparams,
                            train_stats=train_stats,
                            feat_min=feat_min, feat_max=feat_max)
