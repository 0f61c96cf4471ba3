"""Plan features, the edge-weighted GIN cost model, training and Q-error.

Node features: a pattern row is ``e_s | e_p | e_o | 0`` with
``e_x = v | emb(x) | c``; a join row is all zeros except the final
indicator, which is 1.  ``emb`` is a seeded pseudo-embedding of unit
norm (all ones for variables) and ``c = log(1 + count(x))`` (0 for
variables).

Message passing runs along plan edges, child to parent:
``z_i = MLP((1 + eps) h_i + sum_j A[j, i] h_j)``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .plan import Plan, Query, Variable, encode, matrix_size
from .storage import TripleStore

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


def feature_width(d_e: int) -> int:
    return 3 * (d_e + 2) + 1


def pseudo_embedding(label: str, d_e: int, seed: int = 0) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    v = rng.standard_normal(d_e)
    return v / np.linalg.norm(v)


def build_features(query: Query, d_e: int, store: TripleStore, seed: int = 0) -> np.ndarray:
    """``N x F`` feature matrix for all ``2n - 1`` plan nodes of ``query``."""
    n = query.n
    width = d_e + 2
    x = np.zeros((matrix_size(n), feature_width(d_e)))
    for r, tp in enumerate(query.patterns):
        for k, term in enumerate(tp.terms()):
            block = x[r, k * width:(k + 1) * width]
            if isinstance(term, Variable):
                block[0] = 1.0
                block[1:-1] = 1.0
                block[-1] = 0.0
            else:
                block[1:-1] = pseudo_embedding(store.label_of(term), d_e, seed)
                block[-1] = math.log1p(store.count(term.id))
    x[n:, -1] = 1.0
    return x


def plan_features(x_query: np.ndarray, n_query: int, subset: Sequence[int]) -> np.ndarray:
    """Feature rows of a sub-plan over the patterns in ``subset`` (in order)."""
    m = len(subset)
    rows = [x_query[i] for i in subset]
    if m > 1:
        rows += [x_query[n_query]] * (m - 1)
    return np.array(rows)


# -- model ----------------------------------------------------------------------------

_LAYER_KEYS = ("eps", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "ln_g", "ln_b")


@dataclass
class ModelParams:
    """All weights of the cost model, keyed by name; plus layout constants."""

    tensors: dict[str, T.Tensor]
    d_e: int
    hidden: int
    target_transform: bool = True
    dropout: float = 0.1

    @property
    def n_features(self) -> int:
        return feature_width(self.d_e)

    def parameters(self) -> list[T.Tensor]:
        return [self.tensors[k] for k in sorted(self.tensors)]

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: T.Tensor(v.data) for k, v in self.tensors.items()},
            self.d_e,
            self.hidden,
            self.target_transform,
            self.dropout,
        )

    def to_cost(self, raw: float | np.ndarray):
        """Map raw network output to cost units."""
        if self.target_transform:
            return np.expm1(raw)
        return raw

    def to_target(self, cost):
        if self.target_transform:
            return np.log1p(cost)
        return cost


def init_params(
    d_e: int, hidden: int, seed: int = 0, target_transform: bool = True, dropout: float = 0.1
) -> ModelParams:
    rng = np.random.default_rng(seed)
    F, H = feature_width(d_e), hidden

    def w(fan_in, fan_out):
        return T.Tensor(rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out)))

    def zeros(*shape):
        return T.Tensor(np.zeros(shape))

    p: dict[str, T.Tensor] = {}
    for layer in (1, 2, 3):
        fan_in = F if layer == 1 else H
        p[f"gin{layer}.eps"] = zeros(1, 1)
        p[f"gin{layer}.mlp_w1"] = w(fan_in, H)
        p[f"gin{layer}.mlp_b1"] = zeros(1, H)
        p[f"gin{layer}.mlp_w2"] = w(H, H)
        p[f"gin{layer}.mlp_b2"] = zeros(1, H)
        p[f"gin{layer}.ln_g"] = T.Tensor(np.ones((1, H)))
        p[f"gin{layer}.ln_b"] = zeros(1, H)
    p["proj"] = w(F, H)
    p["head.w1"] = w(H, H)
    p["head.b1"] = zeros(1, H)
    p["head.w2"] = T.Tensor(rng.normal(0.0, 0.01, (H, 1)))
    p["head.b2"] = zeros(1, 1)
    return ModelParams(p, d_e, hidden, target_transform, dropout)


_ONE = T.Tensor(np.ones((1, 1)))


def forward(
    params: ModelParams,
    X,
    A,
    pool=None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> T.Tensor:
    """Raw model output, shape ``(graphs, 1)``.

    ``A`` may be a hard plan matrix or a soft adjacency, as an array or a
    tape tensor.  ``pool`` sums node rows per graph; the default treats all
    rows as one graph.
    """
    X = X if isinstance(X, T.Tensor) else T.Tensor(X)
    A = A if isinstance(A, T.Tensor) else T.Tensor(A)
    N = X.shape[0]
    if A.shape != (N, N):
        raise T.ShapeError(f"adjacency {A.shape} does not match {N} feature rows")
    if X.shape[1] != params.n_features:
        raise T.ShapeError(f"feature width {X.shape[1]} != model width {params.n_features}")
    if pool is None:
        pool = T.Tensor(np.ones((1, N)))
    elif not isinstance(pool, T.Tensor):
        pool = T.Tensor(pool)
    p = params.tensors
    drop = params.dropout

    At = T.transpose(A)
    h = X
    for layer in (1, 2, 3):
        pre = f"gin{layer}."
        agg = T.add(T.mul(h, T.add(p[pre + "eps"], _ONE)), T.matmul(At, h))
        z = T.relu(T.add(T.matmul(agg, p[pre + "mlp_w1"]), p[pre + "mlp_b1"]))
        z = T.add(T.matmul(z, p[pre + "mlp_w2"]), p[pre + "mlp_b2"])
        skip = T.matmul(h, p["proj"]) if layer == 1 else h
        h = T.relu(T.layer_norm(T.add(z, skip), p[pre + "ln_g"], p[pre + "ln_b"]))
        if layer < 3:
            h = T.dropout(h, drop, rng, training)
    pooled = T.matmul(pool, h)
    g = T.relu(T.add(T.matmul(pooled, p["head.w1"]), p["head.b1"]))
    g = T.dropout(g, drop, rng, training)
    return T.abs_(T.add(T.matmul(g, p["head.w2"]), p["head.b2"]))


def predict_raw(params: ModelParams, X: np.ndarray, A: np.ndarray) -> float:
    return forward(params, X, A).item()


def predict_cost(params: ModelParams, X: np.ndarray, A: np.ndarray) -> float:
    return float(params.to_cost(predict_raw(params, X, A)))


def predict_plan(params: ModelParams, x_query: np.ndarray, n_query: int, plan: Plan, subset=None) -> float:
    """Predicted cost (cost units) of ``plan``; with ``subset`` the plan's
    leaf ``i`` stands for query pattern ``subset[i]``."""
    subset = list(range(n_query)) if subset is None else list(subset)
    X = plan_features(x_query, n_query, subset)
    return predict_cost(params, X, encode(plan))


# -- data -------------------------------------------------------------------------


@dataclass
class TrainingExample:
    X: np.ndarray
    A: np.ndarray
    target: float
    query_id: str = ""
    shape: str = ""

    def __post_init__(self):
        if self.target < 0:
            raise ValueError("costs are nonnegative")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 128
    lr: float = 1e-3
    dropout: float = 0.1
    hidden: int = 64
    d_e: int = 8
    seed: int = 0
    val_fraction: float = 0.1
    target_transform: bool = True
    split_by: str = "query"  # "query" holds out whole queries, "plan" holds out plans
    per_shape: bool = True  # one model per query shape

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.hidden < 1 or self.lr <= 0:
            raise ValueError("epochs, batch size, hidden width and learning rate must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.split_by not in ("plan", "query"):
            raise ValueError(f"split_by must be 'plan' or 'query', got {self.split_by!r}")


def collate(examples: Sequence[TrainingExample]):
    """Stack graphs into one block-diagonal batch: ``X``, ``A``, pooling
    matrix and target column."""
    sizes = [e.X.shape[0] for e in examples]
    total = sum(sizes)
    X = np.concatenate([e.X for e in examples], axis=0)
    A = np.zeros((total, total))
    pool = np.zeros((len(examples), total))
    off = 0
    for i, (e, s) in enumerate(zip(examples, sizes)):
        A[off:off + s, off:off + s] = e.A
        pool[i, off:off + s] = 1.0
        off += s
    y = np.array([[e.target] for e in examples])
    return X, A, pool, y


def q_error(predicted: float, true_cost: float) -> float:
    if predicted <= 0 or true_cost <= 0:
        raise ValueError(f"q-error needs positive inputs, got {predicted} and {true_cost}")
    return max(predicted / true_cost, true_cost / predicted)


def smoothed_q_error(predicted: float, true_cost: float) -> float:
    """Q-error after adding 1 to both sides (costs may be 0)."""
    return q_error(max(predicted, 0.0) + 1.0, true_cost + 1.0)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainReport:
    train_mse: list[float] = field(default_factory=list)
    val_median_q: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_median_q: float = math.inf
    n_train: int = 0
    n_val: int = 0
    best_val_q: list[float] = field(default_factory=list)


def split(dataset: Sequence[TrainingExample], val_fraction: float, seed: int, by: str = "query"):
    """Deterministic train/validation split.

    ``by="query"`` keeps every query on one side; ``by="plan"`` draws
    validation plans uniformly.
    """
    ids = sorted({e.query_id for e in dataset})
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_val = max(1, int(round(val_fraction * len(ids))))
    if len(ids) == 1 or by == "plan":
        idx = rng.permutation(len(dataset))
        k = max(1, int(round(val_fraction * len(dataset))))
        val = [dataset[i] for i in sorted(idx[:k])]
        train = [dataset[i] for i in sorted(idx[k:])] or val
        return train, val
    val_ids = {ids[i] for i in order[:n_val]}
    train = [e for e in dataset if e.query_id not in val_ids]
    val = [e for e in dataset if e.query_id in val_ids]
    return train, val


def evaluate_q(params: ModelParams, examples: Sequence[TrainingExample], batch_size: int = 256) -> np.ndarray:
    out = []
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        X, A, pool, y = collate(chunk)
        raw = forward(params, X, A, pool).data[:, 0]
        pred = params.to_cost(raw)
        out.extend(smoothed_q_error(float(p), e.target) for p, e in zip(pred, chunk))
    return np.array(out)


def train(dataset: Sequence[TrainingExample], config: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Mini-batch Adam on MSE; keeps the epoch with the lowest validation
    median Q-error."""
    if not dataset:
        raise ValueError("empty training set")
    train_set, val_set = split(dataset, config.val_fraction, config.seed, config.split_by)
    params = init_params(config.d_e, config.hidden, config.seed, config.target_transform, config.dropout)
    targets = np.array([params.to_target(e.target) for e in train_set])
    params.tensors["head.b2"].data[:] = float(np.mean(targets))
    for prm in params.parameters():
        prm.requires_grad = True
    opt = T.Adam(params.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    report = TrainReport(n_train=len(train_set), n_val=len(val_set))
    best = params.copy()

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            chunk = [train_set[i] for i in order[start:start + config.batch_size]]
            X, A, pool, y = collate(chunk)
            y = params.to_target(y)
            for prm in params.parameters():
                prm.grad = None
            with T.Tape() as tape:
                out = forward(params, X, A, pool, training=True, rng=rng)
                loss = T.scale(T.sum_all(T.square(T.sub(out, T.Tensor(y)))), 1.0 / len(chunk))
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            tape.backward(loss)
            opt.step()
            losses.append(value)
        qs = evaluate_q(params, val_set)
        q = float(np.median(qs))
        report.train_mse.append(float(np.mean(losses)))
        report.val_median_q.append(q)
        if q < report.best_val_median_q:
            report.best_val_median_q = q
            report.best_epoch = epoch
            report.best_val_q = qs.tolist()
            best = params.copy()
        log.info("epoch %d  train mse %.4f  val median q %.3f", epoch, report.train_mse[-1], q)

    for prm in best.parameters():
        prm.requires_grad = False
    return best, report


ANY_SHAPE = "*"


@dataclass
class ModelSet:
    """Cost models keyed by query shape; ``"*"`` serves any shape."""

    models: dict[str, ModelParams]

    def for_shape(self, shape: str) -> ModelParams:
        if shape in self.models:
            return self.models[shape]
        if ANY_SHAPE in self.models:
            return self.models[ANY_SHAPE]
        raise KeyError(f"no cost model for query shape {shape!r}")

    @property
    def d_e(self) -> int:
        widths = {m.d_e for m in self.models.values()}
        if len(widths) != 1:
            raise ModelFormatError(f"models disagree on embedding width: {sorted(widths)}")
        return widths.pop()


def train_models(
    dataset: Sequence[TrainingExample], config: TrainConfig
) -> tuple[ModelSet, dict[str, TrainReport], float]:
    """Train one model per shape (or one for all) and return the pooled
    validation median Q-error of the selected models."""
    groups: dict[str, list[TrainingExample]] = {}
    for e in dataset:
        key = (e.shape or ANY_SHAPE) if config.per_shape else ANY_SHAPE
        groups.setdefault(key, []).append(e)
    models, reports = {}, {}
    for key in sorted(groups):
        log.info("training cost model for shape %s on %d plans", key, len(groups[key]))
        models[key], reports[key] = train(groups[key], config)
    pooled = [q for r in reports.values() for q in r.best_val_q]
    return ModelSet(models), reports, float(np.median(pooled))


# -- persistence ------------------------------------------------------------------


class ModelFormatError(ValueError):
    pass


def _model_doc(params: ModelParams) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "d_e": params.d_e,
        "hidden": params.hidden,
        "n_features": params.n_features,
        "target_transform": params.target_transform,
        "dropout": params.dropout,
        "tensors": {
            k: {"shape": list(v.shape), "data": [repr(float(x)) for x in v.data.ravel()]}
            for k, v in sorted(params.tensors.items())
        },
    }


def _write_json(doc: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def save_model(params: ModelParams, path: str | Path) -> None:
    _write_json(_model_doc(params), path)


def save_models(models: "ModelSet", path: str | Path) -> None:
    doc = {"format_version": MODEL_FORMAT_VERSION, "models": {k: _model_doc(v) for k, v in models.models.items()}}
    _write_json(doc, path)


def _read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format {doc.get('format_version')!r}")
    return doc


def load_model(path: str | Path) -> ModelParams:
    doc = _read_json(path)
    if "models" in doc:
        raise ModelFormatError("file holds a model set; use load_models")
    return _params_from_doc(doc)


def load_models(path: str | Path) -> "ModelSet":
    """A model set file, or a single model used for every shape."""
    doc = _read_json(path)
    if "models" not in doc:
        return ModelSet({ANY_SHAPE: _params_from_doc(doc)})
    models = {k: _params_from_doc({"format_version": MODEL_FORMAT_VERSION, **v}) for k, v in doc["models"].items()}
    if not models:
        raise ModelFormatError("empty model set")
    return ModelSet(models)


def _params_from_doc(doc: dict) -> ModelParams:
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format {doc.get('format_version')!r}")
    d_e, hidden = int(doc["d_e"]), int(doc["hidden"])
    if int(doc["n_features"]) != feature_width(d_e):
        raise ModelFormatError("feature width does not match d_e")
    tensors = {}
    for k, v in doc["tensors"].items():
        data = np.array([float(x) for x in v["data"]]).reshape(v["shape"])
        tensors[k] = T.Tensor(data)
    params = ModelParams(tensors, d_e, hidden, bool(doc["target_transform"]), float(doc["dropout"]))
    ref = init_params(d_e, hidden)
    for k, v in ref.tensors.items():
        if k not in tensors or tensors[k].shape != v.shape:
            raise ModelFormatError(f"tensor {k} missing or misshapen")
    return params
