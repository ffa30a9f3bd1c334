"""
End-to-end training and evaluation.

Targets at every level are turned into pooled embeddings: node and edge
targets pool their sampled max-RQ subgraph with hop-decay weights, whole
graphs use mean pooling. Sampling runs once per run (`prepare`), after which
each epoch is encoder -> pooling -> stitch forward -> per-level losses ->
gradient surgery -> momentum step.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import scipy.sparse as sp

from .autograd import Tensor, spmm
from .data import PARTS, Dataset, leakage_free_graph
from .errors import ConfigError
from .graph_core import UNLABELED, composite_feature
from .metrics import auprc, auroc, macro_f1
from .nn import params_from_json, params_to_json, sgc_propagate
from .sampler import SamplerCache
from .stitch import (LEVELS, GraphStitchModel, MomentumSGD, anomaly_ratio, forward,
                     level_name, multi_level_step, weighted_ce_loss)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    depth: int = 2
    decay: float = 0.5
    hidden_dim: int = 32
    propagation_steps: int = 2
    num_layers: int = 2
    lr: float = 1e-3
    momentum: float = 0.9
    clip: float = 5.0
    epochs: int = 300
    seed: int = 0
    train_frac: float = 0.4
    levels: tuple = ("node", "edge", "graph")
    mask_levels: tuple = ()
    gamma_mode: str = "inverse"
    beta_node: float = 1.0
    beta_edge: float = 1.0
    beta_graph: float = 1.0
    train_encoder: bool = True
    train_stitch: bool = True
    threads: int = 1

    def __post_init__(self):
        self.levels = tuple(level_name(l) for l in self.levels)
        self.mask_levels = tuple(level_name(l) for l in self.mask_levels)
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("decay must lie in (0, 1]")
        if self.epochs < 1 or self.lr <= 0:
            raise ConfigError("epochs and lr must be positive")
        if self.gamma_mode not in ("inverse", "direct", "none"):
            raise ConfigError(f"unknown gamma_mode {self.gamma_mode!r}")
        if not 0.0 < self.train_frac < 1.0:
            raise ConfigError("train_frac must lie in (0, 1)")

    def beta(self, level: str) -> float:
        return getattr(self, f"beta_{level}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels"] = list(self.levels)
        d["mask_levels"] = list(self.mask_levels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Prepared:
    """Everything the training loop needs, computed once per run."""

    H: np.ndarray
    pool: dict[str, dict[str, sp.csr_matrix]]
    targets: dict[str, dict[str, np.ndarray]]
    labels: dict[str, dict[str, np.ndarray]]
    sampler: SamplerCache

    def has_labels(self, level: str, part: str) -> bool:
        return len(self.labels[level][part]) > 0


def _subgraph_rows(subs, n_nodes: int) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, s in enumerate(subs):
        for v, w in s.pool_weights.items():
            rows.append(i)
            cols.append(v)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(subs), n_nodes))


def _graph_rows(dataset: Dataset, graph_ids: np.ndarray) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i, g in enumerate(graph_ids.tolist()):
        lo, hi = dataset.offsets[g], dataset.offsets[g + 1]
        n = hi - lo
        rows.extend([i] * n)
        cols.extend(range(lo, hi))
        vals.extend([1.0 / n] * n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(graph_ids), dataset.union.node_count))


def standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def prepare(dataset: Dataset, config: TrainConfig) -> Prepared:
    """Propagate features and sample every labeled target once."""
    if not dataset.split:
        raise ConfigError("dataset must be split before training")
    g = leakage_free_graph(dataset)
    raw = dataset.union.features
    H = sgc_propagate(g, standardize(raw), config.propagation_steps)
    sampler = SamplerCache(g, composite_feature(raw), config.depth, config.decay, config.threads)

    pool, targets, labels = {}, {}, {}
    for lvl in LEVELS:
        y_all = dataset.labels(lvl)
        pool[lvl], targets[lvl], labels[lvl] = {}, {}, {}
        for part in PARTS:
            idx = np.asarray(dataset.split[lvl][part], dtype=np.int64)
            targets[lvl][part] = idx
            labels[lvl][part] = y_all[idx] if len(idx) else np.zeros(0, dtype=np.int64)
            if lvl == "node":
                P = _subgraph_rows(sampler.nodes(idx.tolist()), g.node_count)
            elif lvl == "edge":
                P = _subgraph_rows(sampler.edges(dataset.union.edges[idx].tolist()), g.node_count)
            else:
                P = _graph_rows(dataset, idx)
            pool[lvl][part] = P
    return Prepared(H, pool, targets, labels, sampler)


def predict(model: GraphStitchModel, prepared: Prepared, level: str, part: str,
            Z: Tensor | None = None) -> np.ndarray:
    """Scores for every `part` target of `level`; `Z` reuses encoder output."""
    P = prepared.pool[level][part]
    if P.shape[0] == 0:
        return np.zeros(0)
    if Z is None:
        Z = model.encode(prepared.H)
    return forward(model, spmm(P, Z), level).data.ravel()


@dataclass
class History:
    losses: list[dict[str, float]] = field(default_factory=list)
    val_auroc: list[float | None] = field(default_factory=list)
    best_epoch: int = -1
    train_levels: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    sampler_calls: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _trainable_levels(prepared: Prepared, config: TrainConfig) -> tuple[list[str], set[str]]:
    train_levels = [lvl for lvl in LEVELS
                    if lvl in config.levels and lvl not in config.mask_levels
                    and (prepared.labels[lvl]["train"] != UNLABELED).any()]
    missing = set(LEVELS) - set(train_levels)
    return train_levels, missing


def build_model(prepared: Prepared, config: TrainConfig, missing) -> GraphStitchModel:
    return GraphStitchModel(prepared.H.shape[1], config.hidden_dim, config.num_layers,
                            config.seed, train_encoder=config.train_encoder,
                            train_stitch=config.train_stitch, missing=frozenset(missing))


def train(dataset: Dataset, config: TrainConfig, prepared: Prepared | None = None):
    """Train a stitch model; returns ``(model, history)``.

    Levels without training labels (or listed in ``config.mask_levels``) are
    masked. The returned parameters are those with the best mean validation
    AUROC over the trained levels.
    """
    prepared = prepared or prepare(dataset, config)
    train_levels, missing = _trainable_levels(prepared, config)
    if not train_levels:
        raise ConfigError("no level has training labels")
    model = build_model(prepared, config, missing)
    params = model.trainable_parameters()
    opt = MomentumSGD(params, config.lr, config.momentum, config.clip)
    rng = np.random.default_rng(config.seed)
    gammas = {lvl: anomaly_ratio(prepared.labels[lvl]["train"], config.gamma_mode)
              for lvl in train_levels}
    hist = History(train_levels=train_levels, missing=sorted(missing))
    calls_before = prepared.sampler.calls
    best_score, best_params = -np.inf, None

    for epoch in range(config.epochs + 1):
        Z = model.encode(prepared.H)
        # score the current parameters before stepping
        scores = [auroc(predict(model, prepared, lvl, "val", Z), prepared.labels[lvl]["val"])
                  for lvl in train_levels]
        scores = [s for s in scores if s is not None]
        score = float(np.mean(scores)) if scores else None
        if epoch > 0:
            hist.val_auroc.append(score)
            if score is not None and score > best_score:
                best_score, best_params, hist.best_epoch = score, model.snapshot(), epoch - 1
        if epoch == config.epochs:
            break
        losses = {}
        for lvl in train_levels:
            probs = forward(model, spmm(prepared.pool[lvl]["train"], Z), lvl)
            loss = weighted_ce_loss(probs, prepared.labels[lvl]["train"], gammas[lvl])
            losses[lvl] = loss * config.beta(lvl)
        multi_level_step(losses, params, opt, rng)
        hist.losses.append({lvl: float(l.data.item()) for lvl, l in losses.items()})

    if best_params is not None:
        model.load_arrays(best_params)
    else:
        hist.best_epoch = config.epochs - 1
    hist.sampler_calls = prepared.sampler.calls - calls_before
    log.info("trained levels %s, best epoch %d", train_levels, hist.best_epoch)
    return model, hist


@dataclass
class MetricsReport:
    levels: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    split: str = "test"
    wall_time: float = 0.0

    def undefined_levels(self) -> list[str]:
        return [lvl for lvl, m in self.levels.items()
                if m["auroc"] is None or m["auprc"] is None]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def evaluate(model: GraphStitchModel, dataset: Dataset, config: TrainConfig | None = None,
             split: str = "test", prepared: Prepared | None = None,
             levels=None) -> MetricsReport:
    """Per-level AUROC / AUPRC / macro-F1 (threshold 0.5) on `split`.

    Every level with labels in `split` is scored, including masked levels
    (zero-shot inference).
    """
    config = config or TrainConfig()
    t0 = time.perf_counter()
    prepared = prepared or prepare(dataset, config)
    report = MetricsReport(config=config.to_dict(), split=split)
    for lvl in levels or LEVELS:
        y = prepared.labels[lvl][split]
        if len(y) == 0:
            continue
        p = predict(model, prepared, lvl, split)
        report.levels[lvl] = {
            "auroc": auroc(p, y),
            "auprc": auprc(p, y),
            "macro_f1": macro_f1((p >= 0.5).astype(int), y),
            "count": int(len(y)),
            "positives": int((y == 1).sum()),
        }
    report.wall_time = time.perf_counter() - t0
    return report


def model_to_json(model: GraphStitchModel, config: TrainConfig) -> str:
    return params_to_json(model.named_parameters(), {"model": model.config(),
                                                     "train": config.to_dict()})


def model_from_json(text: str) -> tuple[GraphStitchModel, TrainConfig]:
    cfg, arrays = params_from_json(text)
    m = cfg["model"]
    model = GraphStitchModel(m["in_dim"], m["hidden_dim"], m["num_layers"], m["seed"],
                             m["slope"], m["train_encoder"], m["train_stitch"],
                             frozenset(m["missing"]))
    model.load_arrays(arrays)
    return model, TrainConfig.from_dict(cfg["train"])
