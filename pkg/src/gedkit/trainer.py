"""Supervised training of the matching model and frozen-parameter evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import matching as M
from . import tensor as T
from .dataio import EXACT, Dataset, PairRecord
from .model import GedModel, ModelConfig

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 5e-4
    epochs: int = 200
    seed: int = 0
    val_interval: int = 1
    # draw this many training pairs per epoch instead of a full pass
    pairs_per_epoch: int | None = None
    # validate on a fixed seeded subsample of at most this many pairs
    max_val_pairs: int | None = None

    def __post_init__(self):
        if (self.pairs_per_epoch is not None and self.pairs_per_epoch < 1) or (
            self.max_val_pairs is not None and self.max_val_pairs < 1
        ):
            raise ValueError("pairs_per_epoch and max_val_pairs must be positive")
        if self.batch_size < 1 or self.lr <= 0 or self.weight_decay < 0 or self.epochs < 0 or self.val_interval < 1:
            raise ValueError(f"invalid training configuration: {self}")


@dataclass
class TrainResult:
    model: GedModel  # parameters of the best validation epoch
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    elapsed: float = 0.0

    def log_lines(self) -> str:
        return "".join(json.dumps(entry) + "\n" for entry in self.log)


def _check_labels(dataset: Dataset, records: list[PairRecord], need_exact: bool) -> None:
    for r in records:
        lab = r.label
        if lab is None or not lab.matching:
            raise ValueError(f"pair ({r.g1}, {r.g2}) has no witness matching")
        if need_exact and lab.producer != EXACT:
            raise ValueError(f"training pair ({r.g1}, {r.g2}) is labelled {lab.producer}, training needs {EXACT}")
        if len(lab.matching) != dataset.pair(r).n1:
            raise ValueError(f"witness of pair ({r.g1}, {r.g2}) has the wrong length")


def _batch_loss(model: GedModel, dataset: Dataset, records, params):
    pairs = [dataset.pair(r) for r in records]
    out = model.forward(pairs, params=params)
    cells = out.batch.witness_cells([r.label.matching for r in records])
    target = [r.label.normalized_similarity for r in records]
    return M.joint_loss(out.a0, out.al, cells, out.d_pred, target, len(records))


def evaluation_loss(model: GedModel, dataset: Dataset, records, batch_size: int = 128) -> tuple[float, float]:
    """Mean ``(ln, lg)`` over ``records`` with frozen parameters."""
    frozen = {n: T.Tensor(p.data) for n, p in model.params.items()}
    ln = lg = 0.0
    for s in range(0, len(records), batch_size):
        chunk = records[s : s + batch_size]
        _, bl, bg = _batch_loss(model, dataset, chunk, frozen)
        ln += bl.item() * len(chunk)
        lg += bg.item() * len(chunk)
    n = max(len(records), 1)
    return ln / n, lg / n


def train(dataset: Dataset, model: GedModel | ModelConfig, cfg: TrainConfig | None = None, log_path=None) -> TrainResult:
    """Train on the ``train`` split, selecting the epoch with the lowest validation loss.

    ``model`` is either an initialized model (trained on a copy) or a model
    configuration to initialize from. The dataset is never modified.
    """
    cfg = cfg or TrainConfig()
    start = time.perf_counter()
    if isinstance(model, ModelConfig):
        model = GedModel.initialize(model)
    model = GedModel(model.cfg, model.copy_params())
    train_set = dataset.split("train")
    val_set = dataset.split("val")
    _check_labels(dataset, train_set, need_exact=True)
    _check_labels(dataset, val_set, need_exact=False)
    if not train_set:
        raise ValueError("the dataset has no training pairs")

    def snapshot():
        return {n: p.data.copy() for n, p in model.params.items()}

    best = snapshot()
    best_epoch = 0
    best_val = np.inf
    rng = np.random.default_rng(cfg.seed)
    if cfg.max_val_pairs is not None and len(val_set) > cfg.max_val_pairs:
        keep = np.sort(rng.choice(len(val_set), size=cfg.max_val_pairs, replace=False))
        val_set = [val_set[i] for i in keep]
    per_epoch = len(train_set) if cfg.pairs_per_epoch is None else min(cfg.pairs_per_epoch, len(train_set))
    state = T.AdamState()
    history = []
    sink = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(train_set))[:per_epoch]
            ln_sum = lg_sum = 0.0
            for s in range(0, len(order), cfg.batch_size):
                records = [train_set[i] for i in order[s : s + cfg.batch_size]]
                for p in model.params.values():
                    p.grad = None
                total, ln, lg = _batch_loss(model, dataset, records, model.params)
                total.backward()
                T.adam_step(model.params, state, lr=cfg.lr, weight_decay=cfg.weight_decay)
                ln_sum += ln.item() * len(records)
                lg_sum += lg.item() * len(records)
            entry = {"epoch": epoch, "ln": ln_sum / len(order), "lg": lg_sum / len(order), "val": None}
            if epoch % cfg.val_interval == 0 or epoch == cfg.epochs:
                vl, vg = evaluation_loss(model, dataset, val_set, cfg.batch_size) if val_set else (entry["ln"], entry["lg"])
                entry["val"] = vl + vg
                if entry["val"] < best_val:
                    best_val, best_epoch, best = entry["val"], epoch, snapshot()
            history.append(entry)
            log.info("epoch %d ln %.4f lg %.4f val %s", epoch, entry["ln"], entry["lg"], entry["val"])
            if sink:
                sink.write(json.dumps(entry) + "\n")
                sink.flush()
    finally:
        if sink:
            sink.close()
    for n, p in model.params.items():
        p.data = best[n]
        p.grad = None
    return TrainResult(model, history, best_epoch, time.perf_counter() - start)


@dataclass
class Prediction:
    g1: str
    g2: str
    predicted_similarity: float
    candidates: M.CandidateSet

    def to_json(self) -> dict:
        out = self.candidates.to_json(self.g1, self.g2)
        out["sim_pred"] = float(self.predicted_similarity)
        return out

    @classmethod
    def from_json(cls, obj) -> "Prediction":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(obj["g1"], obj["g2"], float(obj["sim_pred"]), M.CandidateSet.from_json(obj))


def evaluate_model(model: GedModel, dataset: Dataset, records: list[PairRecord], k: int | None = None, batch_size: int = 128) -> list[Prediction]:
    """Predicted similarity and top-``k`` candidates per pair.

    ``k`` larger than a pair's target graph is clamped to its size with a warning.
    Source/target orientation follows the dataset convention (smaller graph first).
    """
    k = model.cfg.k if k is None else k
    out = []
    for s in range(0, len(records), batch_size):
        chunk = records[s : s + batch_size]
        pairs = [dataset.pair(r) for r in chunk]
        for r, pair in zip(chunk, pairs):
            if k > pair.n2:
                log.warning("k=%d exceeds the %d target nodes of pair (%s, %s); clamped", k, pair.n2, r.g1, r.g2)
        preds = model.predict(pairs, k)
        out.extend(Prediction(r.g1, r.g2, sim, cand) for r, (sim, cand) in zip(chunk, preds))
    return out


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
