"""Losses, node-drop augmentation, and the full/mini-batch training loops.

The objective is standard cross-entropy over the train mask plus, when
augmentation is on, a consistency term that pulls the S augmented prediction
sets toward their sharpened mean. The sharpened target is a constant: no
gradient flows through it. Both losses are node-averaged so the balance
weight is independent of graph size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .graph import (Graph, GraphError, SparseAdj, build_normalized,
                    smoothness_mad)
from .model import (ForwardResult, ModelConfig, ModelParams, _head,
                    _sgu_parts, dynamic_block, evolving_step, forward,
                    init_params, initial_transform, logit)

__all__ = ["TrainConfig", "TrainHistory", "AlphaTrace", "TrainingError",
           "DivergenceError", "drop_node_augment", "one_hot",
           "supervised_loss", "supervised_loss_from_logits", "sharpen",
           "consistency_loss", "total_loss",
           "accuracy", "train_full_batch", "SampledBlock", "sample_block",
           "forward_block", "train_mini_batch", "evaluate"]


class TrainingError(Exception):
    pass


class DivergenceError(TrainingError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    lr: float = 0.001
    patience: int = 500
    max_epochs: int = 2000
    l2_conv: float = 0.01
    l2_fc: float = 0.0005
    l2_evolving: float = 0.005
    s_augment: int = 1
    drop_rate: float = 0.0
    temperature: float = 1.0
    lam: float = 1.0
    seed: int = 0
    trace_stride: int = 10

    def validate(self) -> None:
        if self.s_augment < 1:
            raise TrainingError("s_augment must be >= 1")
        if not 0.0 <= self.drop_rate < 1.0:
            raise TrainingError("drop_rate must be in [0,1)")
        if self.temperature <= 0.0:
            raise TrainingError("temperature must be positive")
        if self.lam < 0.0:
            raise TrainingError("lam must be >= 0")
        if self.max_epochs < 1:
            raise TrainingError("max_epochs must be >= 1")
        if self.patience < 0:
            raise TrainingError("patience must be >= 0")

    def weight_decays(self, params: ModelParams) -> list[float]:
        table = {"conv": self.l2_conv, "fc": self.l2_fc,
                 "evolving": self.l2_evolving}
        return [table[params.group_of(name)] for name in params.names()]


@dataclass
class AlphaTrace:
    """Residual weights over training: per-layer means at a fixed epoch
    stride, plus the full per-node snapshot at the best-validation epoch."""

    layers: int
    nodes: int
    epochs: list[int] = field(default_factory=list)
    layer_means: list[np.ndarray] = field(default_factory=list)
    best_alpha: np.ndarray | None = None

    def record(self, epoch: int, alphas) -> None:
        snap = np.stack([a.data[:, 0] for a in alphas])
        self.epochs.append(int(epoch))
        self.layer_means.append(snap.mean(axis=1))

    def snapshot(self, alphas) -> np.ndarray:
        return np.stack([a.data[:, 0] for a in alphas])

    def means_matrix(self) -> np.ndarray:
        return np.stack(self.layer_means) if self.layer_means else \
            np.empty((0, self.layers))


@dataclass(eq=False)
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    valid_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_acc: float = float("-inf")
    alpha: AlphaTrace | None = None
    wall_time: float = 0.0

    def record(self, epoch, tr_loss, tr_acc, va_loss, va_acc) -> None:
        self.epochs.append(int(epoch))
        self.train_loss.append(float(tr_loss))
        self.train_acc.append(float(tr_acc))
        self.valid_loss.append(float(va_loss))
        self.valid_acc.append(float(va_acc))

    def deterministic_parts(self):
        """Everything except wall time; equal across same-seed reruns."""
        return (self.epochs, self.train_loss, self.train_acc, self.valid_loss,
                self.valid_acc, self.best_epoch, self.best_valid_acc)


# ---------------------------------------------------------------------------
# losses and augmentation

def one_hot(y: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((y.size, classes))
    labeled = y >= 0
    out[np.flatnonzero(labeled), y[labeled]] = 1.0
    return out


def drop_node_augment(x, rate: float, rng: Rng, training: bool = True) -> Tensor:
    """Zero whole node rows with probability ``rate``; survivors are scaled
    by 1/(1-rate) so the expectation is preserved. Identity in eval mode."""
    if not 0.0 <= rate < 1.0:
        raise TrainingError(f"drop rate must be in [0,1), got {rate}")
    x = ad.as_tensor(x)
    if not training or rate == 0.0:
        return x
    keep = (rng.random((x.rows, 1)) >= rate) / (1.0 - rate)
    return Tensor(x.data * keep)


def supervised_loss(y: np.ndarray, yhats, mask: np.ndarray,
                    classes: int | None = None) -> Tensor:
    """Cross-entropy -sum(Y log Yhat), averaged over masked nodes, then over
    the S prediction sets."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise TrainingError("supervised loss needs a non-empty mask")
    yhats = list(yhats)
    classes = classes if classes is not None else yhats[0].cols
    target = Tensor(one_hot(y[mask], classes))
    total = None
    for yhat in yhats:
        picked = ad.gather_rows(yhat, mask)
        ce = ad.scale(ad.sum_all(ad.hadamard(target, ad.log(picked))),
                      -1.0 / mask.size)
        total = ce if total is None else ad.add(total, ce)
    return ad.scale(total, 1.0 / len(yhats))


def supervised_loss_from_logits(y: np.ndarray, logits_list, mask: np.ndarray,
                                classes: int | None = None) -> Tensor:
    """Same objective as ``supervised_loss`` computed via log-softmax on the
    raw scores. Collapsing models can drive a wrong-class probability to an
    exact zero in f64; this path stays finite there, so the training loops
    use it."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise TrainingError("supervised loss needs a non-empty mask")
    logits_list = list(logits_list)
    classes = classes if classes is not None else logits_list[0].cols
    target = Tensor(one_hot(y[mask], classes))
    total = None
    for logits in logits_list:
        lp = ad.rows_log_softmax(ad.gather_rows(logits, mask))
        ce = ad.scale(ad.sum_all(ad.hadamard(target, lp)), -1.0 / mask.size)
        total = ce if total is None else ad.add(total, ce)
    return ad.scale(total, 1.0 / len(logits_list))


def sharpen(ybar, temperature: float):
    """Temperature-sharpened row distributions; a constant wrt gradients."""
    if temperature <= 0.0:
        raise TrainingError(f"temperature must be positive, got {temperature}")
    arr = ybar.data if isinstance(ybar, Tensor) else np.asarray(ybar, float)
    if (arr < 0.0).any():
        raise TrainingError("sharpen needs nonnegative rows")
    sums = arr.sum(axis=1, keepdims=True)
    if (sums <= 0.0).any():
        raise TrainingError("sharpen needs positive row sums")
    powered = np.power(arr, 1.0 / temperature)
    out = powered / powered.sum(axis=1, keepdims=True)
    return Tensor(out) if isinstance(ybar, Tensor) else out


def consistency_loss(yhats, ybar_sharp) -> Tensor:
    """Mean squared distance of each prediction set to the sharpened center,
    node-averaged; the center is treated as a constant."""
    yhats = list(yhats)
    target_arr = ybar_sharp.data if isinstance(ybar_sharp, Tensor) \
        else np.asarray(ybar_sharp, float)
    if target_arr.shape != yhats[0].shape:
        raise ad.ShapeError("consistency target shape mismatch")
    target = Tensor(target_arr)
    n = target.rows
    total = None
    for yhat in yhats:
        diff = ad.sub(target, yhat)
        term = ad.scale(ad.sum_all(ad.hadamard(diff, diff)), 1.0 / n)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(yhats))


def total_loss(sup: Tensor, con: Tensor | None, lam: float) -> Tensor:
    if con is None or lam == 0.0:
        return sup
    return ad.add(sup, ad.scale(con, lam))


def accuracy(proba: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        return float("nan")
    pred = proba[mask].argmax(axis=1)
    return float((pred == y[mask]).mean())


def _valid_ce(proba: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    picked = np.clip(proba[mask, y[mask]], 1e-300, None)
    return float(-np.log(picked).mean())


# ---------------------------------------------------------------------------
# full-batch training

def _epoch_losses(adj, ds, cfg, tcfg, params, rng, epoch):
    """One optimization step's forward pass; returns (loss, results)."""
    results = []
    for s in range(tcfg.s_augment):
        xs = drop_node_augment(ds.x, tcfg.drop_rate,
                               rng.split(f"aug/{epoch}/{s}"))
        results.append(forward(adj, xs, cfg, params, mode="train",
                               rng=rng.split(f"fwd/{epoch}/{s}")))
    yhats = [r.yhat for r in results]
    sup = supervised_loss_from_logits(ds.y, [r.logits for r in results],
                                      ds.masks["train"], cfg.classes)
    con = None
    if tcfg.lam > 0.0 and tcfg.s_augment >= 1:
        ybar = np.mean([p.data for p in yhats], axis=0)
        con = consistency_loss(yhats, sharpen(ybar, tcfg.temperature))
    return total_loss(sup, con, tcfg.lam), results


def _require_labeled_masks(ds) -> None:
    for name in ("train", "valid"):
        if (ds.y[ds.masks[name]] < 0).any():
            raise TrainingError(f"{name} mask references an unlabeled node")


def train_full_batch(ds, cfg: ModelConfig, tcfg: TrainConfig):
    """Adam with per-group decay, early stopping on validation accuracy.

    Returns the parameters from the best-validation epoch and the history.
    When augmentation and dropout are off, the training forward doubles as
    the evaluation forward (metrics then describe the pre-step parameters);
    otherwise a separate eval pass runs after the step.
    """
    cfg.validate()
    tcfg.validate()
    _require_labeled_masks(ds)
    start = time.perf_counter()
    rng = Rng(tcfg.seed)
    adj = build_normalized(ds.graph)
    params = init_params(cfg, ds.num_features, ds.n, rng.split("init"))
    state = ad.AdamState(params.tensors(), lr=tcfg.lr,
                         weight_decay=tcfg.weight_decays(params))
    history = TrainHistory(alpha=AlphaTrace(cfg.layers, ds.n))
    best_params = params.copy()
    reuse_train_forward = (tcfg.s_augment == 1 and tcfg.drop_rate == 0.0
                           and cfg.input_dropout == 0.0)

    for epoch in range(1, tcfg.max_epochs + 1):
        try:
            with ad.Tape() as tape:
                loss, results = _epoch_losses(adj, ds, cfg, tcfg, params, rng,
                                              epoch)
                if reuse_train_forward:
                    res = results[0]
                    proba = res.yhat.data
                    va_acc = accuracy(proba, ds.y, ds.masks["valid"])
                    improved = va_acc > history.best_valid_acc
                    if improved:
                        best_params = params.copy()  # pre-step parameters
                grads = tape.backward(loss, params.tensors())
            ad.adam_step(params.tensors(), grads, state)
            if not reuse_train_forward:
                res = forward(adj, ds.x, cfg, params, mode="eval")
                proba = res.yhat.data
                va_acc = accuracy(proba, ds.y, ds.masks["valid"])
                improved = va_acc > history.best_valid_acc
                if improved:
                    best_params = params.copy()
        except ad.NonFiniteError as err:
            raise DivergenceError(epoch) from err

        tr_acc = accuracy(proba, ds.y, ds.masks["train"])
        va_loss = _valid_ce(proba, ds.y, ds.masks["valid"])
        history.record(epoch, loss.item(), tr_acc, va_loss, va_acc)

        if res.alphas and (epoch == 1 or epoch % tcfg.trace_stride == 0):
            history.alpha.record(epoch, res.alphas)
        if improved:
            history.best_valid_acc = va_acc
            history.best_epoch = epoch
            if res.alphas:
                history.alpha.best_alpha = history.alpha.snapshot(res.alphas)
        if epoch - history.best_epoch >= tcfg.patience:
            break

    params.load(best_params)
    history.wall_time = time.perf_counter() - start
    return params, history


def evaluate(ds, cfg: ModelConfig, params: ModelParams,
             adj: SparseAdj | None = None) -> dict:
    """Deterministic eval-mode metrics: split accuracies + per-layer MAD."""
    adj = adj if adj is not None else build_normalized(ds.graph)
    cap: dict = {}
    res = forward(adj, ds.x, cfg, params, mode="eval", capture=cap)
    proba = res.yhat.data
    out = {"accuracy": {name: accuracy(proba, ds.y, ds.masks[name])
                        for name in ("train", "valid", "test")}}
    mads = []
    for h in cap["hidden"][1:]:
        try:
            mads.append(smoothness_mad(h))
        except GraphError:
            mads.append(float("nan"))
    out["smoothness_mad"] = mads
    return out


# ---------------------------------------------------------------------------
# neighbor-sampled mini-batch training

@dataclass
class SampledBlock:
    """Per-layer bipartite operators from nested source sets down to seeds.

    ids[0] is the widest source set; ids[layer+1] is always a subset of
    ids[layer]; ids[-1] are the seed nodes. mats[step] maps rows over
    ids[step] to rows over ids[step+1], with values rescaled by
    full-degree/sampled-degree per target row.
    """

    ids: list
    mats: list           # (csr, csr_transposed) per step
    pos_prev: list       # ids[step+1] positions within ids[step]
    pos_src: list        # ids[step+1] positions within ids[0]
    seeds: np.ndarray
    fanouts: list


def sample_block(graph: Graph, seed_nodes, fanouts, rng: Rng,
                 adj: SparseAdj | None = None) -> SampledBlock:
    """Layer-wise uniform neighbor sampling without replacement; the
    self-loop is always kept."""
    seeds = np.unique(np.asarray(seed_nodes, dtype=np.int64))
    if seeds.size == 0:
        raise TrainingError("sample_block needs a non-empty seed set")
    fanouts = [int(f) for f in fanouts]
    if any(f < 1 for f in fanouts):
        raise TrainingError("fanouts must be >= 1")
    adj = adj if adj is not None else build_normalized(graph)
    rp, ci, vals = adj.row_ptr, adj.col_idx, adj.vals

    layers = len(fanouts)
    ids: list = [None] * (layers + 1)
    rows_cols_vals: list = [None] * layers
    ids[layers] = seeds
    for step in range(layers - 1, -1, -1):
        targets = ids[step + 1]
        fan = fanouts[step]
        srng = rng.split(f"layer/{step}")
        r_list, c_list, v_list = [], [], []
        for row_pos, node in enumerate(targets):
            lo, hi = rp[node], rp[node + 1]
            cols = ci[lo:hi]
            vv = vals[lo:hi]
            self_pos = int(np.searchsorted(cols, node))
            others = np.delete(np.arange(cols.size), self_pos)
            if others.size > fan:
                chosen = others[np.sort(srng.choice(others.size, fan))]
            else:
                chosen = others
            keep = np.concatenate([[self_pos], chosen])
            scale = cols.size / keep.size
            r_list.append(np.full(keep.size, row_pos, dtype=np.int64))
            c_list.append(cols[keep])
            v_list.append(vv[keep] * scale)
        rows = np.concatenate(r_list)
        cols = np.concatenate(c_list)
        v = np.concatenate(v_list)
        ids[step] = np.union1d(targets, cols)
        rows_cols_vals[step] = (rows, cols, v)

    mats, pos_prev, pos_src = [], [], []
    for step in range(layers):
        rows, cols, v = rows_cols_vals[step]
        col_pos = np.searchsorted(ids[step], cols)
        shape = (ids[step + 1].size, ids[step].size)
        mat = sp.csr_matrix((v, (rows, col_pos)), shape=shape)
        mat.sort_indices()
        mat_t = mat.T.tocsr()
        mats.append((mat, mat_t))
        pos_prev.append(np.searchsorted(ids[step], ids[step + 1]))
        pos_src.append(np.searchsorted(ids[0], ids[step + 1]))
    return SampledBlock(ids=ids, mats=mats, pos_prev=pos_prev,
                        pos_src=pos_src, seeds=seeds, fanouts=fanouts)


def _block_matmul(mat: sp.csr_matrix, mat_t: sp.csr_matrix, h: Tensor) -> Tensor:
    if h.rows != mat.shape[1]:
        raise ad.ShapeError(f"block expects {mat.shape[1]} rows, got {h.rows}")
    out = Tensor(np.asarray(mat @ h.data))

    def make_back(nids):
        (nh,) = nids

        def back(g, acc):
            acc(nh, np.asarray(mat_t @ g))
        return back

    return ad._record(out, (h,), make_back)


def forward_block(block: SampledBlock, x, cfg: ModelConfig,
                  params: ModelParams, mode: str = "train",
                  rng: Rng | None = None):
    """DRGCN forward restricted to a sampled block; rows end at the seeds."""
    if cfg.variant != "drgcn":
        raise TrainingError("mini-batch training supports the drgcn variant")
    x = ad.as_tensor(x)
    if x.rows != block.ids[0].size:
        raise ad.ShapeError("features must cover the block's source rows")
    if cfg.input_dropout > 0.0 and mode == "train":
        if rng is None:
            raise TrainingError("training with dropout needs an rng")
        x = ad.dropout(x, cfg.input_dropout, rng.split("input_dropout"))

    h0 = initial_transform(x, params)
    h0n = ad.l2_normalize_rows(h0)
    const_raw_value = logit(cfg.constant_alpha) if cfg.constant_alpha is not None else None
    state = None
    h = h0
    alphas = []
    for step in range(cfg.layers):
        ph = _block_matmul(*block.mats[step], h)
        h0_t = ad.gather_rows(h0, block.pos_src[step])
        if const_raw_value is not None:
            alpha_raw = Tensor(np.full((block.ids[step + 1].size, 1),
                                       const_raw_value))
        else:
            h0n_t = ad.gather_rows(h0n, block.pos_src[step])
            hln = ad.l2_normalize_rows(ad.gather_rows(h, block.pos_prev[step]))
            prefix = "dynamic" if cfg.dynamic_shared else f"dynamic.{step}"
            z = dynamic_block(h0n_t, hln, cfg.combine, params, prefix)
            if cfg.bypass_evolving:
                alpha_raw = z
            else:
                if state is None:
                    state = Tensor(params.buffers["evolving.h0"][block.ids[step + 1]])
                else:
                    state = ad.gather_rows(state, block.pos_prev[step])
                alpha_raw, state = evolving_step(z, state, params, cfg.cell)
        h, alpha, _ = _sgu_parts(h0_t, ph, alpha_raw)
        alphas.append(alpha)

    logits = _head(h, params)
    return ForwardResult(logits, ad.rows_softmax(logits), alphas)


def train_mini_batch(ds, cfg: ModelConfig, tcfg: TrainConfig, fanouts,
                     batch_size: int):
    """Seed batches from the train mask drive sampled-block steps; evaluation
    and early stopping run full-batch every epoch."""
    cfg.validate()
    tcfg.validate()
    if len(fanouts) != cfg.layers:
        raise TrainingError("need one fanout per layer")
    if batch_size < 1:
        raise TrainingError("batch_size must be >= 1")
    _require_labeled_masks(ds)
    start = time.perf_counter()
    rng = Rng(tcfg.seed)
    adj = build_normalized(ds.graph)
    params = init_params(cfg, ds.num_features, ds.n, rng.split("init"))
    state = ad.AdamState(params.tensors(), lr=tcfg.lr,
                         weight_decay=tcfg.weight_decays(params))
    history = TrainHistory(alpha=AlphaTrace(cfg.layers, ds.n))
    best_params = params.copy()
    train_idx = ds.masks["train"]

    for epoch in range(1, tcfg.max_epochs + 1):
        order = rng.split(f"order/{epoch}").permutation(train_idx.size)
        shuffled = train_idx[order]
        try:
            for bi in range(0, shuffled.size, batch_size):
                chunk = shuffled[bi:bi + batch_size]
                block = sample_block(ds.graph, chunk, fanouts,
                                     rng.split(f"block/{epoch}/{bi}"), adj=adj)
                with ad.Tape() as tape:
                    results = []
                    for s in range(tcfg.s_augment):
                        xs = drop_node_augment(
                            ds.x[block.ids[0]], tcfg.drop_rate,
                            rng.split(f"aug/{epoch}/{bi}/{s}"))
                        results.append(forward_block(
                            block, xs, cfg, params, mode="train",
                            rng=rng.split(f"fwd/{epoch}/{bi}/{s}")))
                    yhats = [r.yhat for r in results]
                    seed_rows = np.arange(block.seeds.size)
                    sup = supervised_loss_from_logits(
                        ds.y[block.seeds], [r.logits for r in results],
                        seed_rows, cfg.classes)
                    con = None
                    if tcfg.lam > 0.0:
                        ybar = np.mean([p.data for p in yhats], axis=0)
                        con = consistency_loss(yhats,
                                               sharpen(ybar, tcfg.temperature))
                    loss = total_loss(sup, con, tcfg.lam)
                    grads = tape.backward(loss, params.tensors())
                ad.adam_step(params.tensors(), grads, state)
            res = forward(adj, ds.x, cfg, params, mode="eval")
        except ad.NonFiniteError as err:
            raise DivergenceError(epoch) from err

        proba = res.yhat.data
        tr_acc = accuracy(proba, ds.y, ds.masks["train"])
        va_acc = accuracy(proba, ds.y, ds.masks["valid"])
        va_loss = _valid_ce(proba, ds.y, ds.masks["valid"])
        history.record(epoch, float(loss.item()), tr_acc, va_loss, va_acc)
        if res.alphas and (epoch == 1 or epoch % tcfg.trace_stride == 0):
            history.alpha.record(epoch, res.alphas)
        if va_acc > history.best_valid_acc:
            history.best_valid_acc = va_acc
            history.best_epoch = epoch
            best_params = params.copy()
            if res.alphas:
                history.alpha.best_alpha = history.alpha.snapshot(res.alphas)
        if epoch - history.best_epoch >= tcfg.patience:
            break

    params.load(best_params)
    history.wall_time = time.perf_counter() - start
    return params, history
