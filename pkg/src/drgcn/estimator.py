"""Scikit-learn style transductive node classifier.

Follows the semi-supervised convention of ``sklearn.semi_supervised``: the
label vector passed to ``fit`` uses -1 for unlabeled nodes, and predictions
for every node are available after fitting via ``transduction_`` or
``predict``. The graph is transductive state, so ``predict`` takes node
indices rather than a feature matrix.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .autodiff import Rng
from .data import Dataset
from .graph import Graph, build_normalized
from .model import ModelConfig, forward
from .training import TrainConfig, train_full_batch, train_mini_batch
from .validation import check_edge_list, check_features, check_labels, check_mask

__all__ = ["DRGCNNodeClassifier"]


class DRGCNNodeClassifier(BaseEstimator, ClassifierMixin):
    """Deep GCN with per-node, layer-evolving initial-residual weights.

    Parameters mirror the model and training configuration; ``variant``
    selects the residual rule (``drgcn`` or one of the baselines) and
    ``n_augment``/``drop_rate``/``temperature``/``consistency_weight``
    control the augmented objective (leave the defaults for the plain model).
    """

    def __init__(self, layers=2, hidden=64, combine="hadamard",
                 cell="vanilla_recurrent", variant="drgcn", fixed_alpha=0.1,
                 input_dropout=0.0, lr=0.001, patience=500, max_epochs=2000,
                 n_augment=1, drop_rate=0.0, temperature=1.0,
                 consistency_weight=0.0, l2_conv=0.01, l2_fc=0.0005,
                 l2_evolving=0.005, batch_size=None, fanouts=None,
                 trace_stride=10, validation_fraction=0.2,
                 feature_norm="none", random_state=0):
        self.layers = layers
        self.hidden = hidden
        self.combine = combine
        self.cell = cell
        self.variant = variant
        self.fixed_alpha = fixed_alpha
        self.input_dropout = input_dropout
        self.lr = lr
        self.patience = patience
        self.max_epochs = max_epochs
        self.n_augment = n_augment
        self.drop_rate = drop_rate
        self.temperature = temperature
        self.consistency_weight = consistency_weight
        self.l2_conv = l2_conv
        self.l2_fc = l2_fc
        self.l2_evolving = l2_evolving
        self.batch_size = batch_size
        self.fanouts = fanouts
        self.trace_stride = trace_stride
        self.validation_fraction = validation_fraction
        self.feature_norm = feature_norm
        self.random_state = random_state

    # -- config plumbing ---------------------------------------------------

    def _model_config(self, classes: int) -> ModelConfig:
        return ModelConfig(classes=classes, layers=self.layers,
                           hidden=self.hidden, combine=self.combine,
                           cell=self.cell, variant=self.variant,
                           fixed_alpha=self.fixed_alpha,
                           input_dropout=self.input_dropout)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, patience=self.patience,
                           max_epochs=self.max_epochs,
                           l2_conv=self.l2_conv, l2_fc=self.l2_fc,
                           l2_evolving=self.l2_evolving,
                           s_augment=self.n_augment,
                           drop_rate=self.drop_rate,
                           temperature=self.temperature,
                           lam=self.consistency_weight,
                           seed=self.random_state,
                           trace_stride=self.trace_stride)

    def _carve_validation(self, labeled: np.ndarray, y: np.ndarray) -> np.ndarray:
        rng = Rng(self.random_state).split("validation_carve")
        picked = []
        for cls in np.unique(y[labeled]):
            members = labeled[y[labeled] == cls]
            k = max(1, int(round(members.size * self.validation_fraction)))
            k = min(k, members.size - 1) if members.size > 1 else 0
            if k:
                sel = rng.split(f"class/{cls}").choice(members.size, k)
                picked.append(members[np.sort(sel)])
        if not picked:
            raise ValueError("cannot carve a validation set; provide valid_mask")
        return np.sort(np.concatenate(picked))

    # -- estimator API -----------------------------------------------------

    def fit(self, X, y, edges=None, valid_mask=None, test_mask=None):
        """Fit on one graph: features X, labels y (-1 = unlabeled), edges.

        Labeled nodes outside ``valid_mask``/``test_mask`` become the
        training set; if no ``valid_mask`` is given a stratified fraction of
        the labeled nodes is held out for early stopping.
        """
        X = check_features(X)
        if self.feature_norm == "l1":
            sums = np.abs(X).sum(axis=1, keepdims=True)
            X = np.divide(X, sums, out=X.copy(), where=sums > 0.0)
        elif self.feature_norm != "none":
            raise ValueError("feature_norm must be 'none' or 'l1'")
        n = X.shape[0]
        y = check_labels(y, n)
        edges = check_edge_list(edges, n)
        classes = np.unique(y[y >= 0])
        if not np.array_equal(classes, np.arange(classes.size)):
            raise ValueError("labels must be contiguous ids 0..c-1")
        if classes.size < 2:
            raise ValueError("need at least 2 classes")

        labeled = np.flatnonzero(y >= 0)
        test = check_mask(test_mask, n, "test_mask") if test_mask is not None \
            else np.empty(0, dtype=np.int64)
        if valid_mask is not None:
            valid = check_mask(valid_mask, n, "valid_mask")
        else:
            pool = labeled[~np.isin(labeled, test)]
            valid = self._carve_validation(pool, y)
        train = labeled[~np.isin(labeled, np.concatenate([valid, test]))]
        if train.size == 0:
            raise ValueError("no labeled nodes left for training")

        ds = Dataset(graph=Graph(n, edges), x=X, y=y,
                     masks={"train": train, "valid": valid, "test": test},
                     meta={"name": "estimator-input", "n": n, "e": 0,
                           "d": X.shape[1], "c": int(classes.size),
                           "format_version": 1})
        ds.meta["e"] = ds.graph.num_edges
        ds.validate()

        cfg = self._model_config(int(classes.size))
        tcfg = self._train_config()
        if self.batch_size is not None:
            fanouts = self.fanouts if self.fanouts is not None \
                else [10] * cfg.layers
            params, history = train_mini_batch(ds, cfg, tcfg, fanouts,
                                               self.batch_size)
        else:
            params, history = train_full_batch(ds, cfg, tcfg)

        res = forward(build_normalized(ds.graph), ds.x, cfg, params,
                      mode="eval")
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self.config_ = cfg
        self.params_ = params
        self.history_ = history
        self.alpha_trace_ = history.alpha
        self.proba_ = res.yhat.data
        self.transduction_ = self.proba_.argmax(axis=1)
        self.masks_ = ds.masks
        return self

    def _require_fitted(self):
        if not hasattr(self, "transduction_"):
            raise NotFittedError("fit the classifier first")

    def predict_proba(self, indices=None) -> np.ndarray:
        """Class probabilities for the given node indices (all by default)."""
        self._require_fitted()
        if indices is None:
            return self.proba_.copy()
        idx = np.asarray(indices, dtype=np.int64).ravel()
        return self.proba_[idx]

    def predict(self, indices=None) -> np.ndarray:
        self._require_fitted()
        if indices is None:
            return self.transduction_.copy()
        idx = np.asarray(indices, dtype=np.int64).ravel()
        return self.transduction_[idx]

    def score(self, indices=None, y=None) -> float:
        """Accuracy over the given nodes against ``y`` (or stored labels)."""
        self._require_fitted()
        pred = self.predict(indices)
        if y is None:
            raise ValueError("score needs reference labels")
        y = np.asarray(y, dtype=np.int64).ravel()
        return float((pred == y).mean())
