"""Input validation helpers for the estimator-facing array API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_features", "check_labels", "check_edge_list", "check_mask"]


def check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"X must be 2-D (nodes x features), got shape {X.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 nodes")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    return X


def check_labels(y, n_nodes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_nodes:
        raise ValueError(f"y must be 1-D with {n_nodes} entries")
    if not np.issubdtype(y.dtype, np.integer):
        yf = np.asarray(y, dtype=np.float64)
        if not np.array_equal(yf, yf.astype(np.int64)):
            raise ValueError("y must hold integer class ids (-1 = unlabeled)")
        y = yf.astype(np.int64)
    y = y.astype(np.int64)
    if (y < -1).any():
        raise ValueError("labels must be >= -1 (-1 marks unlabeled nodes)")
    if (y >= 0).sum() == 0:
        raise ValueError("no labeled nodes")
    return y


def check_edge_list(edges, n_nodes: int) -> np.ndarray:
    if edges is None:
        raise ValueError("an edge list is required (pairs of node indices)")
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        return edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ValueError(f"edges must be (m, 2), got shape {edges.shape}")
    if edges.min() < 0 or edges.max() >= n_nodes:
        raise ValueError("edge endpoint out of range")
    return edges


def check_mask(mask, n_nodes: int, name: str) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64)
    if mask.ndim != 1:
        raise ValueError(f"{name} must be a 1-D index array")
    if mask.size and (mask.min() < 0 or mask.max() >= n_nodes):
        raise ValueError(f"{name} index out of range")
    if np.unique(mask).size != mask.size:
        raise ValueError(f"{name} contains duplicate indices")
    return mask
