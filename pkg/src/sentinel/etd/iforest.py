"""Isolation forest built from scratch.

Each tree partitions a random subsample with uniformly random
(feature, split-value) choices; anomalous points isolate in short paths.
The anomaly score is 2^(-E[h(x)] / c(psi)) where c(n) is the average
unsuccessful-search path length of a binary search tree.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

EULER_GAMMA = 0.5772156649015329


@functools.lru_cache(maxsize=None)
def _harmonic(n: int) -> float:
    # Exact for the subsample sizes we actually use; the asymptotic form
    # only kicks in for very large n where its error is negligible.
    if n < 4096:
        return sum(1.0 / k for k in range(1, n + 1))
    return math.log(n) + EULER_GAMMA + 1.0 / (2 * n)


def avg_path_length(n: int) -> float:
    """c(n): expected path length normalizer; c(1)=0, c(2)=1."""
    if n <= 1:
        return 0.0
    if n == 2:
        return 1.0
    return 2.0 * _harmonic(n - 1) - 2.0 * (n - 1) / n


@dataclass
class TreeNode:
    # Internal node when feature is set; leaf otherwise.
    feature: Optional[int] = None
    value: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    size: int = 0

    def to_obj(self):
        if self.feature is None:
            return {"n": self.size}
        return {"f": self.feature, "v": self.value,
                "l": self.left.to_obj(), "r": self.right.to_obj()}

    @classmethod
    def from_obj(cls, obj) -> "TreeNode":
        if "n" in obj:
            return cls(size=int(obj["n"]))
        return cls(feature=int(obj["f"]), value=float(obj["v"]),
                   left=cls.from_obj(obj["l"]), right=cls.from_obj(obj["r"]))


@dataclass
class IsolationForestModel:
    trees: List[TreeNode]
    subsample: int
    tree_count: int
    c_psi: float
    seed: int
    dim: int

    def to_obj(self):
        return {
            "subsample": self.subsample,
            "tree_count": self.tree_count,
            "c_psi": self.c_psi,
            "seed": self.seed,
            "dim": self.dim,
            "trees": [t.to_obj() for t in self.trees],
        }

    @classmethod
    def from_obj(cls, obj) -> "IsolationForestModel":
        return cls(
            trees=[TreeNode.from_obj(t) for t in obj["trees"]],
            subsample=int(obj["subsample"]),
            tree_count=int(obj["tree_count"]),
            c_psi=float(obj["c_psi"]),
            seed=int(obj["seed"]),
            dim=int(obj["dim"]),
        )


def _build_tree(X: np.ndarray, rng: np.random.Generator, depth: int, cap: int) -> TreeNode:
    n = X.shape[0]
    if n <= 1 or depth >= cap:
        return TreeNode(size=n)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    splittable = np.nonzero(hi > lo)[0]
    if splittable.size == 0:  # all points identical
        return TreeNode(size=n)
    feat = int(rng.choice(splittable))
    value = float(rng.uniform(lo[feat], hi[feat]))
    mask = X[:, feat] < value
    return TreeNode(
        feature=feat,
        value=value,
        left=_build_tree(X[mask], rng, depth + 1, cap),
        right=_build_tree(X[~mask], rng, depth + 1, cap),
    )


def build_iforest(
    X: np.ndarray,
    tree_count: int = 100,
    subsample: int = 256,
    seed: int = 0,
) -> IsolationForestModel:
    """Build the forest; deterministic for a given seed."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 rows to build an isolation forest")
    rng = np.random.default_rng(seed)
    psi = min(subsample, X.shape[0])
    cap = math.ceil(math.log2(psi)) if psi > 1 else 1
    trees = []
    for _ in range(tree_count):
        if X.shape[0] > psi:
            idx = rng.choice(X.shape[0], size=psi, replace=False)
            sample = X[idx]
        else:
            sample = X
        trees.append(_build_tree(sample, rng, 0, cap))
    return IsolationForestModel(
        trees=trees, subsample=psi, tree_count=tree_count,
        c_psi=avg_path_length(psi), seed=seed, dim=X.shape[1],
    )


def _path_length(node: TreeNode, x: np.ndarray) -> float:
    depth = 0.0
    while node.feature is not None:
        node = node.left if x[node.feature] < node.value else node.right
        depth += 1.0
    return depth + avg_path_length(node.size)


def iforest_score(model: IsolationForestModel, x: np.ndarray) -> float:
    """Anomaly score in (0,1); higher isolates faster."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ValueError(f"expected dimension {model.dim}, got shape {x.shape}")
    mean_path = sum(_path_length(t, x) for t in model.trees) / len(model.trees)
    return float(2.0 ** (-mean_path / model.c_psi))
