"""Ensemble of random-hyperplane trees with leaf voting.

Each tree recursively splits on a Gaussian random direction at the median
projection until leaves hold at most ``leaf_size`` points. A query routes
to one leaf per tree; points appearing in at least ``votes`` leaves are
rescored exactly.
"""

from __future__ import annotations

import numpy as np

from ..core import BitMatrix, Measure
from .base import SearchResult, VectorIndex

_MAX_DEPTH = 64


class _Tree:
    __slots__ = ("normals", "thresholds", "children", "leaf_offsets", "leaf_ids")

    def __init__(self, normals, thresholds, children, leaf_offsets, leaf_ids):
        self.normals = normals  # (internal, d) float32
        self.thresholds = thresholds  # (internal,) float32
        self.children = children  # (internal, 2) int64; negative = ~leaf ref
        self.leaf_offsets = leaf_offsets  # (leaves + 1,) int64
        self.leaf_ids = leaf_ids  # concatenated point ids

    def route(self, query: np.ndarray) -> np.ndarray:
        if self.normals.shape[0] == 0:
            ref = -1
        else:
            node = 0
            while True:
                proj = float(np.dot(query, self.normals[node]))
                ref = int(self.children[node, 0 if proj < self.thresholds[node] else 1])
                if ref < 0:
                    break
                node = ref
        leaf = -ref - 1
        return self.leaf_ids[self.leaf_offsets[leaf] : self.leaf_offsets[leaf + 1]]


def _grow_tree(corpus: np.ndarray, leaf_size: int, rng) -> _Tree:
    d = corpus.shape[1]
    normals, thresholds, children = [], [], []
    leaf_parts = []

    def rec(ids: np.ndarray, depth: int) -> int:
        if ids.size <= leaf_size or depth >= _MAX_DEPTH:
            leaf_parts.append(ids)
            return -len(leaf_parts)
        normal = rng.standard_normal(d).astype(np.float32)
        proj = corpus[ids] @ normal
        threshold = np.float32(np.median(proj))
        left_mask = proj < threshold
        if not left_mask.any() or left_mask.all():
            leaf_parts.append(ids)
            return -len(leaf_parts)
        node = len(normals)
        normals.append(normal)
        thresholds.append(threshold)
        children.append([0, 0])
        children[node][0] = rec(ids[left_mask], depth + 1)
        children[node][1] = rec(ids[~left_mask], depth + 1)
        return node

    rec(np.arange(corpus.shape[0], dtype=np.int64), 0)
    offsets = np.concatenate(
        [[0], np.cumsum([p.size for p in leaf_parts])]
    ).astype(np.int64)
    return _Tree(
        normals=np.array(normals, dtype=np.float32).reshape(-1, d),
        thresholds=np.array(thresholds, dtype=np.float32),
        children=np.array(children, dtype=np.int64).reshape(-1, 2),
        leaf_offsets=offsets,
        leaf_ids=np.concatenate(leaf_parts) if leaf_parts else np.empty(0, np.int64),
    )


class RPForestIndex(VectorIndex):
    family = "RPForest"
    query_param_names = ("votes",)

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if isinstance(corpus, BitMatrix):
            raise ValueError("RPForest requires dense data")
        if measure is Measure.HAMMING:
            raise ValueError("RPForest does not support Hamming")
        params = dict(build_params)
        t = int(params.pop("T"))
        leaf_size = int(params.pop("leaf_size"))
        if params:
            raise ValueError(f"unknown RPForest build params: {sorted(params)}")
        if t < 1 or leaf_size < 1:
            raise ValueError("T and leaf_size must be >= 1")
        dense = np.ascontiguousarray(corpus, dtype=np.float32)
        tree_seeds = np.random.SeedSequence(seed).generate_state(t)
        index = cls(corpus, measure, {"T": t, "leaf_size": leaf_size}, seed)
        index.trees = [
            _grow_tree(dense, leaf_size, np.random.default_rng(int(s)))
            for s in tree_seeds
        ]
        return index

    def candidates(self, query, query_params: dict) -> np.ndarray:
        votes = int(query_params["votes"])
        if votes > len(self.trees):
            raise ValueError(f"votes {votes} exceeds tree count {len(self.trees)}")
        q32 = np.ascontiguousarray(query, dtype=np.float32)
        hits = np.concatenate([tree.route(q32) for tree in self.trees])
        ids, counts = np.unique(hits, return_counts=True)
        return ids[counts >= votes]

    def _search(self, query, k, qp) -> SearchResult:
        if "votes" not in qp:
            raise ValueError("RPForest search requires votes")
        return self._rerank(self.candidates(query, qp), query, k)

    def _state_arrays(self) -> dict:
        arrays = {}
        for i, tree in enumerate(self.trees):
            arrays[f"t{i}_normals"] = tree.normals
            arrays[f"t{i}_thresholds"] = tree.thresholds
            arrays[f"t{i}_children"] = tree.children
            arrays[f"t{i}_leaf_offsets"] = tree.leaf_offsets
            arrays[f"t{i}_leaf_ids"] = tree.leaf_ids
        return arrays

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        index = cls(corpus, measure, params["build_params"], params["build_seed"])
        index.trees = []
        for i in range(int(params["build_params"]["T"])):
            index.trees.append(
                _Tree(
                    normals=arrays[f"t{i}_normals"].astype(np.float32),
                    thresholds=arrays[f"t{i}_thresholds"].astype(np.float32),
                    children=arrays[f"t{i}_children"].astype(np.int64),
                    leaf_offsets=arrays[f"t{i}_leaf_offsets"].astype(np.int64),
                    leaf_ids=arrays[f"t{i}_leaf_ids"].astype(np.int64),
                )
            )
        return index
