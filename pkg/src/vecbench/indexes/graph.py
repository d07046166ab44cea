"""Single-layer navigable graph built by incremental insertion.

Each point is inserted with a beam search (width ``ef_construction``) over
the graph built so far. Neighbors are selected with the dominance
heuristic (keep a candidate only if it is closer to the inserted point
than to any already-kept neighbor), then remaining slots are filled with
the nearest pruned candidates, so small graphs (n <= M+1) come out
complete. Reverse edges are added and over-full lists re-pruned with the
same rule. The search entry point is the corpus point nearest to the
corpus mean.

Construction is fully deterministic: insertion order is the entry point
followed by ascending corpus ids, and no randomness is consumed.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..core import (
    BitMatrix,
    Measure,
    ZERO_NORM_EPS,
    pairwise_dissimilarity,
    row_norms,
    select_top,
)
from .base import SearchResult, VectorIndex

_MEASURE_CODES = {
    Measure.EUCLIDEAN: 0,
    Measure.COSINE: 1,
    Measure.NEG_INNER_PRODUCT: 2,
}


@njit(cache=True)
def _dist(corpus, norms, i, q, qn, mcode):
    d = corpus.shape[1]
    if mcode == 0:
        acc = np.float32(0.0)
        for u in range(d):
            t = corpus[i, u] - q[u]
            acc += t * t
        return np.sqrt(acc)
    acc = np.float32(0.0)
    for u in range(d):
        acc += corpus[i, u] * q[u]
    if mcode == 2:
        return -acc
    return np.float32(1.0) - acc / (norms[i] * qn)


@njit(cache=True)
def _heap_push(hd, hi, size, d, i):
    hd[size] = d
    hi[size] = i
    c = size
    while c > 0:
        p = (c - 1) >> 1
        if hd[c] < hd[p]:
            hd[c], hd[p] = hd[p], hd[c]
            hi[c], hi[p] = hi[p], hi[c]
            c = p
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(hd, hi, size):
    size -= 1
    hd[0] = hd[size]
    hi[0] = hi[size]
    c = 0
    while True:
        left = 2 * c + 1
        best = c
        if left < size and hd[left] < hd[best]:
            best = left
        if left + 1 < size and hd[left + 1] < hd[best]:
            best = left + 1
        if best == c:
            break
        hd[c], hd[best] = hd[best], hd[c]
        hi[c], hi[best] = hi[best], hi[c]
        c = best
    return size


@njit(cache=True)
def _fix_tie_runs(dists, ids, cnt):
    # Heap extraction leaves equal-distance runs in arbitrary id order;
    # restore ascending ids within each run.
    s = 0
    while s < cnt:
        e = s + 1
        while e < cnt and dists[e] == dists[s]:
            e += 1
        for a in range(s + 1, e):
            key = ids[a]
            b = a - 1
            while b >= s and ids[b] > key:
                ids[b + 1] = ids[b]
                b -= 1
            ids[b + 1] = key
        s = e


@njit(cache=True)
def _beam_search(corpus, norms, adj, deg, entry, q, qn, ef, mcode):
    n = corpus.shape[0]
    visited = np.zeros(n, np.uint8)
    cd = np.empty(4 * ef + 64, np.float32)
    ci = np.empty(4 * ef + 64, np.int64)
    rd = np.empty(ef + 1, np.float32)  # negated distances: max-heap on top
    ri = np.empty(ef + 1, np.int64)
    d0 = _dist(corpus, norms, entry, q, qn, mcode)
    visited[entry] = 1
    csize = _heap_push(cd, ci, 0, d0, entry)
    rsize = _heap_push(rd, ri, 0, -d0, entry)
    nevals = 1
    while csize > 0:
        dcur = cd[0]
        cur = ci[0]
        if rsize >= ef and dcur > -rd[0]:
            break
        csize = _heap_pop(cd, ci, csize)
        for e in range(deg[cur]):
            nb = adj[cur, e]
            if visited[nb] == 0:
                visited[nb] = 1
                dn = _dist(corpus, norms, nb, q, qn, mcode)
                nevals += 1
                if rsize < ef or dn < -rd[0]:
                    if csize == cd.shape[0]:
                        grown_d = np.empty(cd.shape[0] * 2, np.float32)
                        grown_i = np.empty(ci.shape[0] * 2, np.int64)
                        grown_d[:csize] = cd[:csize]
                        grown_i[:csize] = ci[:csize]
                        cd = grown_d
                        ci = grown_i
                    csize = _heap_push(cd, ci, csize, dn, nb)
                    rsize = _heap_push(rd, ri, rsize, -dn, nb)
                    if rsize > ef:
                        rsize = _heap_pop(rd, ri, rsize)
    cnt = rsize
    out_d = np.empty(cnt, np.float32)
    out_i = np.empty(cnt, np.int64)
    for t in range(cnt - 1, -1, -1):
        out_d[t] = -rd[0]
        out_i[t] = ri[0]
        rsize = _heap_pop(rd, ri, rsize)
    _fix_tie_runs(out_d, out_i, cnt)
    return out_i, out_d, cnt, nevals


@njit(cache=True)
def _select_neighbors(corpus, norms, mcode, cand_ids, cand_dists, cnt, max_deg):
    """Dominance heuristic over (dist, id)-sorted candidates, then fill."""
    kept = np.empty(max_deg, np.int64)
    pruned = np.empty(cnt, np.int64)
    kcnt = 0
    pcnt = 0
    for a in range(cnt):
        if kcnt == max_deg:
            break
        c = cand_ids[a]
        dcv = cand_dists[a]
        keep = True
        for s in range(kcnt):
            dcs = _dist(corpus, norms, kept[s], corpus[c], norms[c], mcode)
            if dcs <= dcv:
                keep = False
                break
        if keep:
            kept[kcnt] = c
            kcnt += 1
        else:
            pruned[pcnt] = c
            pcnt += 1
    for b in range(pcnt):
        if kcnt == max_deg:
            break
        kept[kcnt] = pruned[b]
        kcnt += 1
    return kept, kcnt


@njit(cache=True)
def _prune_list(corpus, norms, mcode, u, v, adj, deg, max_deg):
    cnt = deg[u] + 1
    ids = np.empty(cnt, np.int64)
    dists = np.empty(cnt, np.float32)
    for a in range(deg[u]):
        ids[a] = adj[u, a]
        dists[a] = _dist(corpus, norms, adj[u, a], corpus[u], norms[u], mcode)
    ids[cnt - 1] = v
    dists[cnt - 1] = _dist(corpus, norms, v, corpus[u], norms[u], mcode)
    order = np.argsort(dists)
    sorted_d = dists[order]
    sorted_i = ids[order]
    _fix_tie_runs(sorted_d, sorted_i, cnt)
    kept, kcnt = _select_neighbors(
        corpus, norms, mcode, sorted_i, sorted_d, cnt, max_deg
    )
    deg[u] = kcnt
    for a in range(kcnt):
        adj[u, a] = kept[a]


@njit(cache=True)
def _build_graph(corpus, norms, max_deg, ef_construction, order, mcode):
    n = corpus.shape[0]
    adj = np.full((n, max_deg), -1, np.int32)
    deg = np.zeros(n, np.int32)
    entry = order[0]
    for t in range(1, n):
        v = order[t]
        ids, dists, cnt, _ = _beam_search(
            corpus, norms, adj, deg, entry, corpus[v], norms[v], ef_construction, mcode
        )
        kept, kcnt = _select_neighbors(corpus, norms, mcode, ids, dists, cnt, max_deg)
        for s in range(kcnt):
            u = kept[s]
            adj[v, deg[v]] = u
            deg[v] += 1
            if deg[u] < max_deg:
                adj[u, deg[u]] = v
                deg[u] += 1
            else:
                _prune_list(corpus, norms, mcode, u, v, adj, deg, max_deg)
    return adj, deg


class BeamGraphIndex(VectorIndex):
    family = "BeamGraph"
    query_param_names = ("ef",)

    @classmethod
    def build(cls, corpus, measure: Measure, build_params: dict, seed: int):
        if isinstance(corpus, BitMatrix):
            raise ValueError("BeamGraph requires dense data")
        if measure not in _MEASURE_CODES:
            raise ValueError(f"BeamGraph does not support measure {measure.value}")
        params = dict(build_params)
        max_deg = int(params.pop("M"))
        efc = int(params.pop("ef_construction"))
        if params:
            raise ValueError(f"unknown BeamGraph build params: {sorted(params)}")
        if max_deg < 2:
            raise ValueError("M must be >= 2")
        if efc < max_deg:
            raise ValueError("ef_construction must be >= M")
        dense = np.ascontiguousarray(corpus, dtype=np.float32)
        norms = row_norms(dense)
        if measure is Measure.COSINE and norms.min() < ZERO_NORM_EPS:
            raise ValueError("zero corpus row under cosine")
        mean = dense.mean(axis=0, dtype=np.float64).astype(np.float32)
        to_mean = pairwise_dissimilarity(dense, mean, Measure.EUCLIDEAN)
        entry = int(select_top(to_mean, 1)[0])
        order = np.concatenate(
            [[entry], np.delete(np.arange(dense.shape[0], dtype=np.int64), entry)]
        ).astype(np.int64)
        adj, deg = _build_graph(
            dense, norms, max_deg, efc, order, _MEASURE_CODES[measure]
        )
        index = cls(corpus, measure, {"M": max_deg, "ef_construction": efc}, seed)
        index._dense = dense
        index._norms = norms
        index.adj = adj
        index.deg = deg
        index.entry = entry
        return index

    def _search(self, query, k, qp) -> SearchResult:
        if "ef" not in qp:
            raise ValueError("BeamGraph search requires ef")
        ef = int(qp["ef"])
        if ef < k:
            raise ValueError(f"ef {ef} must be >= k {k}")
        q32 = np.ascontiguousarray(query, dtype=np.float32)
        qn = np.float32(np.sqrt(np.dot(q32, q32)))
        if self.measure is Measure.COSINE and qn < ZERO_NORM_EPS:
            raise ValueError("zero query under cosine")
        ids, _, cnt, nevals = _beam_search(
            self._dense,
            self._norms,
            self.adj,
            self.deg,
            self.entry,
            q32,
            qn,
            ef,
            _MEASURE_CODES[self.measure],
        )
        result = self._rerank(ids[:cnt], query, k)
        return SearchResult(result.ids, result.dists, int(nevals))

    def _extra_params(self) -> dict:
        return {"entry": int(self.entry)}

    def _state_arrays(self) -> dict:
        return {"adj": self.adj, "deg": self.deg}

    @classmethod
    def _restore(cls, corpus, measure, params, arrays):
        index = cls(corpus, measure, params["build_params"], params["build_seed"])
        index._dense = np.ascontiguousarray(corpus, dtype=np.float32)
        index._norms = row_norms(index._dense)
        index.adj = np.ascontiguousarray(arrays["adj"], dtype=np.int32)
        index.deg = np.ascontiguousarray(arrays["deg"], dtype=np.int32)
        index.entry = int(params["entry"])
        return index
