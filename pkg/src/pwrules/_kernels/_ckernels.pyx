# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of :mod:`pwrules._kernels.pykernels` (same signatures, same results)."""

import numpy as np
cimport numpy as cnp

from .pykernels import HitLimitExceeded

cnp.import_array()


cdef class _Matcher:
    cdef int[:] p_elem, p_arom, p_deg, order, parent, back_ptr, back_atom, back_order
    cdef int[:] t_elem, t_arom, t_deg, t_ptr, t_idx, t_bond
    cdef int[:] mapped, used
    cdef int np_, nt, match_bonds, first_only
    cdef Py_ssize_t max_hits
    cdef dict hits

    cdef bint feasible(self, int k, int t):
        cdef int pa = self.order[k]
        cdef int pe = self.p_elem[pa]
        cdef int x, other, bo, want
        if pe != -1:
            if pe != self.t_elem[t] or self.p_arom[pa] != self.t_arom[t]:
                return False
        if self.t_deg[t] < self.p_deg[pa]:
            return False
        for x in range(self.back_ptr[k], self.back_ptr[k + 1]):
            other = self.mapped[self.back_atom[x]]
            bo = self.t_bond[t * self.nt + other]
            if bo == 0:
                return False
            want = self.back_order[x]
            if self.match_bonds and want != 0 and bo != want:
                return False
        return True

    cdef record(self):
        cdef int k
        mapping = [0] * self.np_
        for k in range(self.np_):
            mapping[self.order[k]] = self.mapped[k]
        mapping = tuple(mapping)
        key = tuple(sorted(mapping))
        prev = self.hits.get(key)
        if prev is None:
            if len(self.hits) >= self.max_hits:
                raise HitLimitExceeded(f"more than {self.max_hits} unique hits")
            self.hits[key] = mapping
        elif mapping < prev:
            self.hits[key] = mapping

    cdef int extend(self, int k) except -1:
        cdef int par, anchor, t, x, lo, hi, stop
        if k == self.np_:
            self.record()
            return 1 if self.first_only else 0
        par = self.parent[k]
        if par < 0:
            lo = 0
            hi = self.nt
        else:
            anchor = self.mapped[par]
            lo = self.t_ptr[anchor]
            hi = self.t_ptr[anchor + 1]
        for x in range(lo, hi):
            t = x if par < 0 else self.t_idx[x]
            if self.used[t] or not self.feasible(k, t):
                continue
            self.used[t] = 1
            self.mapped[k] = t
            stop = self.extend(k + 1)
            self.used[t] = 0
            self.mapped[k] = -1
            if stop:
                return 1
        return 0


def _i32(a):
    return np.ascontiguousarray(a, dtype=np.int32)


def match_embeddings(p_elem, p_arom, p_deg, order, parent, back_ptr, back_atom, back_order,
                     t_elem, t_arom, t_deg, t_ptr, t_idx, t_bond,
                     match_bonds, max_hits, first_only):
    cdef _Matcher m = _Matcher()
    m.np_ = len(order)
    m.nt = len(t_elem)
    m.hits = {}
    if m.np_ == 0 or m.np_ > m.nt:
        return m.hits
    m.p_elem = _i32(p_elem)
    m.p_arom = _i32(p_arom)
    m.p_deg = _i32(p_deg)
    m.order = _i32(order)
    m.parent = _i32(parent)
    m.back_ptr = _i32(back_ptr)
    # empty arrays still need a valid buffer
    m.back_atom = _i32(back_atom) if len(back_atom) else np.zeros(1, dtype=np.int32)
    m.back_order = _i32(back_order) if len(back_order) else np.zeros(1, dtype=np.int32)
    m.t_elem = _i32(t_elem)
    m.t_arom = _i32(t_arom)
    m.t_deg = _i32(t_deg)
    m.t_ptr = _i32(t_ptr)
    m.t_idx = _i32(t_idx) if len(t_idx) else np.zeros(1, dtype=np.int32)
    m.t_bond = _i32(t_bond)
    m.mapped = np.full(m.np_, -1, dtype=np.int32)
    m.used = np.zeros(m.nt, dtype=np.int32)
    m.match_bonds = 1 if match_bonds else 0
    m.first_only = 1 if first_only else 0
    m.max_hits = max_hits
    m.extend(0)
    return m.hits


def louvain_move(indptr, indices, weights, strength, comm, tot, double m2, order, double resolution):
    cdef long[:] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long[:] ix = np.ascontiguousarray(indices, dtype=np.int64) if len(indices) else np.zeros(1, dtype=np.int64)
    cdef double[:] w = np.ascontiguousarray(weights, dtype=np.float64) if len(weights) else np.zeros(1)
    cdef double[:] k = np.ascontiguousarray(strength, dtype=np.float64)
    cdef long[:] c = comm
    cdef double[:] t = tot
    cdef long[:] od = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = k.shape[0]
    cdef double[:] neigh_w = np.zeros(n)
    cdef char[:] mark = np.zeros(n, dtype=np.int8)
    cdef long[:] touched = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t n_touched, a, a2, b, x, node, j, cc, own, best, tmp
    cdef double k_i, gain, best_gain
    cdef int moves = 0
    for a in range(od.shape[0]):
        node = od[a]
        own = c[node]
        k_i = k[node]
        n_touched = 0
        for x in range(ip[node], ip[node + 1]):
            j = ix[x]
            if j == node:
                continue
            cc = c[j]
            if not mark[cc]:
                mark[cc] = 1
                touched[n_touched] = cc
                n_touched += 1
            neigh_w[cc] += w[x]
        # ascending community order, matching sorted() in the Python version
        for a2 in range(1, n_touched):
            tmp = touched[a2]
            b = a2 - 1
            while b >= 0 and touched[b] > tmp:
                touched[b + 1] = touched[b]
                b -= 1
            touched[b + 1] = tmp
        t[own] -= k_i
        best = own
        best_gain = neigh_w[own] - resolution * k_i * t[own] / m2
        for b in range(n_touched):
            cc = touched[b]
            gain = neigh_w[cc] - resolution * k_i * t[cc] / m2
            if gain > best_gain + 1e-12:
                best_gain = gain
                best = cc
        t[best] += k_i
        if best != own:
            c[node] = best
            moves += 1
        for b in range(n_touched):
            neigh_w[touched[b]] = 0.0
            mark[touched[b]] = 0
    return moves
