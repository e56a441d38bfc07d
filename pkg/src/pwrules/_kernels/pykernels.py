"""Pure-Python reference versions of the compiled kernels.

Both functions take plain integer/float sequences (numpy arrays work) so the
Cython twin can share the exact same calling convention and results.
"""

from __future__ import annotations


class HitLimitExceeded(RuntimeError):
    pass


def match_embeddings(
    p_elem,
    p_arom,
    p_deg,
    order,
    parent,
    back_ptr,
    back_atom,
    back_order,
    t_elem,
    t_arom,
    t_deg,
    t_ptr,
    t_idx,
    t_bond,
    match_bonds,
    max_hits,
    first_only,
):
    """Enumerate injective embeddings of a pattern graph into a target graph.

    ``order`` is the pattern visiting order; ``parent[k]`` is the depth of an
    already-mapped neighbour of ``order[k]`` (or -1 for a component start).
    ``back_*`` is a CSR list, per depth, of earlier depths bonded to it and the
    required order (0 = any). ``t_bond`` is the flattened n x n target bond
    order matrix. Element code -1 in the pattern is a wildcard.

    Returns a dict mapping the sorted target atom tuple to the smallest mapping
    (indexed by pattern atom) that covers it. Raises HitLimitExceeded when more
    than ``max_hits`` distinct atom sets exist.
    """
    np_ = len(order)
    nt = len(t_elem)
    hits: dict = {}
    if np_ == 0 or np_ > nt:
        return hits
    mapped = [-1] * np_  # by depth
    used = [False] * nt

    def feasible(k, t):
        pa = order[k]
        pe = p_elem[pa]
        if pe != -1:
            if pe != t_elem[t] or p_arom[pa] != t_arom[t]:
                return False
        if t_deg[t] < p_deg[pa]:
            return False
        for x in range(back_ptr[k], back_ptr[k + 1]):
            other = mapped[back_atom[x]]
            bo = t_bond[t * nt + other]
            if bo == 0:
                return False
            want = back_order[x]
            if match_bonds and want != 0 and bo != want:
                return False
        return True

    def record():
        mapping = [0] * np_
        for k in range(np_):
            mapping[order[k]] = mapped[k]
        mapping = tuple(mapping)
        key = tuple(sorted(mapping))
        prev = hits.get(key)
        if prev is None:
            if len(hits) >= max_hits:
                raise HitLimitExceeded(f"more than {max_hits} unique hits")
            hits[key] = mapping
        elif mapping < prev:
            hits[key] = mapping

    def extend(k):
        if k == np_:
            record()
            return first_only
        par = parent[k]
        if par < 0:
            candidates = range(nt)
        else:
            anchor = mapped[par]
            candidates = t_idx[t_ptr[anchor] : t_ptr[anchor + 1]]
        for t in candidates:
            if used[t] or not feasible(k, t):
                continue
            used[t] = True
            mapped[k] = t
            stop = extend(k + 1)
            used[t] = False
            mapped[k] = -1
            if stop:
                return True
        return False

    extend(0)
    return hits


def louvain_move(indptr, indices, weights, strength, comm, tot, m2, order, resolution):
    """One local-moving sweep; ``comm`` and ``tot`` are updated in place.

    Returns the number of nodes that changed community.
    """
    moves = 0
    n = len(strength)
    neigh_w = [0.0] * n
    mark = [False] * n
    for node in order:
        node = int(node)
        own = comm[node]
        k_i = strength[node]
        touched = []
        for x in range(indptr[node], indptr[node + 1]):
            j = indices[x]
            w = weights[x]
            if j == node:
                continue
            c = comm[j]
            if not mark[c]:
                mark[c] = True
                touched.append(c)
            neigh_w[c] += w
        tot[own] -= k_i
        best = own
        best_gain = neigh_w[own] - resolution * k_i * tot[own] / m2
        for c in sorted(touched):
            gain = neigh_w[c] - resolution * k_i * tot[c] / m2
            if gain > best_gain + 1e-12:
                best_gain = gain
                best = c
        tot[best] += k_i
        if best != own:
            comm[node] = best
            moves += 1
        for c in touched:
            neigh_w[c] = 0.0
            mark[c] = False
    return moves
