"""Compiled hot paths: union-find primitives, the process step loop, and
the histogram scans behind recorded observables.

Everything operates on plain numpy arrays so the same state can be driven
either from Python (ForestState, the reference engine) or from the jitted
run loop.  The splitmix64 stream here mirrors rng.SplitMix64 bit for bit,
including the mask-rejection pattern of randint, so replays agree across
both paths.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_U1 = np.uint64(1)
_U0 = np.uint64(0)

RULE_ER = 0
RULE_PRODUCT = 1
RULE_SUM = 2
RULE_BF = 3
RULE_DCDGM = 4
RULE_JTS = 5
RULE_FORCED = 6
RULE_TABLE = 7
RULE_MIN = 8

SAMPLE_IID = 0
SAMPLE_DISTINCT = 1
SAMPLE_PAIRS = 2

# After this many rejected draws, distinct_new_pairs accepts any pair of
# distinct vertices; avoids stalling once one component swallows the graph.
_PAIR_ATTEMPT_CAP = 64


@njit(cache=True, inline="always")
def _next_u64(st):
    st[0] += GOLDEN
    z = st[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _mask_for(n):
    # (1 << bit_length(n-1)) - 1
    if n <= 1:
        return _U0
    m = _U1
    nm1 = np.uint64(n - 1)
    while m < nm1:
        m = (m << _U1) | _U1
    return m


@njit(cache=True, inline="always")
def _randint(st, n_u64, mask):
    # uniform int64 in [0, n); mask rejection, no modulo bias
    while True:
        r = _next_u64(st) & mask
        if r < n_u64:
            return np.int64(r)


@njit(cache=True, inline="always")
def _find(parent, v):
    # path halving; root invariants unchanged
    while parent[v] != v:
        parent[v] = parent[parent[v]]
        v = parent[v]
    return v


@njit(cache=True)
def _compress_all(parent):
    n = parent.shape[0]
    for v0 in range(n):
        r = v0
        while parent[r] != r:
            r = parent[r]
        v = v0
        while parent[v] != r:
            nxt = parent[v]
            parent[v] = r
            v = nxt


@njit(cache=True, inline="always")
def _merge_roots(parent, size, hist, agg, ra, rb):
    # callers guarantee ra != rb; agg = [comp_count, l1]
    sa = size[ra]
    sb = size[rb]
    if sa < sb:
        ra, rb = rb, ra
        sa, sb = sb, sa
    parent[rb] = ra
    sn = sa + sb
    size[ra] = sn
    hist[sa] -= 1
    hist[sb] -= 1
    hist[sn] += 1
    agg[0] -= 1
    if sn > agg[1]:
        agg[1] = sn
    return sn


@njit(cache=True, inline="always")
def _log2_floor(s):
    j = 0
    while s > 1:
        s >>= 1
        j += 1
    return j


@njit(cache=True)
def _scan_row(hist, l1, ell_top, bp, cums_out, sigma_out):
    """One ascending pass over occupied sizes.

    Records cumulative vertex mass at every breakpoint in bp (sorted),
    dyadic-bin masses, the second-largest component size, the sum of the
    ell_top largest sizes, and the second moment of the size histogram.
    """
    nbp = bp.shape[0]
    for j in range(sigma_out.shape[0]):
        sigma_out[j] = 0
    bpi = 0
    while bpi < nbp and bp[bpi] <= 0:
        cums_out[bpi] = 0
        bpi += 1
    cum = np.int64(0)
    chi = np.int64(0)
    top1 = np.int64(0)
    top1c = np.int64(0)
    top2 = np.int64(0)
    for s in range(1, l1 + 1):
        c = hist[s]
        if c > 0:
            mass = s * c
            cum += mass
            chi += s * mass
            sigma_out[_log2_floor(s)] += mass
            top2 = top1
            top1 = s
            top1c = c
        while bpi < nbp and bp[bpi] == s:
            cums_out[bpi] = cum
            bpi += 1
    while bpi < nbp:
        cums_out[bpi] = cum
        bpi += 1
    l2 = top1 if top1c >= 2 else top2
    need = ell_top
    lt = np.int64(0)
    s = l1
    while s >= 1 and need > 0:
        c = hist[s]
        if c > 0:
            take = c if c < need else need
            lt += take * s
            need -= take
        s -= 1
    return l2, lt, chi


@njit(cache=True, inline="always")
def _sample_tuple(st, v, ell, n_u64, mask, sampling_code, parent):
    if sampling_code == SAMPLE_IID:
        for i in range(ell):
            v[i] = _randint(st, n_u64, mask)
    elif sampling_code == SAMPLE_DISTINCT:
        for i in range(ell):
            while True:
                x = _randint(st, n_u64, mask)
                ok = True
                for j in range(i):
                    if v[j] == x:
                        ok = False
                        break
                if ok:
                    v[i] = x
                    break
    else:
        npairs = ell // 2
        for p in range(npairs):
            attempts = 0
            while True:
                a = _randint(st, n_u64, mask)
                b = _randint(st, n_u64, mask)
                if a == b:
                    continue
                if attempts >= _PAIR_ATTEMPT_CAP or _find(parent, a) != _find(parent, b):
                    v[2 * p] = a
                    v[2 * p + 1] = b
                    break
                attempts += 1


@njit(cache=True, inline="always")
def _pair_score(rule_code, cs, p):
    x = cs[2 * p]
    y = cs[2 * p + 1]
    if rule_code == RULE_PRODUCT:
        return x * y
    if rule_code == RULE_SUM:
        return x + y
    return x if x < y else y  # RULE_MIN


@njit(cache=True, inline="always")
def _argmin_position(cs, ell, skip, tie_random, st):
    best = np.int64(0)
    bi = -1
    for i in range(ell):
        if i == skip:
            continue
        if bi < 0 or cs[i] < best:
            best = cs[i]
            bi = i
    if tie_random:
        ties = 0
        for i in range(ell):
            if i != skip and cs[i] == best:
                ties += 1
        if ties > 1:
            pick = _randint(st, np.uint64(ties), _mask_for(ties))
            seen = 0
            for i in range(ell):
                if i != skip and cs[i] == best:
                    if seen == pick:
                        bi = i
                        break
                    seen += 1
    return bi


@njit(cache=True, inline="always")
def _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st):
    """Edge selected for the offered tuple, as 0-based positions (a, b).

    Returns (-1, -1) when the rule adds no edge.  Consumes the rng stream
    only for random tie-breaks, so first-listed decisions replay as pure
    functions of the tuple.
    """
    if rule_code == RULE_ER:
        return 0, 1
    if rule_code == RULE_PRODUCT or rule_code == RULE_SUM or rule_code == RULE_MIN:
        best = _pair_score(rule_code, cs, 0)
        bi = 0
        for p in range(1, r):
            sc = _pair_score(rule_code, cs, p)
            if sc < best:
                best = sc
                bi = p
        if tie_random:
            ties = 0
            for p in range(r):
                if _pair_score(rule_code, cs, p) == best:
                    ties += 1
            if ties > 1:
                pick = _randint(st, np.uint64(ties), _mask_for(ties))
                seen = 0
                for p in range(r):
                    if _pair_score(rule_code, cs, p) == best:
                        if seen == pick:
                            bi = p
                            break
                        seen += 1
        return 2 * bi, 2 * bi + 1
    if rule_code == RULE_BF:
        if cs[0] == 1 and cs[1] == 1:
            return 0, 1
        return 2, 3
    if rule_code == RULE_DCDGM:
        if tie_random and cs[0] == cs[1]:
            i = _randint(st, np.uint64(2), _U1)
        else:
            i = 0 if cs[0] <= cs[1] else 1
        if tie_random and cs[2] == cs[3]:
            j = 2 + _randint(st, np.uint64(2), _U1)
        else:
            j = 2 if cs[2] <= cs[3] else 3
        return i, j
    if rule_code == RULE_JTS or rule_code == RULE_FORCED:
        if rule_code == RULE_FORCED:
            for i in range(ell):
                for j in range(i + 1, ell):
                    if rt[i] == rt[j]:
                        return -1, -1
        i1 = _argmin_position(cs, ell, -1, tie_random, st)
        i2 = _argmin_position(cs, ell, i1, tie_random, st)
        if i1 < i2:
            return i1, i2
        return i2, i1
    # RULE_TABLE: mixed-radix lookup over truncated sizes
    idx = np.int64(0)
    for i in range(ell):
        p = cs[i]
        if p > bp1:
            p = bp1
        idx = idx * bp1 + (p - 1)
    pr = table[idx]
    return 2 * pr, 2 * pr + 1


@njit(cache=True, inline="always")
def _run_loop_impl(parent, size, hist, agg, st,
                   n, steps, m_offset,
                   rule_code, ell, r, bp1, tie_random, table,
                   sampling_code,
                   row_ms, bp, ell_top,
                   thresholds,
                   out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                   out_sigma, out_cums, out_cross,
                   edges_start):
    """Advance the process `steps` steps, recording rows and l1 crossings.

    row_ms: sorted global step indices at which a row is recorded.
    thresholds: sorted l1 levels; out_cross[i] gets the first global step
    with l1 >= thresholds[i] (-1 while unattained).
    Chunked execution: call repeatedly with increasing m_offset; pass the
    running edge count back in through edges_start.

    Only reached through the per-rule wrappers below, which pin rule_code
    (plus the tuple shape where the kind fixes it) as call-site literals,
    so the decision branches fold out of the hot loop.  The step loop is
    spelled out once per sampling mode; keeping the pair-resampling code
    (which walks parent) out of the default loop is worth about 2.5x, and
    the repeated tail stays textual because the compiler handles neither
    tuple returns nor shared state arrays here without losing registers.
    """
    n_u64 = np.uint64(n)
    mask = _mask_for(n)
    v = np.empty(ell, np.int64)
    rt = np.empty(ell, np.int64)
    cs = np.empty(ell, np.int64)
    edges = edges_start
    nrows = row_ms.shape[0]
    rowi = 0
    while rowi < nrows and row_ms[rowi] < m_offset:
        rowi += 1
    nthr = thresholds.shape[0]
    thri = 0
    while thri < nthr and agg[1] >= thresholds[thri]:
        if out_cross[thri] < 0:
            out_cross[thri] = m_offset
        thri += 1
    if rowi < nrows and row_ms[rowi] == m_offset:
        l2, lt, chi = _scan_row(hist, agg[1], ell_top, bp, out_cums[rowi], out_sigma[rowi])
        out_l1[rowi] = agg[1]
        out_l2[rowi] = l2
        out_ltop[rowi] = lt
        out_comp[rowi] = agg[0]
        out_edges[rowi] = edges
        out_chi[rowi] = chi
        rowi += 1
    if sampling_code == SAMPLE_IID:
        for step in range(1, steps + 1):
            m = m_offset + step
            for i in range(ell):
                v[i] = _randint(st, n_u64, mask)
            for i in range(ell):
                rt[i] = _find(parent, v[i])
                cs[i] = size[rt[i]]
            a, b = _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st)
            if a >= 0:
                edges += 1
                if rt[a] != rt[b]:
                    _merge_roots(parent, size, hist, agg, rt[a], rt[b])
                    while thri < nthr and agg[1] >= thresholds[thri]:
                        if out_cross[thri] < 0:
                            out_cross[thri] = m
                        thri += 1
            if rowi < nrows and row_ms[rowi] == m:
                l2, lt, chi = _scan_row(hist, agg[1], ell_top, bp,
                                        out_cums[rowi], out_sigma[rowi])
                out_l1[rowi] = agg[1]
                out_l2[rowi] = l2
                out_ltop[rowi] = lt
                out_comp[rowi] = agg[0]
                out_edges[rowi] = edges
                out_chi[rowi] = chi
                rowi += 1
    elif sampling_code == SAMPLE_DISTINCT:
        for step in range(1, steps + 1):
            m = m_offset + step
            for i in range(ell):
                while True:
                    x = _randint(st, n_u64, mask)
                    ok = True
                    for j in range(i):
                        if v[j] == x:
                            ok = False
                            break
                    if ok:
                        v[i] = x
                        break
            for i in range(ell):
                rt[i] = _find(parent, v[i])
                cs[i] = size[rt[i]]
            a, b = _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st)
            if a >= 0:
                edges += 1
                if rt[a] != rt[b]:
                    _merge_roots(parent, size, hist, agg, rt[a], rt[b])
                    while thri < nthr and agg[1] >= thresholds[thri]:
                        if out_cross[thri] < 0:
                            out_cross[thri] = m
                        thri += 1
            if rowi < nrows and row_ms[rowi] == m:
                l2, lt, chi = _scan_row(hist, agg[1], ell_top, bp,
                                        out_cums[rowi], out_sigma[rowi])
                out_l1[rowi] = agg[1]
                out_l2[rowi] = l2
                out_ltop[rowi] = lt
                out_comp[rowi] = agg[0]
                out_edges[rowi] = edges
                out_chi[rowi] = chi
                rowi += 1
    else:
        for step in range(1, steps + 1):
            m = m_offset + step
            for p in range(ell // 2):
                attempts = 0
                while True:
                    a0 = _randint(st, n_u64, mask)
                    b0 = _randint(st, n_u64, mask)
                    if a0 == b0:
                        continue
                    if attempts >= _PAIR_ATTEMPT_CAP or \
                            _find(parent, a0) != _find(parent, b0):
                        v[2 * p] = a0
                        v[2 * p + 1] = b0
                        break
                    attempts += 1
            for i in range(ell):
                rt[i] = _find(parent, v[i])
                cs[i] = size[rt[i]]
            a, b = _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st)
            if a >= 0:
                edges += 1
                if rt[a] != rt[b]:
                    _merge_roots(parent, size, hist, agg, rt[a], rt[b])
                    while thri < nthr and agg[1] >= thresholds[thri]:
                        if out_cross[thri] < 0:
                            out_cross[thri] = m
                        thri += 1
            if rowi < nrows and row_ms[rowi] == m:
                l2, lt, chi = _scan_row(hist, agg[1], ell_top, bp,
                                        out_cums[rowi], out_sigma[rowi])
                out_l1[rowi] = agg[1]
                out_l2[rowi] = l2
                out_ltop[rowi] = lt
                out_comp[rowi] = agg[0]
                out_edges[rowi] = edges
                out_chi[rowi] = chi
                rowi += 1
    return edges


# Per-rule entry points.  Python-int literals at these call sites reach
# the inlined template as Literal types, so every wrapper compiles (and
# disk-caches) a loop with the decision logic of exactly one rule.  The
# pinned shapes match RuleSpec validation: the classical rule always has
# (ell, r) = (2, 1), the singleton-pair rule (4, 2) with truncation depth
# 1, and the min-of-two-pairs rule (4, 1).

@njit(cache=True)
def _run_loop_er(parent, size, hist, agg, st, n, steps, m_offset,
                 ell, r, bp1, tie_random, table, sampling_code,
                 row_ms, bp, ell_top, thresholds,
                 out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                 out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          0, 2, 1, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_product(parent, size, hist, agg, st, n, steps, m_offset,
                      ell, r, bp1, tie_random, table, sampling_code,
                      row_ms, bp, ell_top, thresholds,
                      out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                      out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          1, ell, r, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_sum(parent, size, hist, agg, st, n, steps, m_offset,
                  ell, r, bp1, tie_random, table, sampling_code,
                  row_ms, bp, ell_top, thresholds,
                  out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                  out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          2, ell, r, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_bf(parent, size, hist, agg, st, n, steps, m_offset,
                 ell, r, bp1, tie_random, table, sampling_code,
                 row_ms, bp, ell_top, thresholds,
                 out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                 out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          3, 4, 2, 2, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_dcdgm(parent, size, hist, agg, st, n, steps, m_offset,
                    ell, r, bp1, tie_random, table, sampling_code,
                    row_ms, bp, ell_top, thresholds,
                    out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                    out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          4, 4, 1, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_jts(parent, size, hist, agg, st, n, steps, m_offset,
                  ell, r, bp1, tie_random, table, sampling_code,
                  row_ms, bp, ell_top, thresholds,
                  out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                  out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          5, ell, 1, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_forced(parent, size, hist, agg, st, n, steps, m_offset,
                     ell, r, bp1, tie_random, table, sampling_code,
                     row_ms, bp, ell_top, thresholds,
                     out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                     out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          6, ell, 1, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_table(parent, size, hist, agg, st, n, steps, m_offset,
                    ell, r, bp1, tie_random, table, sampling_code,
                    row_ms, bp, ell_top, thresholds,
                    out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                    out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          7, ell, r, bp1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_loop_min(parent, size, hist, agg, st, n, steps, m_offset,
                  ell, r, bp1, tie_random, table, sampling_code,
                  row_ms, bp, ell_top, thresholds,
                  out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
                  out_sigma, out_cums, out_cross, edges_start):
    return _run_loop_impl(parent, size, hist, agg, st, n, steps, m_offset,
                          8, ell, r, 1, tie_random, table, sampling_code,
                          row_ms, bp, ell_top, thresholds,
                          out_l1, out_l2, out_ltop, out_comp, out_edges,
                          out_chi, out_sigma, out_cums, out_cross, edges_start)


RUN_LOOPS = {
    RULE_ER: _run_loop_er,
    RULE_PRODUCT: _run_loop_product,
    RULE_SUM: _run_loop_sum,
    RULE_BF: _run_loop_bf,
    RULE_DCDGM: _run_loop_dcdgm,
    RULE_JTS: _run_loop_jts,
    RULE_FORCED: _run_loop_forced,
    RULE_TABLE: _run_loop_table,
    RULE_MIN: _run_loop_min,
}


def _run_loop(parent, size, hist, agg, st, n, steps, m_offset,
              rule_code, ell, r, bp1, tie_random, table, sampling_code,
              row_ms, bp, ell_top, thresholds,
              out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
              out_sigma, out_cums, out_cross, edges_start):
    """Dispatch to the rule-specialized compiled loop."""
    return RUN_LOOPS[rule_code](
        parent, size, hist, agg, st, n, steps, m_offset,
        ell, r, bp1, tie_random, table, sampling_code,
        row_ms, bp, ell_top, thresholds,
        out_l1, out_l2, out_ltop, out_comp, out_edges, out_chi,
        out_sigma, out_cums, out_cross, edges_start)


@njit(cache=True)
def _run_mkb_min(parent, size, hist, agg, st,
                 n, steps,
                 rule_code, ell, r, bp1, tie_random, table,
                 sampling_code,
                 k, bk, nge_k0, nge_bk0):
    """Advance `steps` steps tracking min over steps of N_{>=k} - N_{>=bk}.

    The minimum includes the starting state (offset 0).  Returns
    (min_value, nge_k, nge_bk) so callers can continue incrementally.
    """
    n_u64 = np.uint64(n)
    mask = _mask_for(n)
    v = np.empty(ell, np.int64)
    rt = np.empty(ell, np.int64)
    cs = np.empty(ell, np.int64)
    nge_k = nge_k0
    nge_bk = nge_bk0
    mmin = nge_k - nge_bk
    for step in range(steps):
        _sample_tuple(st, v, ell, n_u64, mask, sampling_code, parent)
        for i in range(ell):
            rt[i] = _find(parent, v[i])
            cs[i] = size[rt[i]]
        a, b = _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st)
        if a >= 0 and rt[a] != rt[b]:
            s1 = cs[a]
            s2 = cs[b]
            sn = s1 + s2
            if s1 >= k:
                nge_k -= s1
            if s2 >= k:
                nge_k -= s2
            if sn >= k:
                nge_k += sn
            if s1 >= bk:
                nge_bk -= s1
            if s2 >= bk:
                nge_bk -= s2
            if sn >= bk:
                nge_bk += sn
            _merge_roots(parent, size, hist, agg, rt[a], rt[b])
            cur = nge_k - nge_bk
            if cur < mmin:
                mmin = cur
    return mmin, nge_k, nge_bk


@njit(cache=True)
def _mc_step_expectation(parent, size, st,
                         n, replays,
                         rule_code, ell, r, bp1, tie_random, table,
                         sampling_code,
                         kmax, sum_d, sumsq_d):
    """Monte Carlo mean/second moment of the one-step change in N_k.

    parent must be fully compressed beforehand; the state is never
    mutated, so all replays draw from the identical frozen graph.
    Accumulates into sum_d[k], sumsq_d[k] for 1 <= k <= kmax.
    """
    n_u64 = np.uint64(n)
    mask = _mask_for(n)
    v = np.empty(ell, np.int64)
    rt = np.empty(ell, np.int64)
    cs = np.empty(ell, np.int64)
    d = np.zeros(kmax + 1, np.float64)
    for rep in range(replays):
        _sample_tuple(st, v, ell, n_u64, mask, sampling_code, parent)
        for i in range(ell):
            rt[i] = parent[v[i]]
            cs[i] = size[rt[i]]
        a, b = _decide(rule_code, ell, r, cs, rt, tie_random, table, bp1, st)
        if a >= 0 and rt[a] != rt[b]:
            j1 = cs[a]
            j2 = cs[b]
            sn = j1 + j2
            if j1 <= kmax:
                d[j1] -= j1
            if j2 <= kmax:
                d[j2] -= j2
            if sn <= kmax:
                d[sn] += sn
            if j1 <= kmax:
                sum_d[j1] += d[j1]
                sumsq_d[j1] += d[j1] * d[j1]
                d[j1] = 0.0
            if j2 <= kmax and j2 != j1:
                sum_d[j2] += d[j2]
                sumsq_d[j2] += d[j2] * d[j2]
                d[j2] = 0.0
            if sn <= kmax:
                sum_d[sn] += d[sn]
                sumsq_d[sn] += d[sn] * d[sn]
                d[sn] = 0.0
