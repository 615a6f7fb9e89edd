"""Disjoint-set forest over n vertices with aggregate component statistics.

This is the only graph representation in the package: edges are never
stored, only the partition of vertices into components together with a
size histogram.  All recorded observables are functionals of this state.

The histogram is a dense int64 array indexed by component size and is
updated in O(1) per merge; size-threshold queries scan it up to the
current largest size.  Queries happen only on recording grids, merges
happen every step, so the layout favors the merge path.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels as _k


class MergeOutcome(NamedTuple):
    merged: bool
    new_size: int | None


class SizeQueryResult(NamedTuple):
    k: int
    value: int


class ForestState:
    """Union-find over vertices 0..n-1 with union by size and path halving."""

    __slots__ = ("n", "parent", "size", "hist", "_agg")

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("invalid configuration: n must be >= 1")
        self.n = int(n)
        self.parent = np.arange(self.n, dtype=np.int64)
        self.size = np.ones(self.n, dtype=np.int64)
        self.hist = np.zeros(self.n + 1, dtype=np.int64)
        self.hist[1] = self.n
        # _agg = [comp_count, l1], shared with the compiled kernels
        self._agg = np.array([self.n, 1], dtype=np.int64)

    @property
    def comp_count(self) -> int:
        return int(self._agg[0])

    @property
    def l1(self) -> int:
        return int(self._agg[1])

    @property
    def l2(self) -> int:
        """Second order statistic of component sizes (0 if one component).

        Recomputed from the histogram on each call; l2 equals l1 when at
        least two components share the maximal size.
        """
        l1 = self.l1
        if self.hist[l1] >= 2:
            return l1
        occ = np.nonzero(self.hist[:l1])[0]
        return int(occ[-1]) if occ.size else 0

    def find(self, v: int) -> int:
        if not 0 <= v < self.n:
            raise ValueError(f"vertex {v} out of range [0, {self.n})")
        return int(_k._find(self.parent, v))

    def merge(self, u: int, v: int) -> MergeOutcome:
        ru = self.find(u)
        rv = self.find(v)
        if ru == rv:
            return MergeOutcome(False, None)
        sn = _k._merge_roots(self.parent, self.size, self.hist, self._agg, ru, rv)
        return MergeOutcome(True, int(sn))

    def n_ge_k(self, k: int) -> int:
        """Number of vertices in components of size >= k."""
        if k < 1:
            raise ValueError("k must be >= 1")
        l1 = self.l1
        if k > l1:
            return 0
        s = np.arange(k, l1 + 1, dtype=np.int64)
        return int(np.dot(s, self.hist[k:l1 + 1]))

    def n_le_k(self, k: int) -> int:
        """Number of vertices in components of size <= k."""
        if k < 1:
            raise ValueError("k must be >= 1")
        return self.n - self.n_ge_k(k + 1)

    def m_k_b(self, k: int, B: int) -> int:
        """Vertices in components with size in [k, B*k)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if B < 2:
            raise ValueError("B must be >= 2")
        return self.n_ge_k(k) - self.n_ge_k(B * k)

    def l_top(self, j: int) -> int:
        """Sum of the j largest component sizes (with multiplicity)."""
        if j < 1:
            raise ValueError("j must be >= 1")
        need = j
        total = 0
        for s in range(self.l1, 0, -1):
            c = int(self.hist[s])
            if c:
                take = min(c, need)
                total += take * s
                need -= take
                if need == 0:
                    break
        return total

    def hist_dict(self) -> dict[int, int]:
        """Sparse view {size: count} of the occupied histogram entries."""
        occ = np.nonzero(self.hist[:self.l1 + 1])[0]
        return {int(s): int(self.hist[s]) for s in occ if s > 0}

    def component_sizes(self) -> list[int]:
        """All component sizes in descending order (multiplicity included)."""
        out: list[int] = []
        for s in range(self.l1, 0, -1):
            out.extend([s] * int(self.hist[s]))
        return out

    def check_invariants(self) -> None:
        """O(n) structural validation; intended for tests and debug runs."""
        mass = int(np.dot(np.arange(self.n + 1, dtype=np.int64), self.hist))
        if mass != self.n:
            raise AssertionError(f"histogram mass {mass} != n {self.n}")
        if int(self.hist.sum()) != self.comp_count:
            raise AssertionError("component count disagrees with histogram")
        roots = np.array([self.find(v) for v in range(self.n)], dtype=np.int64)
        counts = np.bincount(roots, minlength=self.n)
        true_sizes = counts[counts > 0]
        if sorted(true_sizes.tolist()) != sorted(
            s for s, c in self.hist_dict().items() for _ in range(c)
        ):
            raise AssertionError("histogram disagrees with traversal sizes")
        for r in np.nonzero(counts)[0]:
            if self.size[r] != counts[r]:
                raise AssertionError(f"size at root {r} is stale")
        if self.l1 != int(true_sizes.max()):
            raise AssertionError("l1 disagrees with traversal")
