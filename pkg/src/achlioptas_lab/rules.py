"""Rule definitions and the decision function for offered vertex tuples.

A rule receives, each step, a tuple of ell vertices (duplicates allowed)
together with the sizes of their components and the grouping of positions
by component.  It returns the set of position pairs to connect.  Whenever
all ell positions lie in distinct components the returned set must be
nonempty; every built-in rule returns exactly one pair in that case.

Built-in kinds
--------------
erdos_renyi            always connect positions (1, 2)
product                among the r pairs (1,2),(3,4),... pick the one whose
                       endpoint component sizes have the smallest product
sum                    same with the smallest sum
bohman_frieze          connect (1,2) iff both are singletons, else (3,4)
dcdgm                  connect the smaller of the first two components to
                       the smaller of the last two
join_two_smallest      connect the two positions with the smallest sizes
forced_only_smallest   as join_two_smallest, but only when all positions
                       lie in distinct components; otherwise no edge
bounded_size_table     explicit decision table over size profiles
                       truncated at B+1
min_rule_custom        among the r pairs pick the one whose smaller
                       endpoint is smallest

Positions are 1-based in RuleDecision to match the usual v_1..v_ell
notation; the engine works 0-based internally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product as _iproduct
from typing import NamedTuple

from . import _kernels as _k
from .rng import SplitMix64

KINDS = (
    "erdos_renyi",
    "product",
    "sum",
    "bohman_frieze",
    "dcdgm",
    "join_two_smallest",
    "forced_only_smallest",
    "bounded_size_table",
    "min_rule_custom",
)

_RULE_CODES = {
    "erdos_renyi": _k.RULE_ER,
    "product": _k.RULE_PRODUCT,
    "sum": _k.RULE_SUM,
    "bohman_frieze": _k.RULE_BF,
    "dcdgm": _k.RULE_DCDGM,
    "join_two_smallest": _k.RULE_JTS,
    "forced_only_smallest": _k.RULE_FORCED,
    "bounded_size_table": _k.RULE_TABLE,
    "min_rule_custom": _k.RULE_MIN,
}

# Kinds that always connect one of the listed pairs (1,2),(3,4),...
_PAIR_KINDS = frozenset(
    {"erdos_renyi", "product", "sum", "bohman_frieze", "bounded_size_table",
     "min_rule_custom"}
)


class RuleClass(NamedTuple):
    is_achlioptas: bool
    is_merging: bool
    is_bounded_size: bool
    is_nice: bool


@dataclass(frozen=True)
class RuleSpec:
    """Immutable description of an ell-vertex rule."""

    kind: str
    ell: int
    r: int | None = None
    B: int | None = None
    table: tuple[int, ...] | None = None  # 0-based pair index per profile
    tie_break: str = "first_listed"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.tie_break not in ("first_listed", "random"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.ell < 2:
            raise ValueError("ell must be >= 2")
        if self.kind in _PAIR_KINDS:
            if self.r is None or self.ell != 2 * self.r:
                raise ValueError(f"{self.kind} requires ell = 2r")
        if self.kind == "bounded_size_table":
            if self.B is None or self.B < 1:
                raise ValueError("bounded_size_table requires B >= 1")
            want = (self.B + 1) ** self.ell
            if self.table is None or len(self.table) != want:
                raise ValueError(
                    f"bounded_size_table requires a complete table of {want} entries"
                )
            if any(not 0 <= p < self.r for p in self.table):
                raise ValueError("table entries must be pair indices in 1..r")

    @property
    def code(self) -> int:
        return _RULE_CODES[self.kind]

    def table_array(self):
        import numpy as np

        if self.table is None:
            return np.empty(0, dtype=np.int64)
        return np.asarray(self.table, dtype=np.int64)


def make_rule(kind: str, ell: int | None = None, r: int | None = None,
              B: int | None = None, table=None,
              tie_break: str = "first_listed") -> RuleSpec:
    """Build a RuleSpec filling in conventional defaults per kind."""
    if kind == "erdos_renyi":
        return RuleSpec(kind, 2, r=1, tie_break=tie_break)
    if kind in ("product", "sum", "min_rule_custom"):
        if r is None:
            r = (ell // 2) if ell else 2
        return RuleSpec(kind, 2 * r, r=r, tie_break=tie_break)
    if kind == "bohman_frieze":
        return RuleSpec(kind, 4, r=2, B=1, tie_break=tie_break)
    if kind == "dcdgm":
        return RuleSpec(kind, 4, tie_break=tie_break)
    if kind in ("join_two_smallest", "forced_only_smallest"):
        return RuleSpec(kind, ell if ell else 3, tie_break=tie_break)
    if kind == "bounded_size_table":
        if ell is None or B is None or table is None:
            raise ValueError("bounded_size_table needs ell, B and table")
        return RuleSpec(kind, ell, r=ell // 2, B=B,
                        table=tuple(table), tie_break=tie_break)
    raise ValueError(f"unknown rule kind {kind!r}")


@dataclass(frozen=True)
class OfferedTuple:
    """One offered ell-tuple: vertices, their component sizes, and the
    grouping of positions by component (group labels in first-occurrence
    order, so (0, 1, 1, 2) means positions 2 and 3 share a component)."""

    m: int
    vertices: tuple[int, ...]
    sizes: tuple[int, ...]
    partition: tuple[int, ...]

    def __post_init__(self):
        ell = len(self.vertices)
        if len(self.sizes) != ell or len(self.partition) != ell:
            raise ValueError("vertices, sizes and partition must share length")
        by_group: dict[int, int] = {}
        for g, s in zip(self.partition, self.sizes):
            if by_group.setdefault(g, s) != s:
                raise ValueError("positions in one group must share a size")

    @property
    def all_distinct(self) -> bool:
        return len(set(self.partition)) == len(self.partition)


def offered_from_roots(m: int, vertices, sizes, roots) -> OfferedTuple:
    """Build an OfferedTuple from component roots (labels relabelled)."""
    labels: dict[int, int] = {}
    part = tuple(labels.setdefault(root, len(labels)) for root in roots)
    return OfferedTuple(m, tuple(vertices), tuple(sizes), part)


@dataclass(frozen=True)
class RuleDecision:
    """Set of 1-based position pairs (a, b), a < b, to connect."""

    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        for a, b in self.edges:
            if not a < b:
                raise ValueError("pairs must be ordered a < b")

    @property
    def single(self) -> tuple[int, int] | None:
        if len(self.edges) == 1:
            return next(iter(self.edges))
        return None


def _argmin_pos(sizes, skip: int | None, tie_break: str, rng) -> int:
    best = None
    bi = -1
    for i, s in enumerate(sizes):
        if i == skip:
            continue
        if bi < 0 or s < best:
            best, bi = s, i
    if tie_break == "random":
        ties = [i for i, s in enumerate(sizes) if i != skip and s == best]
        if len(ties) > 1:
            bi = ties[rng.randint(len(ties))]
    return bi


def decide(rule: RuleSpec, offered: OfferedTuple,
           rng: SplitMix64 | None = None) -> RuleDecision:
    """Edge set selected by `rule` for one offered tuple.

    Deterministic for tie_break="first_listed"; with tie_break="random"
    the rng stream is consumed only when a tie actually occurs, mirroring
    the compiled engine exactly.
    """
    if len(offered.vertices) != rule.ell:
        raise ValueError(
            f"rule arity {rule.ell} does not match tuple length {len(offered.vertices)}"
        )
    if rule.tie_break == "random" and rng is None:
        raise ValueError("random tie-break requires an rng")
    sizes = offered.sizes
    kind = rule.kind
    if kind == "erdos_renyi":
        return RuleDecision(frozenset({(1, 2)}))
    if kind in ("product", "sum", "min_rule_custom"):
        if kind == "product":
            score = lambda p: sizes[2 * p] * sizes[2 * p + 1]
        elif kind == "sum":
            score = lambda p: sizes[2 * p] + sizes[2 * p + 1]
        else:
            score = lambda p: min(sizes[2 * p], sizes[2 * p + 1])
        scores = [score(p) for p in range(rule.r)]
        best = min(scores)
        bi = scores.index(best)
        if rule.tie_break == "random":
            ties = [p for p, s in enumerate(scores) if s == best]
            if len(ties) > 1:
                bi = ties[rng.randint(len(ties))]
        return RuleDecision(frozenset({(2 * bi + 1, 2 * bi + 2)}))
    if kind == "bohman_frieze":
        if sizes[0] == 1 and sizes[1] == 1:
            return RuleDecision(frozenset({(1, 2)}))
        return RuleDecision(frozenset({(3, 4)}))
    if kind == "dcdgm":
        if rule.tie_break == "random" and sizes[0] == sizes[1]:
            i = rng.randint(2)
        else:
            i = 0 if sizes[0] <= sizes[1] else 1
        if rule.tie_break == "random" and sizes[2] == sizes[3]:
            j = 2 + rng.randint(2)
        else:
            j = 2 if sizes[2] <= sizes[3] else 3
        return RuleDecision(frozenset({(i + 1, j + 1)}))
    if kind in ("join_two_smallest", "forced_only_smallest"):
        if kind == "forced_only_smallest" and not offered.all_distinct:
            return RuleDecision(frozenset())
        i1 = _argmin_pos(sizes, None, rule.tie_break, rng)
        i2 = _argmin_pos(sizes, i1, rule.tie_break, rng)
        a, b = sorted((i1, i2))
        return RuleDecision(frozenset({(a + 1, b + 1)}))
    # bounded_size_table
    bp1 = rule.B + 1
    idx = 0
    for s in sizes:
        idx = idx * bp1 + (min(s, bp1) - 1)
    pr = rule.table[idx]
    return RuleDecision(frozenset({(2 * pr + 1, 2 * pr + 2)}))


def truncate_profile(sizes, B: int) -> tuple[int, ...]:
    """Componentwise min(size, B+1): all a bounded-size rule may see."""
    if B < 1:
        raise ValueError("B must be >= 1")
    return tuple(min(int(s), B + 1) for s in sizes)


def classify(rule: RuleSpec) -> RuleClass:
    """Structural classification flags for a rule.

    bounded_size means decisions depend only on sizes truncated at B+1
    (size-oblivious rules count with B=0).  merging means any two
    components holding an eps fraction of the vertices are joined in one
    step with probability bounded below in eps; join_two_smallest
    qualifies because offering both remaining positions inside the larger
    of the two target components forces that join.  nice means the
    expected change in N_k depends only on N_1..N_max(k,K) for a fixed K.
    """
    achlioptas = rule.kind in _PAIR_KINDS
    merging = rule.kind != "forced_only_smallest"
    bounded = rule.kind in ("erdos_renyi", "bohman_frieze", "bounded_size_table")
    nice = bounded or rule.kind in ("dcdgm", "join_two_smallest", "min_rule_custom")
    return RuleClass(achlioptas, merging, bounded, nice)


def effective_b(rule: RuleSpec) -> int:
    """Truncation depth actually needed by a bounded-size rule's decisions
    (0 for size-oblivious rules such as the classical process)."""
    if rule.kind == "erdos_renyi":
        return 0
    if rule.kind == "bohman_frieze":
        return 1
    if rule.kind == "bounded_size_table":
        return rule.B
    raise ValueError(f"{rule.kind} is not a bounded-size rule")


def save_table_json(rule: RuleSpec, path) -> None:
    """Serialize a bounded_size_table rule as documented JSON."""
    if rule.kind != "bounded_size_table":
        raise ValueError("only bounded_size_table rules serialize to JSON tables")
    bp1 = rule.B + 1
    entries = {}
    for i, profile in enumerate(_iproduct(range(1, bp1 + 1), repeat=rule.ell)):
        entries[",".join(map(str, profile))] = rule.table[i] + 1
    payload = {"ell": rule.ell, "B": rule.B, "table": entries}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_table_json(path, tie_break: str = "first_listed") -> RuleSpec:
    """Load {"ell":..., "B":..., "table": {"c1,c2,...": pair}} as a rule.

    Profiles are comma-joined truncated sizes; pair indices are 1-based.
    Incomplete or inconsistent tables are rejected.
    """
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        ell = int(payload["ell"])
        B = int(payload["B"])
        entries = payload["table"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed table file {path}: {exc}") from None
    if ell % 2 != 0 or ell < 2:
        raise ValueError("table rules need even ell >= 2")
    bp1 = B + 1
    r = ell // 2
    table = []
    for profile in _iproduct(range(1, bp1 + 1), repeat=ell):
        key = ",".join(map(str, profile))
        if key not in entries:
            raise ValueError(f"incomplete table: missing profile {key}")
        pair = int(entries[key])
        if not 1 <= pair <= r:
            raise ValueError(f"profile {key}: pair index {pair} outside 1..{r}")
        table.append(pair - 1)
    if len(entries) != len(table):
        raise ValueError("table has entries for unknown profiles")
    return RuleSpec("bounded_size_table", ell, r=r, B=B, table=tuple(table),
                    tie_break=tie_break)
