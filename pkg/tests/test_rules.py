import itertools
import json

import pytest

from achlioptas_lab.rng import SplitMix64
from achlioptas_lab.rules import (OfferedTuple, RuleSpec, classify, decide,
                                  load_table_json, make_rule,
                                  offered_from_roots, save_table_json,
                                  truncate_profile)


def offered(sizes, partition=None, m=0):
    ell = len(sizes)
    part = tuple(partition) if partition is not None else tuple(range(ell))
    return OfferedTuple(m, tuple(range(ell)), tuple(sizes), part)


def single_edge(rule, sizes, partition=None):
    return decide(rule, offered(sizes, partition)).single


def test_decide_examples():
    prod = make_rule("product")
    assert single_edge(prod, (1, 1, 2, 3)) == (1, 2)
    assert single_edge(prod, (2, 2, 1, 4)) == (1, 2)  # tie 4 == 4, first listed
    bf = make_rule("bohman_frieze")
    assert single_edge(bf, (1, 1, 7, 9)) == (1, 2)
    assert single_edge(bf, (1, 2, 7, 9)) == (3, 4)
    dc = make_rule("dcdgm")
    assert single_edge(dc, (4, 2, 3, 7)) == (2, 3)
    jts = make_rule("join_two_smallest", ell=3)
    assert single_edge(jts, (5, 1, 2)) == (2, 3)
    forced = make_rule("forced_only_smallest", ell=3)
    assert decide(forced, offered((5, 5, 2), partition=(0, 0, 1))).edges == frozenset()
    assert single_edge(forced, (5, 1, 2)) == (2, 3)
    er = make_rule("erdos_renyi")
    assert single_edge(er, (3, 9)) == (1, 2)


def test_decide_more_kinds():
    sm = make_rule("sum")
    assert single_edge(sm, (1, 6, 3, 3)) == (3, 4)
    mn = make_rule("min_rule_custom")
    assert single_edge(mn, (2, 9, 3, 4)) == (1, 2)
    assert single_edge(mn, (5, 9, 3, 4)) == (3, 4)


def test_decide_arity_mismatch_rejected():
    prod = make_rule("product")
    with pytest.raises(ValueError):
        decide(prod, offered((1, 2, 3)))


def test_offered_tuple_validation():
    with pytest.raises(ValueError):
        OfferedTuple(0, (0, 1), (1, 2), (0, 0))  # one group, two sizes
    with pytest.raises(ValueError):
        OfferedTuple(0, (0, 1, 2), (1, 2), (0, 1, 2))
    ot = offered_from_roots(0, (4, 7, 9), (3, 3, 5), (11, 11, 20))
    assert ot.partition == (0, 0, 1)
    assert not ot.all_distinct


def _all_singleton_partitions_nonempty(rule, rng):
    ell = rule.ell
    for trial in range(200):
        sizes = tuple(1 + rng.randint(50) for _ in range(ell))
        dec = decide(rule, offered(sizes), rng)
        assert dec.edges, f"{rule.kind} returned empty edge set on distinct comps"
        for a, b in dec.edges:
            assert 1 <= a < b <= ell


@pytest.mark.parametrize("kind,ell", [
    ("erdos_renyi", None), ("product", None), ("sum", None),
    ("bohman_frieze", None), ("dcdgm", None), ("join_two_smallest", 3),
    ("join_two_smallest", 5), ("join_two_smallest", 6),
    ("forced_only_smallest", 3), ("forced_only_smallest", 6),
    ("min_rule_custom", None),
])
def test_condition_nonempty_when_all_distinct(kind, ell):
    rule = make_rule(kind, ell=ell)
    _all_singleton_partitions_nonempty(rule, SplitMix64(5))


def test_achlioptas_rules_pick_listed_pairs():
    rng = SplitMix64(17)
    for kind in ("erdos_renyi", "product", "sum", "bohman_frieze", "min_rule_custom"):
        rule = make_rule(kind)
        r = rule.r
        listed = {(2 * i + 1, 2 * i + 2) for i in range(r)}
        for _ in range(300):
            sizes = tuple(1 + rng.randint(30) for _ in range(rule.ell))
            dec = decide(rule, offered(sizes))
            assert dec.edges <= listed


def test_first_listed_determinism():
    rng = SplitMix64(23)
    for kind, ell in (("product", None), ("dcdgm", None), ("join_two_smallest", 4)):
        rule = make_rule(kind, ell=ell)
        for _ in range(100):
            sizes = tuple(1 + rng.randint(5) for _ in range(rule.ell))
            d1 = decide(rule, offered(sizes))
            d2 = decide(rule, offered(sizes))
            assert d1 == d2


def test_scaling_invariance_of_argmin_rules():
    rng = SplitMix64(31)
    for kind in ("product", "sum"):
        rule = make_rule(kind)
        for _ in range(300):
            sizes = tuple(1 + rng.randint(20) for _ in range(4))
            lam = 2 + rng.randint(5)
            scaled = tuple(lam * s for s in sizes)
            assert single_edge(rule, sizes) == single_edge(rule, scaled)


def test_random_tie_break_uses_stream_only_on_ties():
    rule = make_rule("product", tie_break="random")
    rng = SplitMix64(1)
    state0 = rng.state
    decide(rule, offered((1, 2, 1, 3)), rng)  # no tie: 2 < 3
    assert rng.state == state0
    with pytest.raises(ValueError, match="rng"):
        decide(rule, offered((1, 2, 1, 3)))
    picks = set()
    rng2 = SplitMix64(2)
    for _ in range(50):
        picks.add(decide(rule, offered((2, 3, 3, 2)), rng2).single)
    assert picks == {(1, 2), (3, 4)}


def test_truncate_profile_examples():
    assert truncate_profile((1, 3, 5, 2), 2) == (1, 3, 3, 2)
    assert truncate_profile((1, 1, 1, 1), 7) == (1, 1, 1, 1)
    assert truncate_profile((10**6, 1, 2, 2), 1) == (2, 1, 2, 2)
    with pytest.raises(ValueError):
        truncate_profile((1, 2), 0)


def _bf_table():
    # explicit decision table replicating the B=1 singleton-pair rule
    table = []
    for prof in itertools.product((1, 2), repeat=4):
        table.append(0 if prof[0] == 1 and prof[1] == 1 else 1)
    return make_rule("bounded_size_table", ell=4, B=1, table=table)


def test_bounded_size_table_matches_reference_rule():
    tab = _bf_table()
    bf = make_rule("bohman_frieze")
    rng = SplitMix64(3)
    for _ in range(300):
        sizes = tuple(1 + rng.randint(9) for _ in range(4))
        assert single_edge(tab, sizes) == single_edge(bf, sizes)


def test_bounded_size_opacity():
    tab = _bf_table()
    rng = SplitMix64(9)
    for _ in range(300):
        sizes = tuple(1 + rng.randint(40) for _ in range(4))
        trunc = truncate_profile(sizes, tab.B)
        assert single_edge(tab, sizes) == single_edge(tab, trunc)


def test_table_json_round_trip(tmp_path):
    tab = _bf_table()
    path = tmp_path / "bf_table.json"
    save_table_json(tab, path)
    loaded = load_table_json(path)
    assert loaded == tab
    # incomplete tables rejected at load
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    first_key = next(iter(payload["table"]))
    del payload["table"][first_key]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ValueError, match="incomplete"):
        load_table_json(bad)
    payload["table"][first_key] = 5  # pair index out of range
    bad.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(ValueError, match="pair index"):
        load_table_json(bad)


def test_rule_spec_validation():
    with pytest.raises(ValueError):
        RuleSpec("product", 5, r=2)
    with pytest.raises(ValueError):
        RuleSpec("nope", 4, r=2)
    with pytest.raises(ValueError):
        RuleSpec("bounded_size_table", 4, r=2, B=1, table=(0, 1))
    with pytest.raises(ValueError):
        make_rule("product", tie_break="sometimes")


def test_classify_examples():
    prod = classify(make_rule("product"))
    assert prod.is_achlioptas and prod.is_merging
    assert not prod.is_bounded_size and not prod.is_nice
    bf = classify(make_rule("bohman_frieze"))
    assert bf.is_achlioptas and bf.is_merging and bf.is_bounded_size and bf.is_nice
    forced = classify(make_rule("forced_only_smallest", ell=3))
    assert not forced.is_merging
    dc = classify(make_rule("dcdgm"))
    assert not dc.is_achlioptas and dc.is_merging and dc.is_nice
    assert not dc.is_bounded_size
    er = classify(make_rule("erdos_renyi"))
    assert er.is_achlioptas and er.is_merging and er.is_bounded_size and er.is_nice
