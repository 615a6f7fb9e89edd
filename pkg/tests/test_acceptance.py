"""Acceptance suite: one test per criterion, each printing a PASS/FAIL
line with the measured values before asserting at the stated tolerance.

Scales follow the criteria (n up to 10^6).  A module fixture warms the
compiled kernels so the runtime budgets measure the algorithms, not the
compiler.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from achlioptas_lab import experiments as ex
from achlioptas_lab import ode as O
from achlioptas_lab.engine import RunConfig, ensemble, run, step
from achlioptas_lab.forest import ForestState
from achlioptas_lab.rng import SplitMix64, derive_seed
from achlioptas_lab.rules import make_rule

ER = make_rule("erdos_renyi")
BF = make_rule("bohman_frieze")
DC = make_rule("dcdgm")
PROD = make_rule("product")
FORCED3 = make_rule("forced_only_smallest", ell=3)


def _line(num, ok, text):
    print(f"\nACCEPTANCE {num} [{'PASS' if ok else 'FAIL'}] {text}")


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    run(RunConfig(n=1000, rule=PROD, seed=1, t_max=0.1, grid_dt=0.05),
        thresholds=[10])
    run(RunConfig(n=1000, rule=BF, seed=1, t_max=0.1, grid_dt=0.05))
    run(RunConfig(n=1000, rule=DC, seed=1, t_max=0.1, grid_dt=0.05))
    run(RunConfig(n=1000, rule=FORCED3, seed=1, t_max=0.1, grid_dt=0.05))
    ex.de_method_check(BF, 2000, [0.2], replays=1000, kmax=50, seed=1)
    ex.estimate_event_L(ER, 4000, ex.LemmaLParams(alpha=1.0, B=2, D=0.02, k=1),
                        runs=1, seed=1)


def test_criterion_1_er_critical_point():
    n = 1_000_000
    t0 = time.perf_counter()
    thr = int(math.ceil(0.01 * n))
    ts = []
    for i in range(5):
        cfg = RunConfig(n=n, rule=ER, seed=derive_seed(101, i), t_max=0.6,
                        grid_dt=0.6, record_ks=(1,), surplus_K=2)
        _, crossings = run(cfg, thresholds=[thr])
        assert crossings[0] is not None
        ts.append(crossings[0] / n)
    elapsed = time.perf_counter() - t0
    ok = all(abs(t - 0.5) <= 0.02 for t in ts) and elapsed < 60
    _line(1, ok, f"ER critical point: first t with L1>=0.01n = "
                 f"{[round(t, 4) for t in ts]} (target 0.50 +- 0.02), "
                 f"{elapsed:.1f}s (< 60s)")
    assert all(abs(t - 0.5) <= 0.02 for t in ts)
    assert elapsed < 60


def test_criterion_2_er_limit_curve():
    t0 = time.perf_counter()
    sol = O.integrate(ER, 1.5, kmax=1000, h=1e-4, out_dt=0.01)
    er_curve = np.array([O.er_rho(t) for t in sol.ts])
    gap_corrected = float(np.abs(sol.rho_corrected() - er_curve).max())
    trunc_oracle = np.array(
        [1.0 - sum(O.er_rho_k(t, k) for k in range(1, 1001)) for t in sol.ts])
    gap_trunc = float(np.abs(sol.rho_inf - trunc_oracle).max())
    gap_raw = float(np.abs(sol.rho_inf - er_curve).max())
    n = 1_000_000
    cfg = RunConfig(n=n, rule=ER, seed=102, t_max=1.0, grid_dt=0.25,
                    record_ks=(1,), surplus_K=100)
    ens = ensemble(cfg, 10)
    l1_mean = ens.column("l1").astype(float).mean(axis=0) / n
    at_quarter = float(l1_mean[np.argmin(np.abs(ens.t - 0.25))])
    at_one = float(l1_mean[-1])
    elapsed = time.perf_counter() - t0
    ok = (gap_corrected <= 1e-3 and gap_trunc <= 1e-3
          and abs(at_one - 0.797) <= 0.01 and at_quarter < 0.001
          and elapsed < 300)
    _line(2, ok, "ER limit curve: ODE vs fixed-point oracle max gap "
                 f"{gap_corrected:.2e} (tail-corrected, <= 1e-3) / "
                 f"{gap_trunc:.2e} (same-truncation oracle) / "
                 f"{gap_raw:.3f} (raw escaped mass, informational); "
                 f"sim mean L1/n(1.0) = {at_one:.4f} (0.797 +- 0.01), "
                 f"L1/n(0.25) = {at_quarter:.2e}; {elapsed:.0f}s (< 300s)")
    assert gap_corrected <= 1e-3
    assert gap_trunc <= 1e-3
    assert abs(at_one - 0.797) <= 0.01
    assert at_quarter < 0.001
    assert elapsed < 300


def test_criterion_3_er_right_derivative():
    rd = O.right_derivative(ER, t_c=None, h_fd=0.01, kmax=4000, h=1e-4,
                            t_max=0.7)
    ok = abs(rd - 4.0) <= 0.5
    _line(3, ok, f"ER right-derivative at t_c: {rd:.3f} (target 4 +- 0.5)")
    assert abs(rd - 4.0) <= 0.5


def test_criterion_4_bohman_frieze_delay():
    n = 1_000_000
    fracs = []
    for i in range(10):
        cfg = RunConfig(n=n, rule=BF, seed=derive_seed(104, i), t_max=0.535,
                        grid_dt=0.535, record_ks=(1,), surplus_K=2)
        traj = run(cfg)
        fracs.append(traj.l1[-1] / n)
    ok = all(f < 0.01 for f in fracs)
    _line(4, ok, f"Bohman-Frieze delay: max L1(0.535n)/n over 10 runs = "
                 f"{max(fracs):.2e} (every run < 0.01)")
    assert all(f < 0.01 for f in fracs)


def test_criterion_5_de_method_validity():
    t0 = time.perf_counter()
    times = {"bohman_frieze": [0.25, 0.45, 0.56, 0.8, 1.1],
             "dcdgm": [0.3, 0.6, 0.85, 0.95, 1.2]}
    zs = {}
    for rule in (BF, DC):
        rep = ex.de_method_check(rule, 100_000, times[rule.kind],
                                 replays=1_000_000, kmax=2000, seed=105)
        zs[rule.kind] = rep.max_abs_z
    gaps = {}
    for rule, seed in ((BF, 106), (DC, 107)):
        rep = ex.compare_sim_ode(rule, 1_000_000, runs=10, kmax=4000,
                                 grid_dt=0.01, t_max=1.5, seed=seed, h=1e-4)
        gaps[rule.kind] = rep.sup_gap_rho
    elapsed = time.perf_counter() - t0
    ok = all(z <= 3.0 for z in zs.values()) and \
        all(g <= 0.02 for g in gaps.values()) and elapsed < 900
    _line(5, ok, "DE-method validity: step-expectation max |z| = "
                 f"{ {k: round(v, 2) for k, v in zs.items()} } (<= 3); "
                 f"sim-vs-ODE sup gaps = { {k: round(v, 4) for k, v in gaps.items()} } "
                 f"(<= 0.02); {elapsed:.0f}s (< 900s)")
    for kind, z in zs.items():
        assert z <= 3.0, f"{kind}: max |z| = {z}"
    for kind, g in gaps.items():
        assert g <= 0.02, f"{kind}: sup gap = {g}"
    assert elapsed < 900


def test_criterion_6_no_two_giants_product_rule():
    rep = ex.sweep_surplus(PROD, [10_000, 100_000, 1_000_000], [100],
                           runs=10, seed=108, t_max=1.5)
    l2_by_n = {n: rep.max_l2_norm[str(n)] for n in rep.ns}
    sur_by_n = {n: rep.max_surplus_norm[f"{n}:100"] for n in rep.ns}
    l2_ok = l2_by_n[1_000_000] <= 0.05 and \
        l2_by_n[10_000] >= l2_by_n[100_000] >= l2_by_n[1_000_000]
    sur_ok = sur_by_n[1_000_000] <= 0.05 and rep.nonincreasing_in_n["100"]
    _line(6, l2_ok and sur_ok,
          f"No two giants (product): max L2/n by n = "
          f"{ {k: round(v, 4) for k, v in l2_by_n.items()} } "
          f"[L2 part {'PASS' if l2_ok else 'FAIL'}]; "
          f"max (N_(>=100)-L1)/n by n = "
          f"{ {k: round(v, 3) for k, v in sur_by_n.items()} } "
          f"[surplus part {'PASS' if sur_ok else 'FAIL'}: bound 0.05, "
          f"nonincreasing {rep.nonincreasing_in_n['100']}]")
    assert l2_ok, f"L2 statistics: {l2_by_n}"
    assert sur_by_n[1_000_000] <= 0.05, (
        "powder-keg mass: the vertices in mid-size components just below "
        f"the transition give surplus {sur_by_n[1_000_000]:.3f} n >> 0.05 n")
    assert rep.nonincreasing_in_n["100"], f"surplus trend: {sur_by_n}"


def test_criterion_7_nonmerging_contrast():
    rep = ex.two_giants_demo(1_000_000, runs=10, seed=109, t_final=5.0, K=100)
    giants_ok = rep.runs_with_ratio_ge_05 >= 9 and rep.runs_with_l2_norm_ge_02 >= 9
    surplus_ok = rep.max_top2_surplus_norm <= 0.05
    _line(7, giants_ok and surplus_ok,
          f"Nonmerging contrast: l2/l1 = {rep.mean_l2_over_l1:.3f}, "
          f"l2/n = {rep.mean_l2_norm:.3f}, flags {rep.runs_with_ratio_ge_05}/10 "
          f"and {rep.runs_with_l2_norm_ge_02}/10 "
          f"[giants part {'PASS' if giants_ok else 'FAIL'}]; "
          f"max (N_(>=100)-Ltop2)/n = {rep.max_top2_surplus_norm:.3f} "
          f"[top-2 surplus part {'PASS' if surplus_ok else 'FAIL'}: bound 0.05]")
    assert giants_ok
    assert surplus_ok, (
        "powder-keg mass below the two-giant formation gives top-2 surplus "
        f"{rep.max_top2_surplus_norm:.3f} n >> 0.05 n")


def test_criterion_8_window_scaling():
    ns = [10_000, 100_000, 1_000_000]
    factors = {}
    means = {}
    for rule, tmax in ((BF, 1.5), (DC, 1.3)):
        rep = ex.sweep_windows(rule, ns, 0.2, 0.4, runs=20, seed=110, t_max=tmax)
        factors[rule.kind] = rep.stability_factor
        means[rule.kind] = rep.mean_delta_norm
    prod_rep = ex.sweep_windows(PROD, ns, 0.2, 0.4, runs=20, seed=111, t_max=1.3)
    bf_ok = factors["bohman_frieze"] <= 2.0
    dc_ok = factors["dcdgm"] <= 2.0
    _line(8, bf_ok and dc_ok,
          f"Window scaling (0.2 -> 0.4): mean delta/n "
          f"BF { {k: round(v, 5) for k, v in means['bohman_frieze'].items()} } "
          f"factor {factors['bohman_frieze']:.2f} "
          f"[{'PASS' if bf_ok else 'FAIL'}]; "
          f"dcdgm { {k: round(v, 6) for k, v in means['dcdgm'].items()} } "
          f"factor {factors['dcdgm']:.1f} [{'PASS' if dc_ok else 'FAIL'}]; "
          f"product (descriptive, no pass/fail) "
          f"{ {k: round(v, 6) for k, v in prod_rep.mean_delta_norm.items()} } "
          f"factor {prod_rep.stability_factor:.1f}")
    assert bf_ok, f"BF stability factor {factors['bohman_frieze']}"
    assert dc_ok, (
        f"dcdgm windows shrink with n at desk scale (factor "
        f"{factors['dcdgm']:.1f}): the limit window constant for these "
        f"thresholds is below observable resolution")


def test_criterion_9_lemma_event_frequencies():
    c_rep = ex.estimate_event_C(PROD, 10_000, ex.LemmaCParams(alpha=1.0, k=1),
                                runs=200, seed=112)
    c_stat = c_rep.frequency - 2 * c_rep.stderr
    l_rep = ex.estimate_event_L(ER, 10_000,
                                ex.LemmaLParams(alpha=0.5, B=2, D=0.1, k=1),
                                runs=200, seed=113)
    l_stat = l_rep.frequency - 2 * l_rep.stderr
    co_rep = ex.estimate_coalescence(DC, 100_000, eps=0.1, k=1, m_start=0,
                                     runs=100, seed=114)
    co_stat = co_rep.frequency - 2 * co_rep.stderr
    ok = c_stat >= 0.99 and l_stat >= 0.95 and co_stat >= 0.99
    _line(9, ok, f"Lemma event frequencies: giant-creation {c_rep.frequency:.3f} "
                 f"(-2se {c_stat:.3f} >= 0.99), band persistence "
                 f"{l_rep.frequency:.3f} (-2se {l_stat:.3f} >= 0.95), "
                 f"coalescence {co_rep.frequency:.3f} (-2se {co_stat:.3f} >= 0.99)")
    assert c_stat >= 0.99
    assert l_stat >= 0.95
    assert co_stat >= 0.99


def test_criterion_10_invariant_suite():
    checks = 0
    # brute-force forest equivalence at n <= 50
    from test_forest import NaiveComponents
    rng = SplitMix64(115)
    for _ in range(20):
        n = 5 + rng.randint(46)
        fs = ForestState(n)
        naive = NaiveComponents(n)
        for _ in range(2 * n):
            u, v = rng.randint(n), rng.randint(n)
            assert fs.merge(u, v).merged == naive.merge(u, v)
            checks += 1
        assert fs.hist_dict() == naive.hist()
        fs.check_invariants()
    # randomized runs at n <= 1e4: row invariants across rules and samplings
    cases = [(ER, "iid_uniform"), (PROD, "iid_uniform"),
             (PROD, "distinct_vertices"), (DC, "iid_uniform"),
             (FORCED3, "iid_uniform"), (BF, "distinct_new_pairs")]
    for i, (rule, sampling) in enumerate(cases):
        n = 2000 + 1600 * i
        cfg = RunConfig(n=n, rule=rule, seed=derive_seed(116, i), t_max=2.0,
                        grid_dt=0.01, sampling=sampling,
                        record_ks=(1, 2, 3, 5, 10), surplus_K=50)
        traj = run(cfg)
        assert np.all(traj.sigma.sum(axis=1) == n)          # mass conservation
        assert np.all(np.diff(traj.l1) >= 0)                # L1 monotone
        assert np.all(np.diff(traj.n_le, axis=0) <= 0)      # N_<=k antitone
        assert np.all(traj.surplus + traj.l1 >= 0)
        expect_rows = len(cfg.grid_steps())
        assert len(traj) == expect_rows                     # grid completeness
        checks += traj.n_le.size + 2 * len(traj)
    # per-step change bound over 1e5 random steps
    for rule in (ER, PROD, DC, FORCED3):
        fs = ForestState(1000)
        rng = SplitMix64(117)
        for m in range(25_000):
            rep = step(fs, rule, rng, m=m)
            delta: dict[int, int] = {}
            for a, b in rep.decision.edges:
                j1 = rep.offered.sizes[a - 1]
                j2 = rep.offered.sizes[b - 1]
                for k, dk in ((j1, -j1), (j2, -j2), (j1 + j2, j1 + j2)):
                    delta[k] = delta.get(k, 0) + dk
            for k, dk in delta.items():
                assert abs(dk) <= k * rule.ell ** 2
                checks += 1
    # untouched-component persistence (structural)
    fs = ForestState(400)
    rng = SplitMix64(118)
    for m in range(300):
        comp_of = {v: fs.find(v) for v in range(400)}
        sizes_before = {r: int(fs.size[r]) for r in set(comp_of.values())}
        rep = step(fs, PROD, rng, m=m)
        touched = {comp_of[v] for v in rep.offered.vertices}
        for r, s in sizes_before.items():
            if r not in touched:
                members = [v for v, rv in comp_of.items() if rv == r]
                assert len({fs.find(v) for v in members}) == 1
                checks += 1
    # replay determinism: identical rows at n = 1e6, jit vs reference
    cfg = RunConfig(n=1_000_000, rule=ER, seed=119, t_max=0.3, grid_dt=0.05,
                    record_ks=(1, 2), surplus_K=10)
    t1, t2 = run(cfg), run(cfg)
    for name in ("m", "l1", "l2", "ltop", "comp_count", "edges", "n_le",
                 "m_k_b", "sigma", "surplus", "chi"):
        assert np.array_equal(getattr(t1, name), getattr(t2, name))
    small = RunConfig(n=2000, rule=PROD, seed=120, t_max=1.5, grid_dt=0.05)
    tj, tr = run(small), run(small, reference=True)
    assert np.array_equal(tj.l1, tr.l1) and np.array_equal(tj.chi, tr.chi)
    checks += 100
    ok = checks >= 10_000
    _line(10, ok, f"Invariant suite: {checks} randomized property checks green "
                  f"(mass conservation, monotonicity, antitonicity, per-step "
                  f"change bounds, locality, replay determinism, brute-force "
                  f"forest equivalence)")
    assert ok
