"""Single-run and ensemble execution of ell-vertex processes.

A run draws i.i.d. vertex tuples, asks the rule for the edge set, applies
the merges, and records observables whenever the step count crosses the
time grid t = m/n.  The hot loop is compiled (see _kernels); a pure-Python
reference path with identical rng consumption exists for cross-checking
and replays bit for bit against the compiled path.

Determinism contract: (config, seed) -> trajectory is a pure function.
Ensembles derive per-run seeds with rng.derive_seed and never let results
depend on scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as _k
from .forest import ForestState
from .rng import PRNG_ID, SEED_DERIVATION, MASK64, SplitMix64, derive_seed
from .rules import (OfferedTuple, RuleDecision, RuleSpec, decide,
                    offered_from_roots)

SAMPLINGS = ("iid_uniform", "distinct_vertices", "distinct_new_pairs")
_SAMPLING_CODES = {name: i for i, name in enumerate(SAMPLINGS)}

DEFAULT_RECORD_KS = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 100)


class EngineError(RuntimeError):
    """Structured failure of a run; no partial trajectory escapes."""


@dataclass(frozen=True)
class RunConfig:
    n: int
    rule: RuleSpec
    seed: int
    t_max: float
    grid_dt: float = 0.01
    sampling: str = "iid_uniform"
    record_ks: tuple[int, ...] = DEFAULT_RECORD_KS
    bins_B: int = 2
    surplus_K: int = 100

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not self.grid_dt > 0:
            raise ValueError("grid_dt must be positive")
        if self.sampling not in SAMPLINGS:
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.sampling != "iid_uniform" and self.n < self.rule.ell:
            raise ValueError("distinct sampling needs n >= ell")
        if self.sampling == "distinct_new_pairs" and self.rule.ell % 2 != 0:
            raise ValueError("distinct_new_pairs needs even ell")
        ks = tuple(self.record_ks)
        if not ks or list(ks) != sorted(set(ks)) or ks[0] < 1:
            raise ValueError("record_ks must be sorted unique ints >= 1")
        if self.bins_B < 2:
            raise ValueError("bins_B must be >= 2")
        if self.surplus_K < 1:
            raise ValueError("surplus_K must be >= 1")

    @property
    def steps(self) -> int:
        return int(math.floor(self.t_max * self.n + 1e-9))

    def grid_steps(self) -> np.ndarray:
        """Step indices floor(i * grid_dt * n) for grid times <= t_max."""
        imax = int(math.floor(self.t_max / self.grid_dt + 1e-9))
        ms = np.floor(np.arange(imax + 1) * self.grid_dt * self.n + 1e-9).astype(np.int64)
        ms = np.unique(ms)
        return ms[ms <= self.steps]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rule"] = dataclasses.asdict(self.rule)
        return d


@dataclass
class StepReport:
    offered: OfferedTuple
    decision: RuleDecision
    merges_applied: int


@dataclass
class TrajectoryRow:
    m: int
    t: float
    l1: int
    l2: int
    ltop: int
    comp_count: int
    edges: int
    n_le: dict[int, int]
    m_k_b: dict[int, int]
    sigma: tuple[int, ...]
    surplus: int
    chi: int


def _breakpoints(config: RunConfig) -> tuple[np.ndarray, dict[int, int]]:
    need = set()
    for k in config.record_ks:
        need.add(k)
        need.add(k - 1)
        need.add(config.bins_B * k - 1)
    need.add(config.surplus_K - 1)
    bp = np.array(sorted(need), dtype=np.int64)
    return bp, {int(v): i for i, v in enumerate(bp)}


class Trajectory:
    """Recorded observables of one run, column-oriented."""

    def __init__(self, config: RunConfig, m, l1, l2, ltop, comp_count, edges,
                 n_le, m_k_b, sigma, surplus, chi, final: dict):
        self.config = config
        self.m = m
        self.t = m / float(config.n)
        self.l1 = l1
        self.l2 = l2
        self.ltop = ltop
        self.comp_count = comp_count
        self.edges = edges
        self.n_le = n_le      # shape (rows, len(record_ks))
        self.m_k_b = m_k_b    # shape (rows, len(record_ks))
        self.sigma = sigma    # shape (rows, nbins)
        self.surplus = surplus
        self.chi = chi
        self.final = final

    def __len__(self) -> int:
        return len(self.m)

    @property
    def n(self) -> int:
        return self.config.n

    def n_le_col(self, k: int) -> np.ndarray:
        ks = self.config.record_ks
        if k not in ks:
            raise KeyError(f"k={k} not recorded (record_ks={ks})")
        return self.n_le[:, ks.index(k)]

    def n_k_col(self, k: int) -> np.ndarray:
        """N_k per row, derived as N_{<=k} - N_{<=k-1}."""
        if k == 1:
            return self.n_le_col(1)
        return self.n_le_col(k) - self.n_le_col(k - 1)

    def n_ge_col(self, k: int) -> np.ndarray:
        if k == 1:
            return np.full(len(self.m), self.n, dtype=np.int64)
        return self.n - self.n_le_col(k - 1)

    def rows(self):
        ks = self.config.record_ks
        for i in range(len(self.m)):
            yield TrajectoryRow(
                m=int(self.m[i]), t=float(self.t[i]), l1=int(self.l1[i]),
                l2=int(self.l2[i]), ltop=int(self.ltop[i]),
                comp_count=int(self.comp_count[i]), edges=int(self.edges[i]),
                n_le={k: int(self.n_le[i, j]) for j, k in enumerate(ks)},
                m_k_b={k: int(self.m_k_b[i, j]) for j, k in enumerate(ks)},
                sigma=tuple(int(x) for x in self.sigma[i]),
                surplus=int(self.surplus[i]), chi=int(self.chi[i]),
            )

    def header(self) -> list[str]:
        ks = self.config.record_ks
        cols = ["m", "t", "l1", "l2", "ltop", "comp_count", "edges"]
        cols += [f"n_le_{k}" for k in ks]
        cols += [f"m_{k}_{self.config.bins_B}" for k in ks]
        cols += [f"sigma_{j}" for j in range(self.sigma.shape[1])]
        cols += ["surplus", "chi"]
        return cols

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(self.header()) + "\n")
            for i in range(len(self.m)):
                parts = [str(int(self.m[i])), format(float(self.t[i]), ".9g"),
                         str(int(self.l1[i])), str(int(self.l2[i])),
                         str(int(self.ltop[i])), str(int(self.comp_count[i])),
                         str(int(self.edges[i]))]
                parts += [str(int(x)) for x in self.n_le[i]]
                parts += [str(int(x)) for x in self.m_k_b[i]]
                parts += [str(int(x)) for x in self.sigma[i]]
                parts += [str(int(self.surplus[i])), str(int(self.chi[i]))]
                fh.write(",".join(parts) + "\n")

    @classmethod
    def from_csv(cls, path, config: RunConfig | None = None) -> "Trajectory":
        """Load a trajectory CSV (metadata sidecar supplies the config when
        present; otherwise a minimal config is reconstructed)."""
        path = Path(path)
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=np.float64)
        data = np.atleast_1d(data)
        names = list(data.dtype.names)
        if config is None:
            meta_path = Path(str(path) + ".meta.json")
            if meta_path.exists():
                with open(meta_path, encoding="utf-8") as fh:
                    meta = json.load(fh)
                config = config_from_dict(meta["config"])
        ks = tuple(int(c[5:]) for c in names if c.startswith("n_le_"))
        bcols = [c for c in names if c.startswith("m_") and not c.startswith("m_le")
                 and c != "m"]
        nbins = sum(1 for c in names if c.startswith("sigma_"))
        if config is None:
            bins_B = int(bcols[0].rsplit("_", 1)[1]) if bcols else 2
            m0 = data["m"][0]
            if m0 != 0:
                raise ValueError("cannot infer n: first row is not m=0 "
                                 "and no metadata sidecar found")
            n = int(data["comp_count"][0])
            t_max = max(float(data["t"][-1]), 1e-9)
            config = RunConfig(n=n, rule=RuleSpec("erdos_renyi", 2, r=1),
                               seed=0, t_max=t_max, grid_dt=t_max or 1.0,
                               record_ks=ks or (1,), bins_B=bins_B)
        geti = lambda c: data[c].astype(np.int64)
        n_le = np.stack([geti(f"n_le_{k}") for k in ks], axis=1) if ks else \
            np.zeros((len(data), 0), np.int64)
        m_k_b = np.stack([geti(c) for c in bcols], axis=1) if bcols else \
            np.zeros((len(data), 0), np.int64)
        sigma = np.stack([geti(f"sigma_{j}") for j in range(nbins)], axis=1) if nbins \
            else np.zeros((len(data), 0), np.int64)
        return cls(config, geti("m"), geti("l1"), geti("l2"), geti("ltop"),
                   geti("comp_count"), geti("edges"), n_le, m_k_b, sigma,
                   geti("surplus"), geti("chi"),
                   final={})


def config_from_dict(d: dict) -> RunConfig:
    rd = dict(d["rule"])
    if rd.get("table") is not None:
        rd["table"] = tuple(rd["table"])
    rule = RuleSpec(**rd)
    return RunConfig(n=d["n"], rule=rule, seed=d["seed"], t_max=d["t_max"],
                     grid_dt=d["grid_dt"], sampling=d["sampling"],
                     record_ks=tuple(d["record_ks"]), bins_B=d["bins_B"],
                     surplus_K=d["surplus_K"])


def sample_tuple(rng: SplitMix64, n: int, sampling: str,
                 state: ForestState | None = None, ell: int = 2) -> tuple[int, ...]:
    """Draw one offered tuple of ell vertices (reference implementation).

    iid_uniform: independent uniform draws, duplicates possible.
    distinct_vertices: uniform over ell-subsets in random order.
    distinct_new_pairs: ell/2 pairs of distinct vertices, each redrawn
    while both endpoints share a component (capped, then any distinct
    pair is accepted); needs the forest state.
    """
    if sampling == "iid_uniform":
        return tuple(rng.randint(n) for _ in range(ell))
    if n < ell:
        raise ValueError("distinct sampling needs n >= ell")
    if sampling == "distinct_vertices":
        out: list[int] = []
        for _ in range(ell):
            while True:
                x = rng.randint(n)
                if x not in out:
                    out.append(x)
                    break
        return tuple(out)
    if sampling == "distinct_new_pairs":
        if state is None:
            raise ValueError("distinct_new_pairs requires the forest state")
        if ell % 2 != 0:
            raise ValueError("distinct_new_pairs needs even ell")
        out = []
        for _ in range(ell // 2):
            attempts = 0
            while True:
                a = rng.randint(n)
                b = rng.randint(n)
                if a == b:
                    continue
                if attempts >= _k._PAIR_ATTEMPT_CAP or state.find(a) != state.find(b):
                    out.extend((a, b))
                    break
                attempts += 1
        return tuple(out)
    raise ValueError(f"unknown sampling {sampling!r}")


def step(state: ForestState, rule: RuleSpec, rng: SplitMix64,
         sampling: str = "iid_uniform", m: int = 0) -> StepReport:
    """Apply one process step to `state` (reference implementation)."""
    vs = sample_tuple(rng, state.n, sampling, state=state, ell=rule.ell)
    roots = [state.find(v) for v in vs]
    sizes = [int(state.size[r]) for r in roots]
    offered = offered_from_roots(m, vs, sizes, roots)
    decision = decide(rule, offered, rng)
    merges = 0
    for a, b in sorted(decision.edges):
        out = state.merge(vs[a - 1], vs[b - 1])
        merges += int(out.merged)
    return StepReport(offered, decision, merges)


def _assemble(config: RunConfig, row_ms, out, bp_index, edges_final,
              fs: ForestState) -> Trajectory:
    ks = config.record_ks
    cums = out["cums"]
    n_le = np.stack([cums[:, bp_index[k]] for k in ks], axis=1) if ks else \
        np.zeros((len(row_ms), 0), np.int64)
    m_k_b = np.stack(
        [cums[:, bp_index[config.bins_B * k - 1]] - cums[:, bp_index[k - 1]]
         for k in ks], axis=1) if ks else np.zeros((len(row_ms), 0), np.int64)
    n_ge_K = config.n - cums[:, bp_index[config.surplus_K - 1]]
    surplus = n_ge_K - out["l1"]
    final = {"comp_count": fs.comp_count, "l1": fs.l1, "l2": fs.l2,
             "edges_accepted": int(edges_final), "steps": config.steps}
    return Trajectory(config, row_ms.copy(), out["l1"], out["l2"], out["ltop"],
                      out["comp"], out["edges"], n_le, m_k_b, out["sigma"],
                      surplus, out["chi"], final)


def _alloc_rows(config: RunConfig, nrows: int, nbp: int) -> dict:
    nbins = int(config.n).bit_length()
    return {
        "l1": np.zeros(nrows, np.int64), "l2": np.zeros(nrows, np.int64),
        "ltop": np.zeros(nrows, np.int64), "comp": np.zeros(nrows, np.int64),
        "edges": np.zeros(nrows, np.int64), "chi": np.zeros(nrows, np.int64),
        "sigma": np.zeros((nrows, nbins), np.int64),
        "cums": np.zeros((nrows, nbp), np.int64),
    }


def run(config: RunConfig, thresholds=None, reference: bool = False):
    """Execute one run; returns a Trajectory (and crossing steps if
    `thresholds` is given: first step with l1 >= each threshold, or None).

    reference=True drives the same state through the pure-Python path;
    output is bit-identical to the compiled path.
    """
    row_ms = config.grid_steps()
    bp, bp_index = _breakpoints(config)
    out = _alloc_rows(config, len(row_ms), len(bp))
    thr_orig = np.asarray(list(thresholds) if thresholds else [], dtype=np.int64)
    sort_idx = np.argsort(thr_orig, kind="stable")
    thr = thr_orig[sort_idx]
    cross = np.full(len(thr), -1, dtype=np.int64)
    fs = ForestState(config.n)
    st = np.array([config.seed & MASK64], dtype=np.uint64)
    try:
        if reference:
            edges = _reference_loop(config, fs, row_ms, bp, out, thr, cross)
        else:
            edges = _k._run_loop(
                fs.parent, fs.size, fs.hist, fs._agg, st,
                config.n, config.steps, 0,
                config.rule.code, config.rule.ell, config.rule.r or 1,
                (config.rule.B or 0) + 1,
                config.rule.tie_break == "random", config.rule.table_array(),
                _SAMPLING_CODES[config.sampling],
                row_ms, bp, max(config.rule.ell - 1, 1),
                thr,
                out["l1"], out["l2"], out["ltop"], out["comp"], out["edges"],
                out["chi"], out["sigma"], out["cums"], cross, 0)
    except MemoryError as exc:
        raise EngineError(f"run failed (resource exhaustion) for n={config.n}: {exc}") from exc
    traj = _assemble(config, row_ms, out, bp_index, edges, fs)
    if thresholds is None:
        return traj
    remap: list[int | None] = [None] * len(thr_orig)
    for j, i in enumerate(sort_idx):
        remap[int(i)] = int(cross[j]) if cross[j] >= 0 else None
    return traj, remap


def _reference_loop(config: RunConfig, fs: ForestState, row_ms, bp, out,
                    thr, cross) -> int:
    rng = SplitMix64(config.seed)
    ell = config.rule.ell
    edges = 0
    rowi = 0
    thri = 0
    ell_top = max(ell - 1, 1)

    def record(i):
        l2, lt, chi = _k._scan_row(fs.hist, fs.l1, ell_top, bp,
                                   out["cums"][i], out["sigma"][i])
        out["l1"][i] = fs.l1
        out["l2"][i] = l2
        out["ltop"][i] = lt
        out["comp"][i] = fs.comp_count
        out["edges"][i] = edges
        out["chi"][i] = chi

    while thri < len(thr) and fs.l1 >= thr[thri]:
        cross[thri] = 0
        thri += 1
    if rowi < len(row_ms) and row_ms[rowi] == 0:
        record(rowi)
        rowi += 1
    for m in range(1, config.steps + 1):
        report = step(fs, config.rule, rng, config.sampling, m=m)
        edges += len(report.decision.edges)
        while thri < len(thr) and fs.l1 >= thr[thri]:
            cross[thri] = m
            thri += 1
        if rowi < len(row_ms) and row_ms[rowi] == m:
            record(rowi)
            rowi += 1
    return edges


class LiveRun:
    """Incrementally advanced run; lets experiments stop early.

    The forest, rng stream and step counter persist across advance()
    calls, so chunked execution replays identically to a single run.
    """

    def __init__(self, n: int, rule: RuleSpec, seed: int,
                 sampling: str = "iid_uniform", thresholds=None):
        self.n = n
        self.rule = rule
        self.sampling = sampling
        self.forest = ForestState(n)
        self.st = np.array([seed & MASK64], dtype=np.uint64)
        self.m = 0
        self.edges = 0
        self.thresholds = np.asarray(sorted(thresholds or []), dtype=np.int64)
        self.crossings = np.full(len(self.thresholds), -1, dtype=np.int64)
        self._empty_rows = np.empty(0, np.int64)
        self._empty_bp = np.empty(0, np.int64)
        self._dummy = _alloc_rows(
            RunConfig(n=n, rule=rule, seed=0, t_max=1.0), 0, 0)

    def advance(self, steps: int) -> None:
        fs = self.forest
        self.edges = _k._run_loop(
            fs.parent, fs.size, fs.hist, fs._agg, self.st,
            self.n, steps, self.m,
            self.rule.code, self.rule.ell, self.rule.r or 1,
            (self.rule.B or 0) + 1,
            self.rule.tie_break == "random", self.rule.table_array(),
            _SAMPLING_CODES[self.sampling],
            self._empty_rows, self._empty_bp, max(self.rule.ell - 1, 1),
            self.thresholds,
            self._dummy["l1"], self._dummy["l2"], self._dummy["ltop"],
            self._dummy["comp"], self._dummy["edges"], self._dummy["chi"],
            self._dummy["sigma"], self._dummy["cums"], self.crossings,
            self.edges)
        self.m += steps

    def crossing(self, i: int = 0):
        c = int(self.crossings[i])
        return c if c >= 0 else None


def _ensemble_worker(args):
    cfg_dict, thresholds = args
    cfg = config_from_dict(cfg_dict)
    return run(cfg, thresholds=thresholds)


def ensemble(config: RunConfig, runs: int, seed_policy: str = "split",
             jobs: int = 1, thresholds=None):
    """Run `runs` independent replicas with derived seeds.

    seed_policy "split" (the only policy) gives run i the seed
    derive_seed(config.seed, i); aggregation follows run index order, so
    results are independent of scheduling and of `jobs`.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if seed_policy != "split":
        raise ValueError(f"unknown seed_policy {seed_policy!r}")
    configs = [dataclasses.replace(config, seed=derive_seed(config.seed, i))
               for i in range(runs)]
    if jobs > 1 and runs > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, runs)) as ex:
            results = list(ex.map(_ensemble_worker,
                                  [(c.to_dict(), thresholds) for c in configs]))
    else:
        results = [run(c, thresholds=thresholds) for c in configs]
    if thresholds is None:
        return EnsembleResult(config, configs, list(results), None)
    trajs = [r[0] for r in results]
    crossings = [r[1] for r in results]
    return EnsembleResult(config, configs, trajs, crossings)


class EnsembleResult:
    """Trajectories of an ensemble plus exact per-grid-time statistics."""

    def __init__(self, master_config, run_configs, trajectories, crossings):
        self.master_config = master_config
        self.run_configs = run_configs
        self.trajectories = trajectories
        self.crossings = crossings
        self.m = trajectories[0].m
        self.t = trajectories[0].t

    @property
    def runs(self) -> int:
        return len(self.trajectories)

    def column(self, name: str, k: int | None = None) -> np.ndarray:
        """Stacked per-run column, shape (runs, rows)."""
        cols = []
        for tr in self.trajectories:
            if name == "n_le":
                cols.append(tr.n_le_col(k))
            elif name == "n_k":
                cols.append(tr.n_k_col(k))
            elif name == "n_ge":
                cols.append(tr.n_ge_col(k))
            elif name == "sigma":
                cols.append(tr.sigma[:, k])
            else:
                cols.append(getattr(tr, name))
        return np.stack(cols, axis=0)

    def stats(self, name: str, k: int | None = None):
        """(mean, std, min, max) arrays over runs for one observable."""
        col = self.column(name, k).astype(np.float64)
        return (col.mean(axis=0), col.std(axis=0),
                col.min(axis=0), col.max(axis=0))

    def summary(self) -> dict:
        out: dict = {"runs": self.runs, "m": self.m.tolist(), "t": self.t.tolist()}
        for name in ("l1", "l2", "ltop", "comp_count", "surplus"):
            mean, std, lo, hi = self.stats(name)
            out[name] = {"mean": mean.tolist(), "std": std.tolist(),
                         "min": lo.tolist(), "max": hi.tolist()}
        return out


def save_run(traj: Trajectory, path, wall_time_s: float | None = None,
             extra: dict | None = None) -> Path:
    """Write the trajectory CSV plus its replay metadata sidecar."""
    path = Path(path)
    traj.to_csv(path)
    meta = {
        "schema": "achlab-trajectory-v1",
        "config": traj.config.to_dict(),
        "seed": traj.config.seed,
        "prng": PRNG_ID,
        "seed_derivation": SEED_DERIVATION,
        "final": traj.final,
        "timing": {"wall_time_s": wall_time_s,
                   "written_unix": time.time()},
    }
    if extra:
        meta.update(extra)
    meta_path = Path(str(path) + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta_path
