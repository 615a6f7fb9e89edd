"""Coagulation ODE systems induced by size rules, plus classical closed
forms used as oracles.

For a rule whose decisions depend only on component sizes truncated at
B+1, the per-step expected change of N_k is a function of the truncated
size classes alone.  We exploit this: sample each of the ell positions'
classes from the class marginals, look the decision up per ordered class
profile, and disintegrate each selected endpoint class over exact sizes
with weights rho_j (vertex-mass measure).  Two-position collisions inside
one finite component are O(1/n) and dropped; everything above the
truncation Kmax, including any giant, is aggregated into the escaped
class, which absorbs joins but never re-enters finite sizes.  Mass is
conserved exactly: rho_inf := 1 - sum_k rho_k.

Units: one process step advances time by 1/n, so d(rho_k)/dt equals the
expected one-step change of N_k.  This is the contract the Monte Carlo
step-expectation oracle checks.

The min-selection rules (smaller of the first two components to the
smaller of the last two; join the two smallest offered) are not
bounded-size but admit the same construction through order statistics of
the vertex-mass measure; dedicated kernels cover exactly those rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product as _iproduct
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .rules import RuleSpec, OfferedTuple, classify, decide, effective_b

_NEG_CLAMP = 1e-12
_INSTABILITY = 1.0 + 1e-6
_FFT_THRESHOLD = 4096


@dataclass
class OdeState:
    """Truncated composition state: rho[k] is the vertex fraction in
    components of size k (index 0 unused), rho_inf the escaped mass."""

    t: float
    rho: np.ndarray
    rho_inf: float

    @property
    def kmax(self) -> int:
        return len(self.rho) - 1


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) + len(b) > _FFT_THRESHOLD:
        out = fftconvolve(a, b)
        np.maximum(out, 0.0, out)
        return out
    return np.convolve(a, b)


def er_rho(t: float) -> float:
    """Largest solution of rho = 1 - exp(-2 t rho); 0 for t <= 1/2.

    Bisection to 1e-12: the survival function of the classical process.
    """
    if t <= 0.5:
        return 0.0
    lo, hi = 1e-15, 1.0
    # -expm1 keeps full precision where the root is within roundoff of 0
    f = lambda x: -math.expm1(-2.0 * t * x) - x
    if f(lo) <= 0.0:
        return 0.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def er_rho_k(t: float, k: int) -> float:
    """Vertex fraction in size-k components of the classical process:
    k^(k-1) (2t)^(k-1) e^(-2kt) / k!."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 1.0 if k == 1 else 0.0
    ln = (k - 1) * math.log(2.0 * t * k) - 2.0 * k * t - math.lgamma(k + 1)
    return math.exp(ln)


class KernelTable:
    """Join kernel of a bounded-size rule at truncation Kmax.

    Holds the fixed profile -> selected-pair map; the class marginals and
    event weights are recomputed from (rho, rho_inf) at each evaluation.
    """

    def __init__(self, rule: RuleSpec, kmax: int):
        if not classify(rule).is_bounded_size:
            raise ValueError(f"{rule.kind} is not a bounded-size rule")
        self.rule = rule
        self.kmax = kmax
        self.effB = effective_b(rule)
        self.C = self.effB + 1
        if kmax < 2 * self.C:
            raise ValueError("kmax must be at least 2B+2")
        ell = rule.ell
        profiles = list(_iproduct(range(1, self.C + 1), repeat=ell))
        pa, pb, rest = [], [], []
        verts = tuple(range(ell))
        partition = tuple(range(ell))
        for prof in profiles:
            dec = decide(rule, OfferedTuple(0, verts, prof, partition))
            (a, b) = dec.single
            pa.append(prof[a - 1] - 1)
            pb.append(prof[b - 1] - 1)
            rest.append([prof[i] - 1 for i in range(ell) if i not in (a - 1, b - 1)])
        self._pa = np.array(pa, dtype=np.intp)
        self._pb = np.array(pb, dtype=np.intp)
        self._rest = np.array(rest, dtype=np.intp).reshape(len(profiles), ell - 2)
        # class of size k (0-based), k-indexed
        cls = np.minimum(np.arange(kmax + 1), self.C)
        cls[0] = 1
        self._cls = (cls - 1).astype(np.intp)

    def marginals(self, rho: np.ndarray, rho_inf: float) -> np.ndarray:
        """Class probabilities: exact sizes below C, aggregated tail plus
        escaped mass at C.  Sums to 1 by construction."""
        hat = np.empty(self.C)
        hat[:self.C - 1] = rho[1:self.C]
        hat[self.C - 1] = rho[self.C:].sum() + rho_inf
        return hat

    def q_matrix(self, hat: np.ndarray) -> np.ndarray:
        """Qp[c, d]: summed residual profile weight of events whose applied
        edge has ordered endpoint classes (c, d); the endpoints' own class
        probabilities are deliberately not included (they cancel against
        the size disintegration)."""
        if self._rest.shape[1]:
            w = hat[self._rest].prod(axis=1)
        else:
            w = np.ones(len(self._pa))
        qp = np.zeros((self.C, self.C))
        np.add.at(qp, (self._pa, self._pb), w)
        return qp

    def join_rate(self, rho: np.ndarray, rho_inf: float, j1: int, j2: int) -> float:
        """Probability per step that the applied edge joins a size-j1
        component to a distinct size-j2 component."""
        if j1 < 1 or j2 < 1 or j1 > self.kmax or j2 > self.kmax:
            raise ValueError("sizes must lie in 1..kmax")
        qp = self.q_matrix(self.marginals(rho, rho_inf))
        c1 = self._cls[j1]
        c2 = self._cls[j2]
        if j1 == j2:
            return float(qp[c1, c1] * rho[j1] * rho[j1])
        return float((qp[c1, c2] + qp[c2, c1]) * rho[j1] * rho[j2])

    def rhs(self, rho: np.ndarray, rho_inf: float, want_flux: bool = False):
        kmax = self.kmax
        C = self.C
        hat = self.marginals(rho, rho_inf)
        qp = self.q_matrix(hat)
        a_int = qp @ hat        # endpoint-1 intensity per class
        b_int = qp.T @ hat      # endpoint-2 intensity per class
        k_arr = np.arange(kmax + 1, dtype=np.float64)
        destr = k_arr * rho * (a_int[self._cls] + b_int[self._cls])
        destr[0] = 0.0
        created = np.zeros(kmax + 1)
        # exact-size classes with each other
        for c in range(1, C):
            for d in range(1, C):
                created[c + d] += qp[c - 1, d - 1] * rho[c] * rho[d]
        # exact-size classes against the aggregated tail
        tail = rho[C:]
        flux_over = 0.0
        for c in range(1, C):
            w = (qp[c - 1, C - 1] + qp[C - 1, c - 1]) * rho[c]
            if w != 0.0:
                created[c + C:] += w * tail[:kmax + 1 - c - C]
                if want_flux:
                    cut = tail[kmax + 1 - c - C:]
                    if cut.size:
                        sizes = np.arange(kmax + 1 - c, kmax + 1 - c + cut.size) + c
                        flux_over += w * float((sizes * cut).sum())
        # tail against tail: one real convolution
        qcc = qp[C - 1, C - 1]
        if qcc != 0.0 and tail.size:
            conv = _conv(tail, tail)
            hi = min(conv.size, kmax + 1 - 2 * C)
            if hi > 0:
                created[2 * C: 2 * C + hi] += qcc * conv[:hi]
            if want_flux and conv.size > hi:
                sizes = 2 * C + np.arange(hi, conv.size)
                flux_over += qcc * float((sizes * conv[hi:]).sum())
        drho = k_arr * created - destr
        if not want_flux:
            return drho
        esc = hat[C - 1] - tail.sum()
        mass_c = np.empty(C)
        mass_c[:C - 1] = np.arange(1, C) * rho[1:C]
        mass_c[C - 1] = float((np.arange(C, kmax + 1) * tail).sum())
        flux_esc = esc * float(((qp[:, C - 1] + qp[C - 1, :]) * mass_c).sum())
        return drho, flux_esc + flux_over


class MinPairKernel:
    """Kernel of the rule joining the smaller of the first two offered
    components to the smaller of the last two (two independent min-of-two
    draws from the vertex-mass measure)."""

    def __init__(self, rule: RuleSpec, kmax: int):
        if rule.kind != "dcdgm":
            raise ValueError("MinPairKernel models the dcdgm rule")
        self.rule = rule
        self.kmax = kmax

    def _u(self, rho: np.ndarray, rho_inf: float):
        kmax = self.kmax
        T = np.empty(kmax + 2)
        T[kmax + 1] = rho_inf
        T[1:kmax + 1] = np.cumsum(rho[1:][::-1])[::-1] + rho_inf
        u = np.zeros(kmax + 1)
        u[1:] = T[1:kmax + 1] ** 2 - T[2:kmax + 2] ** 2
        return u, T[kmax + 1] ** 2

    def join_rate(self, rho, rho_inf, j1, j2) -> float:
        u, _ = self._u(rho, rho_inf)
        if j1 == j2:
            return float(u[j1] * u[j1])
        return float(2.0 * u[j1] * u[j2])

    def rhs(self, rho: np.ndarray, rho_inf: float, want_flux: bool = False):
        kmax = self.kmax
        u, u_esc = self._u(rho, rho_inf)
        k_arr = np.arange(kmax + 1, dtype=np.float64)
        destr = 2.0 * k_arr * u
        conv = _conv(u[1:], u[1:])
        created = np.zeros(kmax + 1)
        hi = min(conv.size, kmax - 1)
        created[2: 2 + hi] = conv[:hi]
        drho = k_arr * created - destr
        if not want_flux:
            return drho
        flux_esc = 2.0 * float((k_arr * u).sum()) * u_esc
        flux_over = 0.0
        if conv.size > hi:
            sizes = 2 + np.arange(hi, conv.size)
            flux_over = float((sizes * conv[hi:]).sum())
        return drho, flux_esc + flux_over


class TwoSmallestKernel:
    """Kernel of the rule joining the two smallest of the ell offered
    components (joint law of the two lowest order statistics of ell
    draws from the vertex-mass measure)."""

    def __init__(self, rule: RuleSpec, kmax: int):
        if rule.kind != "join_two_smallest":
            raise ValueError("TwoSmallestKernel models join_two_smallest")
        self.rule = rule
        self.kmax = kmax
        idx = np.add.outer(np.arange(1, kmax + 1), np.arange(1, kmax + 1))
        self._sum_idx = idx.ravel()

    def _p2(self, rho: np.ndarray, rho_inf: float):
        kmax = self.kmax
        ell = self.rule.ell
        T = np.empty(kmax + 2)
        T[kmax + 1] = rho_inf
        T[1:kmax + 1] = np.cumsum(rho[1:][::-1])[::-1] + rho_inf
        mu = rho[1:]
        w = T[1:kmax + 1] ** (ell - 1) - T[2:kmax + 2] ** (ell - 1)
        p2 = ell * np.triu(np.outer(mu, w), k=1)
        diag = (T[1:kmax + 1] ** ell - T[2:kmax + 2] ** ell
                - ell * mu * T[2:kmax + 2] ** (ell - 1))
        np.fill_diagonal(p2, np.maximum(diag, 0.0))
        return p2, T

    def join_rate(self, rho, rho_inf, j1, j2) -> float:
        p2, _ = self._p2(rho, rho_inf)
        a, b = min(j1, j2), max(j1, j2)
        return float(p2[a - 1, b - 1])

    def rhs(self, rho: np.ndarray, rho_inf: float, want_flux: bool = False):
        kmax = self.kmax
        ell = self.rule.ell
        p2, T = self._p2(rho, rho_inf)
        diag = np.diagonal(p2)
        row = p2.sum(axis=1) - diag
        col = p2.sum(axis=0) - diag
        t_esc = T[kmax + 1]
        # second-smallest escaped: the finite minimum still gets consumed
        esc_partner = ell * rho[1:] * t_esc ** (ell - 1)
        k_arr = np.arange(kmax + 1, dtype=np.float64)
        destr = np.zeros(kmax + 1)
        destr[1:] = np.arange(1, kmax + 1) * (row + col + 2.0 * diag + esc_partner)
        sums = np.bincount(self._sum_idx, weights=p2.ravel(),
                           minlength=2 * kmax + 2)
        created = np.zeros(kmax + 1)
        created[2:] = sums[2:kmax + 1]
        drho = k_arr * created - destr
        if not want_flux:
            return drho
        flux_esc = float((np.arange(1, kmax + 1) * esc_partner).sum())
        sizes = np.arange(kmax + 1, 2 * kmax + 2, dtype=np.float64)
        flux_over = float((sizes * sums[kmax + 1:]).sum())
        return drho, flux_esc + flux_over


_KERNEL_CACHE: dict = {}


def build_kernel(rule: RuleSpec, kmax: int):
    """Kernel object for any rule with a finite ODE description."""
    key = (rule, kmax)
    if key in _KERNEL_CACHE:
        return _KERNEL_CACHE[key]
    if classify(rule).is_bounded_size:
        kern = KernelTable(rule, kmax)
    elif rule.kind == "dcdgm":
        kern = MinPairKernel(rule, kmax)
    elif rule.kind == "join_two_smallest":
        kern = TwoSmallestKernel(rule, kmax)
    else:
        raise ValueError(
            f"no finite ODE description is available for rule {rule.kind!r}")
    _KERNEL_CACHE[key] = kern
    return kern


def join_rate(rule: RuleSpec, rho, j1: int, j2: int,
              rho_inf: float | None = None) -> float:
    """Probability per step that the applied edge joins a size-j1 to a
    distinct size-j2 component, at composition rho (k-indexed, entry 0
    unused).  Restricted to bounded-size rules; the min-selection kernels
    expose the same quantity through their kernel objects."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho_inf is None:
        rho_inf = max(0.0, 1.0 - float(rho.sum()))
    if not classify(rule).is_bounded_size:
        raise ValueError(f"join_rate requires a bounded-size rule, got {rule.kind}")
    kern = build_kernel(rule, len(rho) - 1)
    return kern.join_rate(rho, rho_inf, j1, j2)


def rhs(rule: RuleSpec, state: OdeState) -> np.ndarray:
    """d(rho)/dt at the given state (index 0 of the result is 0)."""
    kern = build_kernel(rule, state.kmax)
    return kern.rhs(state.rho, state.rho_inf)


class OdeSolution:
    """Integration output on a thinned time grid."""

    def __init__(self, rule: RuleSpec, kmax: int, h: float,
                 ts: np.ndarray, rho: np.ndarray):
        self.rule = rule
        self.kmax = kmax
        self.h = h
        self.ts = ts
        self.rho = rho                      # (T, kmax+1)
        self.rho_inf = 1.0 - rho.sum(axis=1)
        self._tails: dict[int, float] = {}

    def state_at(self, t: float) -> OdeState:
        i = int(np.argmin(np.abs(self.ts - t)))
        return OdeState(float(self.ts[i]), self.rho[i].copy(),
                        float(self.rho_inf[i]))

    def rho_k_series(self, k: int) -> np.ndarray:
        return self.rho[:, k]

    def rho_inf_at(self, t) -> np.ndarray | float:
        return np.interp(t, self.ts, self.rho_inf)

    def tail_mass(self, i: int) -> float:
        """Spectral estimate of the finite mass beyond kmax at output row i.

        Fits log rho_k = c0 + c1 log k + c2 k on the upper half of the
        spectrum and integrates the fitted density past the truncation;
        the escaped-mass estimate rho_inf - tail is then robust through
        the critical region, where the raw truncated tail is heaviest.
        """
        if i in self._tails:
            return self._tails[i]
        ks = np.arange(self.kmax // 2, self.kmax + 1)
        y = self.rho[i][ks]
        valid = y > 1e-250
        tail = 0.0
        if valid.sum() >= 8:
            kv = ks[valid].astype(np.float64)
            ly = np.log(y[valid])
            X = np.stack([np.ones_like(kv), np.log(kv), kv], axis=1)
            (c0, c1, c2), *_ = np.linalg.lstsq(X, ly, rcond=None)
            c2 = min(c2, -1e-12)
            f = lambda x: math.exp(c0 + c1 * math.log(x) + c2 * x)
            try:
                # near-flat fitted spectra trip quad's convergence warning;
                # the escaped-mass cap below bounds those cases anyway
                import warnings
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    val, _err = quad(f, self.kmax + 0.5, np.inf, limit=200)
                tail = min(max(val, 0.0), float(self.rho_inf[i]))
            except Exception:
                tail = 0.0
        self._tails[i] = tail
        return tail

    def rho_corrected(self) -> np.ndarray:
        """rho_inf minus the spectral tail estimate at every output row."""
        return np.array([self.rho_inf[i] - self.tail_mass(i)
                         for i in range(len(self.ts))])

    def rho_corrected_at(self, t) -> np.ndarray | float:
        return np.interp(t, self.ts, self.rho_corrected())

    def tc_estimate(self, threshold: float = 0.01, corrected: bool = True) -> float | None:
        """First time the (tail-corrected) escaped mass exceeds threshold,
        linearly interpolated between output rows."""
        curve = self.rho_corrected() if corrected else self.rho_inf
        above = np.nonzero(curve > threshold)[0]
        if not above.size:
            return None
        i = int(above[0])
        if i == 0:
            return float(self.ts[0])
        t0, t1 = self.ts[i - 1], self.ts[i]
        y0, y1 = curve[i - 1], curve[i]
        return float(t0 + (threshold - y0) * (t1 - t0) / (y1 - y0))

    def leakage_at_tc(self, threshold: float = 0.01) -> float | None:
        """Raw escaped mass at the estimated critical time: the truncation
        leakage diagnostic recorded in run metadata."""
        tc = self.tc_estimate(threshold=threshold)
        if tc is None:
            return None
        return float(self.rho_inf_at(tc))

    def to_csv(self, path, kprint: int = 10) -> None:
        path = Path(path)
        kprint = min(kprint, self.kmax)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,rho_inf," + ",".join(f"rho_{k}" for k in range(1, kprint + 1)) + "\n")
            for i in range(len(self.ts)):
                vals = [format(float(self.ts[i]), ".9g"),
                        format(float(self.rho_inf[i]), ".9g")]
                vals += [format(float(self.rho[i, k]), ".9g")
                         for k in range(1, kprint + 1)]
                fh.write(",".join(vals) + "\n")

    def metadata(self) -> dict:
        return {
            "schema": "achlab-ode-v1",
            "rule": self.rule.kind,
            "ell": self.rule.ell,
            "kmax": self.kmax,
            "h": self.h,
            "t_max": float(self.ts[-1]),
            "tc_estimate": self.tc_estimate(),
            "leakage_at_tc": self.leakage_at_tc(),
        }


def integrate(rule: RuleSpec, t_max: float, kmax: int = 1000,
              h: float = 1e-4, out_dt: float = 0.01) -> OdeSolution:
    """Fixed-step RK4 from the all-singletons state.

    Output rows are thinned to roughly out_dt apart (exactly on integer
    multiples of h).  Negative entries within roundoff are clamped to
    zero; anything worse aborts, as does any entry exceeding 1.
    """
    kern = build_kernel(rule, kmax)
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if not 0 < h <= out_dt:
        raise ValueError("need 0 < h <= out_dt")
    steps = int(round(t_max / h))
    out_every = max(1, int(round(out_dt / h)))
    rho = np.zeros(kmax + 1)
    rho[1] = 1.0
    ts = [0.0]
    out = [rho.copy()]
    f = lambda y: kern.rhs(y, 1.0 - y.sum())
    for step in range(1, steps + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        neg = rho.min()
        if neg < -_NEG_CLAMP:
            k_bad = int(rho.argmin())
            raise RuntimeError(
                f"instability: rho_{k_bad} = {neg:.3e} at t = {step * h:.6f} "
                f"(rule={rule.kind}, kmax={kmax}, h={h})")
        np.maximum(rho, 0.0, rho)
        peak = rho.max()
        if peak > _INSTABILITY:
            k_bad = int(rho.argmax())
            raise RuntimeError(
                f"instability: rho_{k_bad} = {peak:.3e} at t = {step * h:.6f} "
                f"(rule={rule.kind}, kmax={kmax}, h={h})")
        if step % out_every == 0 or step == steps:
            ts.append(step * h)
            out.append(rho.copy())
    return OdeSolution(rule, kmax, h, np.array(ts), np.array(out))


def right_derivative(rule: RuleSpec, t_c: float | None = None,
                     h_fd: float = 0.01, kmax: int = 4000, h: float = 1e-4,
                     t_max: float = 1.5, tc_threshold: float = 0.005,
                     solution: OdeSolution | None = None) -> float:
    """One-sided finite-difference slope of the limit survival function at
    its first-positive crossing: (rho(t_c + h_fd) - rho(t_c)) / h_fd.

    rho is read from the integrated system with the spectral tail
    correction applied; t_c defaults to the corrected first-positive
    crossing at tc_threshold.
    """
    sol = solution
    if sol is None:
        end = t_max if t_c is None else t_c + h_fd + 4 * h_fd
        sol = integrate(rule, end, kmax=kmax, h=h, out_dt=h_fd / 4.0)
    if t_c is None:
        t_c = sol.tc_estimate(threshold=tc_threshold, corrected=True)
        if t_c is None:
            raise RuntimeError("no positive crossing of the survival function")
    r0 = float(sol.rho_corrected_at(t_c))
    r1 = float(sol.rho_corrected_at(t_c + h_fd))
    return (r1 - r0) / h_fd
