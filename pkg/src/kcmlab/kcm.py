"""Continuous-time kinetically constrained dynamics: rejection-free
event-driven simulation, infection-time estimation, exact small-system
oracles, and the one-dimensional oriented-relaxation ladder combinatorics.

The simulator keeps the active set A_t = {x : constraint satisfied} and
draws the next effective event after Exp(|A_t|) at a uniform active site;
discarded illegal rings change nothing, so this is an exact thinning of the
per-site rate-1 clock representation.  Two engines implement the same law:
a generic Python one (any family, any boundary) and a compiled fast path for
threshold families (every rule an m-subset of one neighbourhood) on a torus.
Distributional agreement between the two is part of the test suite.
"""

from __future__ import annotations

import math
import os
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import Boundary, Configuration, SeededStream, Site, Window
from .family import UpdateFamily


# ---------------------------------------------------------------------------
# simulation configuration
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    family: UpdateFamily
    q: float
    torus_side: int = 0
    t_max: float = 100.0
    seed: int = 0
    replicates: int = 1
    initial: str = "stationary"          # "stationary" | "explicit"
    explicit_sites: Tuple[Site, ...] = ()
    # explicit small-system mode (overrides the torus)
    window: Optional[Window] = None
    boundary: Optional[Boundary] = None
    origin: Site = (0, 0)

    def __post_init__(self):
        if not 0 <= self.q <= 1:
            raise ValueError("q must lie in [0,1]")
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.window is None:
            L = self.torus_side
            if L < 2 * self.family.range + 1:
                raise ValueError("torus too small for the family range")
            if L < 8 * self.t_max + self.family.range:
                warnings.warn(
                    "torus side below the finite-speed guard 8*t_max + range",
                    stacklevel=2,
                )


@dataclass
class TauSample:
    value: float
    censored: bool
    rings_processed: int


# ---------------------------------------------------------------------------
# constraint
# ---------------------------------------------------------------------------

def constraint(family: UpdateFamily, config: Configuration, x: Site) -> bool:
    """c_x: some rule's translate by x is fully infected."""
    for r in family.rules:
        if all(config.infected((x[0] + u[0], x[1] + u[1])) for u in r):
            return True
    return False


def threshold_structure(family: UpdateFamily) -> Optional[Tuple[List[Site], int]]:
    """(neighbourhood, m) when the rules are exactly the m-subsets of one
    vector set, else None."""
    from itertools import combinations

    vecs = family.vectors()
    sizes = {len(r) for r in family.rules}
    if len(sizes) != 1:
        return None
    m = sizes.pop()
    want = {frozenset(c) for c in combinations(vecs, m)}
    return (vecs, m) if set(family.rules) == want else None


# ---------------------------------------------------------------------------
# generic engine
# ---------------------------------------------------------------------------

class _ActiveSet:
    """O(1) uniform sampling, insertion and removal."""

    __slots__ = ("items", "pos")

    def __init__(self):
        self.items: List[int] = []
        self.pos: Dict[int, int] = {}

    def __len__(self):
        return len(self.items)

    def add(self, x: int):
        if x not in self.pos:
            self.pos[x] = len(self.items)
            self.items.append(x)

    def discard(self, x: int):
        i = self.pos.pop(x, None)
        if i is None:
            return
        last = self.items.pop()
        if last != x:
            self.items[i] = last
            self.pos[last] = i


class _PythonEngine:
    """Any family, torus or explicit window+boundary; exact thinning."""

    def __init__(self, cfg: SimConfig, stream: SeededStream):
        self.cfg = cfg
        self.rng = stream.generator()
        fam = cfg.family
        if cfg.window is not None:
            self.window = cfg.window
            boundary = cfg.boundary or Boundary.all_healthy()
        else:
            L = cfg.torus_side
            self.window = Window(0, L - 1, 0, L - 1)
            boundary = Boundary.torus()
        self.config = Configuration(self.window, boundary)
        if cfg.initial == "stationary":
            self.config.grid = self.rng.random(
                (self.window.height, self.window.width)
            ) < cfg.q
        else:
            for s in cfg.explicit_sites:
                self.config.set_infected(s, True)
        self.sites = list(self.window.sites())
        self.index = {s: i for i, s in enumerate(self.sites)}
        dep_vecs = sorted({(-u[0], -u[1]) for r in fam.rules for u in r})
        self.dep_vecs = dep_vecs
        self.active = _ActiveSet()
        for i, s in enumerate(self.sites):
            if constraint(fam, self.config, s):
                self.active.add(i)
        self.t = 0.0
        self.events = 0

    def _wrap(self, x: Site) -> Site:
        w = self.window
        if self.config.boundary.kind == Boundary.TORUS:
            return (
                (x[0] - w.x_min) % w.width + w.x_min,
                (x[1] - w.y_min) % w.height + w.y_min,
            )
        return x

    def _refresh(self, s: Site):
        i = self.index.get(s)
        if i is None:
            return
        if constraint(self.cfg.family, self.config, s):
            self.active.add(i)
        else:
            self.active.discard(i)

    def run(self, stop_at_origin: bool, probe: Optional[Site] = None):
        cfg = self.cfg
        origin = cfg.origin
        if stop_at_origin and self.config.infected(origin):
            return TauSample(0.0, False, 0), 0.0
        probe_int = 0.0
        rng = self.rng
        while True:
            n = len(self.active)
            if n == 0:
                if probe is not None and self.config.infected(probe):
                    probe_int += cfg.t_max - self.t
                self.t = cfg.t_max
                return TauSample(cfg.t_max, True, self.events), probe_int
            dt = rng.exponential(1.0 / n)
            if self.t + dt > cfg.t_max:
                if probe is not None and self.config.infected(probe):
                    probe_int += cfg.t_max - self.t
                self.t = cfg.t_max
                return TauSample(cfg.t_max, True, self.events), probe_int
            if probe is not None and self.config.infected(probe):
                probe_int += dt
            self.t += dt
            x = self.sites[self.active.items[int(rng.random() * n)]]
            new = bool(rng.random() < cfg.q)
            self.events += 1
            if new != self.config.infected(x):
                self.config.set_infected(x, new)
                for d in self.dep_vecs:
                    self._refresh(self._wrap((x[0] + d[0], x[1] + d[1])))
                self._refresh(x)
            if stop_at_origin and new and x == origin:
                return TauSample(self.t, False, self.events), probe_int


class _NaiveEngine(_PythonEngine):
    """Literal per-site clock reference: rings at uniform sites, illegal
    rings discarded.  Used only to validate the thinned engine's law."""

    def run(self, stop_at_origin: bool, probe: Optional[Site] = None):
        cfg = self.cfg
        origin = cfg.origin
        if stop_at_origin and self.config.infected(origin):
            return TauSample(0.0, False, 0), 0.0
        n_sites = len(self.sites)
        rng = self.rng
        while True:
            dt = rng.exponential(1.0 / n_sites)
            if self.t + dt > cfg.t_max:
                return TauSample(cfg.t_max, True, self.events), 0.0
            self.t += dt
            x = self.sites[int(rng.random() * n_sites)]
            if not constraint(cfg.family, self.config, x):
                continue
            new = bool(rng.random() < cfg.q)
            self.events += 1
            if new != self.config.infected(x):
                self.config.set_infected(x, new)
            if stop_at_origin and new and x == origin:
                return TauSample(self.t, False, self.events), 0.0


# ---------------------------------------------------------------------------
# compiled threshold fast path
# ---------------------------------------------------------------------------

try:
    import numba

    @numba.njit(cache=True)
    def _torus_threshold_run(eta, nbrs, m, q, t_max, seed,
                             stop_at_origin, probe, max_events):
        """Event loop; returns (tau, censored, events, probe_integral).

        eta is modified in place; origin is flat index 0.  Randomness comes
        from the compiled runtime's own generator, reseeded per call.
        """
        np.random.seed(seed)
        n_sites = eta.shape[0]
        deg = nbrs.shape[1]
        cnt = np.zeros(n_sites, dtype=np.int32)
        for x in range(n_sites):
            if eta[x]:
                for j in range(deg):
                    cnt[nbrs[x, j]] += 1
        items = np.empty(n_sites, dtype=np.int64)
        pos = np.full(n_sites, -1, dtype=np.int64)
        size = 0
        for x in range(n_sites):
            if cnt[x] >= m:
                pos[x] = size
                items[size] = x
                size += 1
        events = 0
        t = 0.0
        probe_int = 0.0
        if stop_at_origin and eta[0]:
            return 0.0, False, 0, 0.0
        while events < max_events:
            if size == 0:
                if probe >= 0 and eta[probe]:
                    probe_int += t_max - t
                return t_max, True, events, probe_int
            dt = np.random.exponential(1.0 / size)
            if t + dt > t_max:
                if probe >= 0 and eta[probe]:
                    probe_int += t_max - t
                return t_max, True, events, probe_int
            if probe >= 0 and eta[probe]:
                probe_int += dt
            t += dt
            x = items[np.int64(np.random.random() * size)]
            new = np.uint8(1) if np.random.random() < q else np.uint8(0)
            events += 1
            if new != eta[x]:
                eta[x] = new
                d = np.int32(1) if new else np.int32(-1)
                for j in range(deg):
                    y = nbrs[x, j]
                    cnt[y] += d
                    if cnt[y] >= m and pos[y] < 0:
                        pos[y] = size
                        items[size] = y
                        size += 1
                    elif cnt[y] < m and pos[y] >= 0:
                        i = pos[y]
                        size -= 1
                        last = items[size]
                        items[i] = last
                        pos[last] = i
                        pos[y] = -1
                if stop_at_origin and new and x == 0:
                    return t, False, events, probe_int
        return t, True, events, probe_int

    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False


def _torus_neighbor_table(L: int, vecs: Sequence[Site]) -> np.ndarray:
    n = L * L
    deg = len(vecs)
    out = np.empty((n, deg), dtype=np.int64)
    for x in range(L):
        for y in range(L):
            i = y * L + x
            for j, (vx, vy) in enumerate(vecs):
                out[i, j] = ((y + vy) % L) * L + ((x + vx) % L)
    return out


class _ThresholdTorusEngine:
    """Compiled fast path for m-of-neighbourhood families on the torus."""

    _nbr_cache: Dict[Tuple, np.ndarray] = {}

    def __init__(self, cfg: SimConfig, stream: SeededStream, structure):
        vecs, m = structure
        self.cfg = cfg
        L = cfg.torus_side
        key = (L, tuple(vecs))
        nbrs = self._nbr_cache.get(key)
        if nbrs is None:
            # constraint at y reads y+v; flipping x touches sites y = x - v,
            # and by table symmetry we store x -> x - v directly
            nbrs = _torus_neighbor_table(L, [(-v[0], -v[1]) for v in vecs])
            self._nbr_cache[key] = nbrs
        self.nbrs = nbrs
        self.m = m
        rng = stream.generator()
        if cfg.initial == "stationary":
            self.eta = (rng.random(L * L) < cfg.q).astype(np.uint8)
        else:
            self.eta = np.zeros(L * L, dtype=np.uint8)
            for (x, y) in cfg.explicit_sites:
                self.eta[(y % L) * L + (x % L)] = 1
        self.kernel_seed = int(rng.integers(0, 2**32 - 1))

    def run(self, stop_at_origin: bool, probe: Optional[Site] = None):
        cfg = self.cfg
        L = cfg.torus_side
        probe_idx = -1 if probe is None else (probe[1] % L) * L + (probe[0] % L)
        tau, censored, events, probe_int = _torus_threshold_run(
            self.eta, self.nbrs, self.m, cfg.q, cfg.t_max,
            self.kernel_seed, stop_at_origin, probe_idx, np.int64(10**12),
        )
        return TauSample(float(tau), bool(censored), int(events)), float(probe_int)


def _make_engine(cfg: SimConfig, stream: SeededStream, force_python=False):
    if not force_python and cfg.window is None and HAVE_NUMBA:
        structure = threshold_structure(cfg.family)
        if structure is not None:
            return _ThresholdTorusEngine(cfg, stream, structure)
    return _PythonEngine(cfg, stream)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def simulate(cfg: SimConfig, stop: str = "origin_infected",
             stream: Optional[SeededStream] = None,
             engine: str = "auto") -> TauSample:
    """One trajectory; stop is "origin_infected" (returns tau_0, censored at
    t_max) or "t_max"."""
    stream = stream or SeededStream(cfg.seed, 0)
    if engine == "naive":
        eng = _NaiveEngine(cfg, stream)
    else:
        eng = _make_engine(cfg, stream, force_python=(engine == "python"))
    sample, _ = eng.run(stop_at_origin=(stop == "origin_infected"))
    return sample


def final_state(cfg: SimConfig, stream: SeededStream) -> Configuration:
    """Run to t_max with the generic engine and return the configuration."""
    eng = _PythonEngine(cfg, stream)
    eng.run(stop_at_origin=False)
    return eng.config


def _replicate_tau(args):
    cfg, rep_id, engine = args
    stream = SeededStream(cfg.seed, rep_id)
    eng = _make_engine(cfg, stream, force_python=(engine == "python"))
    sample, _ = eng.run(stop_at_origin=True)
    return rep_id, sample


def _pool_size() -> int:
    env = os.environ.get("KCMLAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


@dataclass
class TauEstimate:
    mean: float
    ci_low: float
    ci_high: float
    censored: int
    replicates: int
    samples: List[float]
    events_total: int
    lower_bound_only: bool


def estimate_tau0(cfg: SimConfig, engine: str = "auto",
                  parallel: Optional[bool] = None) -> TauEstimate:
    """Independent replicates on streams (seed, replicate_id); censored
    samples enter at t_max and flag the mean as a lower bound."""
    if cfg.replicates < 30:
        raise ValueError("need at least 30 replicates")
    jobs = [(cfg, r, engine) for r in range(cfg.replicates)]
    workers = _pool_size()
    results = []
    if parallel is None:
        parallel = workers > 1 and cfg.replicates >= 8 and (
            cfg.torus_side * cfg.torus_side * cfg.t_max > 5e5
        )
    if parallel and workers > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_replicate_tau, jobs, chunksize=1))
    else:
        results = [_replicate_tau(j) for j in jobs]
    results.sort()
    vals = [s.value for _, s in results]
    censored = sum(1 for _, s in results if s.censored)
    events = sum(s.rings_processed for _, s in results)
    n = len(vals)
    mean = sum(vals) / n
    sd = math.sqrt(sum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
    half = 1.96 * sd / math.sqrt(n)
    return TauEstimate(mean, mean - half, mean + half, censored, n, vals,
                       events, censored > 0)


def stationarity_probe(cfg: SimConfig, probe_site: Site,
                       engine: str = "auto") -> Dict[str, float]:
    """Time-averaged infection indicator at probe_site over [0, t_max] across
    replicates; at stationarity the mean sits within noise of q."""
    means = []
    for r in range(cfg.replicates):
        stream = SeededStream(cfg.seed, r)
        eng = _make_engine(cfg, stream, force_python=(engine == "python"))
        _, probe_int = eng.run(stop_at_origin=False, probe=probe_site)
        means.append(probe_int / cfg.t_max)
    n = len(means)
    mean = sum(means) / n
    sd = math.sqrt(sum((v - mean) ** 2 for v in means) / (n - 1)) if n > 1 else 0.0
    return {"mean": mean, "stderr": sd / math.sqrt(n), "replicates": n}


# ---------------------------------------------------------------------------
# exact small systems
# ---------------------------------------------------------------------------

@dataclass
class ExactSystem:
    """Explicit-state continuous-time chain on <= 20 sites: legal sites
    resample to infected at rate q and to healthy at rate 1-q."""

    family: UpdateFamily
    sites: Tuple[Site, ...]
    boundary: Boundary
    q: float

    def __post_init__(self):
        if len(self.sites) > 20:
            raise ValueError("exact systems capped at 20 sites")
        self.sites = tuple(self.sites)
        xs = [s[0] for s in self.sites]
        ys = [s[1] for s in self.sites]
        self._window = Window(min(xs), max(xs), min(ys), max(ys))

    @property
    def n_states(self) -> int:
        return 1 << len(self.sites)

    def _config(self, state: int) -> Configuration:
        cfg = Configuration(self._window, self.boundary)
        for i, s in enumerate(self.sites):
            if state >> i & 1:
                cfg.set_infected(s, True)
        return cfg

    def legal_sites(self, state: int) -> List[int]:
        cfg = self._config(state)
        return [
            i for i, s in enumerate(self.sites)
            if constraint(self.family, cfg, s)
        ]

    def generator_matrix(self):
        """Sparse rate matrix Q (row sums zero)."""
        import scipy.sparse as sp

        n = self.n_states
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        for st in range(n):
            for i in self.legal_sites(st):
                infected = st >> i & 1
                if infected:
                    to, rate = st & ~(1 << i), 1 - self.q
                else:
                    to, rate = st | (1 << i), self.q
                if rate > 0:
                    rows.append(st)
                    cols.append(to)
                    vals.append(rate)
                    diag[st] -= rate
        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(diag)
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def stationary_weights(self) -> np.ndarray:
        n = self.n_states
        mu = np.empty(n)
        for st in range(n):
            k = bin(st).count("1")
            mu[st] = self.q ** k * (1 - self.q) ** (len(self.sites) - k)
        return mu

    def state_distribution(self, t: float, initial: Optional[np.ndarray] = None) -> np.ndarray:
        """Law of the state at time t from the product initial law."""
        from scipy.linalg import expm

        Q = self.generator_matrix().toarray()
        pi0 = self.stationary_weights() if initial is None else initial
        return pi0 @ expm(Q * t)


def exact_tau0(sys: ExactSystem, target_site: Site) -> float:
    """E_mu of the first time target_site is infected: solve the hitting-time
    system L h = -1 off the target set, average h against the product law."""
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    idx = sys.sites.index(target_site)
    n = sys.n_states
    Q = sys.generator_matrix().tocsc()
    free = np.array([st for st in range(n) if not (st >> idx & 1)], dtype=np.int64)
    # reachability of the target set from every free state
    reach = _reachable_to_target(sys, idx)
    if not all(reach[st] for st in free):
        raise ValueError("target unreachable from some states; expectation diverges")
    A = Q[free][:, free]
    b = -np.ones(len(free))
    h_free = spla.spsolve(A.tocsc(), b)
    residual = np.abs(A @ h_free - b).max()
    if residual > 1e-10:
        raise ArithmeticError(f"hitting-time solve residual {residual:.2e}")
    h = np.zeros(n)
    h[free] = h_free
    return float(sys.stationary_weights() @ h)


def _reachable_to_target(sys: ExactSystem, idx: int) -> np.ndarray:
    """States from which {target infected} is reachable (reverse BFS)."""
    n = sys.n_states
    Q = sys.generator_matrix().tocsr()
    radj: List[List[int]] = [[] for _ in range(n)]
    coo = Q.tocoo()
    for a, b, v in zip(coo.row, coo.col, coo.data):
        if a != b and v > 0:
            radj[b].append(a)
    reach = np.zeros(n, dtype=bool)
    dq = deque(st for st in range(n) if st >> idx & 1)
    for st in dq:
        reach[st] = True
    while dq:
        st = dq.popleft()
        for prev in radj[st]:
            if not reach[prev]:
                reach[prev] = True
                dq.append(prev)
    return reach


# ---------------------------------------------------------------------------
# oriented-chain ladder combinatorics
# ---------------------------------------------------------------------------

def east_min_infections(L: int) -> int:
    """Minimal simultaneous extra infections to carry an infection distance L
    along the oriented chain: ceil(log2(L+1)), computed exactly."""
    if L < 1:
        raise ValueError("distance must be >= 1")
    return L.bit_length()


def east_reach_bfs(n: int, board: Optional[int] = None) -> int:
    """Farthest site reachable from a single anchored infection using at most
    n simultaneous extra infections (breadth-first search over chain
    configurations; the anchor at 0 never flips, moves resample site x when
    x+1 is infected)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0
    M = board or (1 << n) + 1
    # state: bitmask over positions 1..M (position p = -p on the lattice)
    start = 0
    seen = {start}
    dq = deque([start])
    best = 0
    while dq:
        st = dq.popleft()
        if st:
            best = max(best, st.bit_length())
        pop = bin(st).count("1")
        for p in range(1, M + 1):
            bit = 1 << (p - 1)
            right_infected = p == 1 or (st >> (p - 2)) & 1
            if not right_infected:
                continue
            if st & bit:
                nxt = st & ~bit
            else:
                if pop >= n:
                    continue
                nxt = st | bit
            if nxt not in seen:
                seen.add(nxt)
                dq.append(nxt)
    return best
