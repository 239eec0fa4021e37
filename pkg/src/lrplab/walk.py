"""Simple random walk on sampled environments.

The walk moves to a uniformly chosen neighbor each step.  On a finite
window the two extreme vertices keep a stub for their missing outward
nearest-neighbor edge: probability mass taking a stub is recorded as leak
and flags the trace, so window truncation is audited rather than assumed
harmless.  Degrees used by the dynamics therefore count the stub.

Exact evolution iterates the full probability vector.  Even-time return
probabilities use the half-time identity

    p_2t(x,x) = sum_y P_x[X_t=y]^2 / deg(y),

valid by reversibility, which halves both the horizon and the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BoundaryContactError
from .model import Environment, LazyEnvironment
from .resistance import ResistanceBall, _laplacian_edges, grounded_subset_system
from .rng import TAG_WALKER, replicate_seed, stream

__all__ = [
    "HeatKernelTrace",
    "EvenDiagonalTrace",
    "WalkStats",
    "ExitTimeResult",
    "evolve_heat_kernel",
    "diagonal_heat_kernel",
    "mc_walk",
    "expected_exit_time",
    "suggest_half_width",
]


def suggest_half_width(multiplier: float, steps: int, window_max=None) -> int:
    """Window half-width for an exact evolution of `steps` steps."""
    w = int(np.ceil(multiplier * steps))
    if window_max is not None:
        w = min(w, int(window_max))
    return max(w, 4)


@dataclass
class HeatKernelTrace:
    beta: float
    seed: int
    window: tuple
    source: int
    p_return: np.ndarray  # p_n(source, source), index n = 0 .. N_max
    leak: np.ndarray  # mass absorbed during step n -> n+1
    total_leak: float
    valid: bool  # no leak at any step
    odd_return_max: float
    mass_error: float  # worst deviation of sum(v) + leak from 1

    @property
    def n_max(self) -> int:
        return len(self.p_return) - 1


@dataclass
class EvenDiagonalTrace:
    beta: float
    seed: int
    window: tuple
    source: int
    half_times: np.ndarray
    p2n: np.ndarray  # p_{2t}(source, source) for t in half_times
    total_leak: float
    valid: bool
    mass_error: float


@dataclass
class WalkStats:
    steps: int
    walkers: int
    record_times: np.ndarray
    return_counts: np.ndarray  # walkers at the origin, per recorded time
    return_fraction: np.ndarray
    mean_x: np.ndarray
    mean_x2: np.ndarray
    mean_abs_x: np.ndarray
    mean_range: np.ndarray  # mean over walkers of max |X_k|, k <= t
    mean_visited: np.ndarray  # lazy mode only, NaN otherwise
    mean_degree_sum: np.ndarray  # lazy mode only, NaN otherwise
    leaked: int = 0


@dataclass
class ExitTimeResult:
    ball: ResistanceBall
    exact: float
    mc_estimate: float = float("nan")
    mc_se: float = float("nan")
    mc_walkers: int = 0


def _dynamics(env: Environment):
    """Transition operator pieces for a windowed environment.

    Returns (M, deg_dyn, stub_rate) where v_{n+1} = M v_n and stub_rate[x]
    is the per-step probability of leaving the window from x.
    """
    n = env.n_vertices
    r, c = _laplacian_edges(env, env.params.vertices)
    deg_dyn = env.degrees.astype(float).copy()
    stub = np.zeros(n)
    if n >= 2:
        deg_dyn[0] += 1.0
        deg_dyn[-1] += 1.0
        stub[0] = 1.0
        stub[-1] = 1.0
    ones = np.ones(len(r))
    adj = sp.coo_matrix(
        (np.concatenate([ones, ones]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(n, n),
    ).tocsr()
    m = adj @ sp.diags(1.0 / deg_dyn)
    return m.tocsr(), deg_dyn, stub / deg_dyn


def evolve_heat_kernel(env: Environment, source: int, n_max: int) -> HeatKernelTrace:
    """Exact heat-kernel diagonal p_n(source, source) for n = 0 .. n_max."""
    lo = env.params.lo
    src = source - lo
    if not 0 <= src < env.n_vertices:
        raise ValueError(f"source {source} outside window")
    m, deg_dyn, stub_rate = _dynamics(env)
    v = np.zeros(env.n_vertices)
    v[src] = 1.0
    p = np.empty(n_max + 1)
    leak = np.zeros(n_max)
    p[0] = 1.0 / deg_dyn[src]
    mass_err = 0.0
    lost = 0.0
    for n in range(n_max):
        leak[n] = float(v @ stub_rate)
        v = m @ v
        lost += leak[n]
        mass_err = max(mass_err, abs(v.sum() + lost - 1.0))
        p[n + 1] = v[src] / deg_dyn[src]
    odd_max = float(p[1::2].max()) if n_max >= 1 else 0.0
    return HeatKernelTrace(
        env.params.beta, env.seed, (env.params.lo, env.params.hi), source,
        p, leak, float(lost), bool(lost == 0.0), odd_max, float(mass_err),
    )


def diagonal_heat_kernel(env: Environment, source: int, half_times) -> EvenDiagonalTrace:
    """p_{2t}(source, source) at the requested half-times t.

    Evolves only to max(half_times) and applies the half-time square
    identity, so a horizon-2T trace costs a horizon-T evolution.
    """
    half_times = np.asarray(sorted(int(t) for t in half_times), dtype=np.int64)
    if half_times.size == 0 or half_times[0] < 1:
        raise ValueError("half_times must be positive")
    lo = env.params.lo
    src = source - lo
    m, deg_dyn, stub_rate = _dynamics(env)
    v = np.zeros(env.n_vertices)
    v[src] = 1.0
    out = np.empty(len(half_times))
    lost = 0.0
    mass_err = 0.0
    want = {int(t): i for i, t in enumerate(half_times)}
    for n in range(1, int(half_times[-1]) + 1):
        lost += float(v @ stub_rate)
        v = m @ v
        mass_err = max(mass_err, abs(v.sum() + lost - 1.0))
        if n in want:
            out[want[n]] = float(np.sum(v * v / deg_dyn))
    return EvenDiagonalTrace(
        env.params.beta, env.seed, (env.params.lo, env.params.hi), source,
        half_times, out, float(lost), bool(lost == 0.0), float(mass_err),
    )


# --- Monte-Carlo walking ---------------------------------------------------


def _walk_lazy(env: LazyEnvironment, steps, walkers, record_times, seed, fresh):
    nt = len(record_times)
    rec_set = {int(t): i for i, t in enumerate(record_times)}
    returns = np.zeros(nt, dtype=np.int64)
    sx = np.zeros(nt)
    sx2 = np.zeros(nt)
    sabs = np.zeros(nt)
    srange = np.zeros(nt)
    svis = np.zeros(nt)
    sdeg = np.zeros(nt)
    for w in range(walkers):
        graph = LazyEnvironment(env.beta, replicate_seed(seed, w)) if fresh else env
        g = stream(seed, TAG_WALKER, w)
        x = 0
        best = 0
        visited = {0: graph.degree(0)}
        degsum = graph.degree(0)
        for t in range(steps + 1):
            if t in rec_set:
                i = rec_set[t]
                returns[i] += x == 0
                sx[i] += x
                sx2[i] += x * x
                sabs[i] += abs(x)
                srange[i] += best
                svis[i] += len(visited)
                sdeg[i] += degsum
            if t == steps:
                break
            nbrs = graph.neighbors(x)
            x = int(nbrs[g.integers(0, len(nbrs))])
            best = max(best, abs(x))
            if x not in visited:
                d = graph.degree(x)
                visited[x] = d
                degsum += d
    inv = 1.0 / walkers
    return WalkStats(
        steps, walkers, record_times, returns, returns * inv,
        sx * inv, sx2 * inv, sabs * inv, srange * inv, svis * inv, sdeg * inv,
    )


def _walk_windowed(env: Environment, steps, walkers, record_times, seed):
    n = env.n_vertices
    lo = env.params.lo
    if not (lo <= 0 < env.params.hi):
        raise ValueError("walk starts at 0; window must contain it")
    r, c = _laplacian_edges(env, env.params.vertices)
    deg_dyn = env.degrees.astype(np.int64).copy()
    # stub sentinel -1 encodes stepping off the window
    stubs = []
    if n >= 2:
        deg_dyn[0] += 1
        deg_dyn[-1] += 1
        stubs = [(0, -1), (n - 1, -1)]
    src = np.concatenate([r, c, [s for s, _ in stubs]]).astype(np.int64)
    dst = np.concatenate([c, r, [t for _, t in stubs]]).astype(np.int64)
    order = np.lexsort((dst, src))
    targets = dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    g = stream(seed, TAG_WALKER, 0)

    nt = len(record_times)
    rec_set = {int(t): i for i, t in enumerate(record_times)}
    returns = np.zeros(nt, dtype=np.int64)
    sx = np.zeros(nt)
    sx2 = np.zeros(nt)
    sabs = np.zeros(nt)
    srange = np.zeros(nt)
    pos = np.full(walkers, -lo, dtype=np.int64)  # local index of vertex 0
    alive = np.ones(walkers, dtype=bool)
    best = np.zeros(walkers, dtype=np.int64)
    for t in range(steps + 1):
        if t in rec_set:
            i = rec_set[t]
            xg = pos[alive] + lo
            returns[i] = int((xg == 0).sum())
            sx[i] = xg.sum()
            sx2[i] = float((xg.astype(float) ** 2).sum())
            sabs[i] = np.abs(xg).sum()
            srange[i] = best[alive].sum()
        if t == steps or not alive.any():
            break
        ai = np.flatnonzero(alive)
        cur = pos[ai]
        pick = (g.random(len(ai)) * deg_dyn[cur]).astype(np.int64)
        nxt = targets[offsets[cur] + pick]
        out = nxt < 0
        alive[ai[out]] = False
        moved = ai[~out]
        pos[moved] = nxt[~out]
        best[moved] = np.maximum(best[moved], np.abs(pos[moved] + lo))
    inv = 1.0 / walkers
    nanarr = np.full(nt, np.nan)
    return WalkStats(
        steps, walkers, record_times, returns, returns * inv,
        sx * inv, sx2 * inv, sabs * inv, srange * inv, nanarr, nanarr,
        leaked=int(walkers - alive.sum()),
    )


def mc_walk(env, steps: int, walkers: int, record_times, seed: int,
            annealed: bool = False) -> WalkStats:
    """Simulate independent walkers started at 0.

    env is a LazyEnvironment (quenched: shared; annealed=True: a fresh
    environment per walker with the given beta) or a windowed Environment
    (vectorized; walkers leaving the window are counted as leaked).
    Visited-set and degree-sum statistics are tracked on lazy walks only.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if walkers < 1:
        raise ValueError("need at least one walker")
    record_times = np.asarray(sorted({int(t) for t in record_times}), dtype=np.int64)
    if record_times.size == 0:
        record_times = np.array([steps], dtype=np.int64)
    if record_times[0] < 0 or record_times[-1] > steps:
        raise ValueError("record_times outside [0, steps]")
    if isinstance(env, LazyEnvironment):
        return _walk_lazy(env, steps, walkers, record_times, seed, annealed)
    if annealed:
        raise ValueError("annealed walking needs a LazyEnvironment template")
    return _walk_windowed(env, steps, walkers, record_times, seed)


# --- exit times ------------------------------------------------------------


def expected_exit_time(env: Environment, ball: ResistanceBall,
                       mc_walkers: int = 0, seed: int = 0) -> ExitTimeResult:
    """Exact E_0[first step leaving the ball], with optional MC cross-check.

    Solves deg(x) u(x) - sum_{y in B, y~x} u(y) = deg(x) over ball members;
    u vanishes off the ball.  Refuses balls whose truncation flag is set.
    """
    if ball.touches_window_boundary:
        raise BoundaryContactError(
            "ball touches the window boundary; enlarge the window "
            f"(half-width {ball.window_half_width}, radius {ball.radius})"
        )
    members = ball.members
    mat, deg = grounded_subset_system(env, members)
    if len(members) <= 400:
        u = sla.cho_solve(sla.cho_factor(mat.toarray()), deg)
    else:
        u = spla.splu(mat).solve(deg)
    origin = int(np.searchsorted(members, 0))
    exact = float(u[origin])
    result = ExitTimeResult(ball, exact)
    if mc_walkers > 0:
        result = _exit_mc(env, ball, exact, mc_walkers, seed, result)
    return result


def _exit_mc(env, ball, exact, walkers, seed, result):
    n = env.n_vertices
    lo = env.params.lo
    r, c = _laplacian_edges(env, env.params.vertices)
    deg_dyn = env.degrees.astype(np.int64).copy()
    stubs = []
    if n >= 2:
        deg_dyn[0] += 1
        deg_dyn[-1] += 1
        stubs = [(0, -1), (n - 1, -1)]
    src = np.concatenate([r, c, [s for s, _ in stubs]]).astype(np.int64)
    dst = np.concatenate([c, r, [t for _, t in stubs]]).astype(np.int64)
    order = np.lexsort((dst, src))
    targets = dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    in_ball = np.zeros(n, dtype=bool)
    in_ball[ball.members - lo] = True
    g = stream(seed, TAG_WALKER, 1)
    pos = np.full(walkers, -lo, dtype=np.int64)
    active = np.ones(walkers, dtype=bool)
    exit_at = np.zeros(walkers, dtype=np.int64)
    cap = max(1000, int(200 * exact))
    t = 0
    while active.any() and t < cap:
        t += 1
        ai = np.flatnonzero(active)
        cur = pos[ai]
        pick = (g.random(len(ai)) * deg_dyn[cur]).astype(np.int64)
        nxt = targets[offsets[cur] + pick]
        gone = (nxt < 0) | ~in_ball[np.maximum(nxt, 0)]
        exit_at[ai[gone]] = t
        active[ai[gone]] = False
        pos[ai[~gone]] = nxt[~gone]
    if active.any():
        exit_at[active] = cap  # truncated; bias noted by caller via cap >> exact
    result.mc_estimate = float(exit_at.mean())
    result.mc_se = float(exit_at.std(ddof=1) / np.sqrt(walkers))
    result.mc_walkers = walkers
    return result
