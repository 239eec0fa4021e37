"""Electrical-network engine over sampled environments.

Every edge is a unit resistor.  Effective resistances come from grounded
graph Laplacians: one vertex (or a collapsed target set) is removed, the
remaining SPD system is factored once and reused across right-hand sides.
Small systems use dense Cholesky, mid-size ones a sparse LU, and windows
beyond 10^5 vertices fall back to preconditioned conjugate gradients.
Resistance profiles on large intervals bypass all of that: a blocked
left-to-right elimination whose frontier is the set of crossing long
edges gives the grounded inverse diagonal in time linear in the window.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvariantViolation
from .model import Environment
from .rng import TAG_GENERIC, stream

_DENSE_LIMIT = 192
_DIRECT_LIMIT = 100_000


@dataclass
class ResistanceQuery:
    kind: str  # two-point-restricted | two-point-windowed | point-to-set
    i: int
    j: object  # vertex, or a string describing a target set
    value: float
    boundary_flag: bool

    def csv_row(self, beta, n, seed) -> str:
        return (
            f"{beta},{n},{seed},{self.kind},{self.i},{self.j},"
            f"{self.value:.12g},{int(self.boundary_flag)}"
        )


@dataclass
class ResistanceBall:
    center: int
    radius: float
    members: np.ndarray  # sorted global vertex labels, sub-level set of R(0, .)
    volume: int  # sum of degrees over members
    touches_window_boundary: bool
    window_half_width: int


@dataclass
class LambdaEstimate:
    beta: float
    n: int
    estimate: float
    se: float
    replicates: int
    mode: str
    argmax_pair: tuple
    argmax_counts: dict = field(default_factory=dict)
    tied_pairs: list = field(default_factory=list)
    endpoint_estimate: float = float("nan")
    endpoint_se: float = float("nan")


def _laplacian_edges(env: Environment, vertices: np.ndarray):
    """Local edge index pairs of the graph induced on `vertices`."""
    rows = []
    cols = []
    consecutive = np.flatnonzero(np.diff(vertices) == 1)
    rows.append(consecutive)
    cols.append(consecutive + 1)
    if env.edges.size:
        vset = vertices
        a = np.searchsorted(vset, env.edges[:, 0])
        b = np.searchsorted(vset, env.edges[:, 1])
        ok = (
            (a < len(vset))
            & (b < len(vset))
            & (vset[np.minimum(a, len(vset) - 1)] == env.edges[:, 0])
            & (vset[np.minimum(b, len(vset) - 1)] == env.edges[:, 1])
        )
        rows.append(a[ok])
        cols.append(b[ok])
    return np.concatenate(rows), np.concatenate(cols)


class LinearSystem:
    """Grounded Laplacian over a vertex set, with a reusable solver.

    semantics records whether the vertex set is the definition of the
    quantity ("restricted", e.g. R on [0,n)) or a truncation of the
    infinite model ("window"); two-point queries inherit their
    boundary flag from it.
    """

    def __init__(self, env: Environment, vertices: np.ndarray, ground: int, semantics: str):
        self.env = env
        self.vertices = vertices
        self.semantics = semantics
        self.ground = int(ground)
        n = len(vertices)
        self._local = None  # lazy dict global -> local, only for explicit sets
        gi = int(np.searchsorted(vertices, ground))
        if gi >= n or vertices[gi] != ground:
            raise ValueError(f"ground vertex {ground} not in system")
        self.ground_local = gi
        self.contiguous = bool(n < 2 or (vertices[-1] - vertices[0]) == n - 1)
        r, c = _laplacian_edges(env, vertices)
        self.edge_rows = r
        self.edge_cols = c
        if not self.contiguous:
            # intervals carry the whole nearest-neighbour path
            self._check_connected(n, r, c)
        deg = np.bincount(np.concatenate([r, c]), minlength=n).astype(float)
        data = np.concatenate([-np.ones(len(r)), -np.ones(len(r)), deg])
        ii = np.concatenate([r, c, np.arange(n)])
        jj = np.concatenate([c, r, np.arange(n)])
        lap = sp.coo_matrix((data, (ii, jj)), shape=(n, n)).tocsr()
        keep = np.arange(n) != gi
        self.keep = keep
        self.lap = lap
        self.grounded = lap[keep][:, keep].tocsc()
        self._factor = None
        self._dense = None

    @staticmethod
    def _check_connected(n, r, c):
        # union-find over induced edges; interval sets are connected by
        # construction but explicit sets may not be
        parent = np.arange(n)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in zip(r, c):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
        roots = {find(x) for x in range(n)}
        if len(roots) > 1:
            comp = [x for x in range(n) if find(x) == find(0)]
            raise ValueError(
                f"vertex set induces a disconnected graph; one component has "
                f"{len(comp)} of {n} vertices"
            )

    @property
    def n(self) -> int:
        return len(self.vertices)

    def local_index(self, v: int) -> int:
        i = int(np.searchsorted(self.vertices, v))
        if i >= self.n or self.vertices[i] != v:
            raise ValueError(f"vertex {v} not in system")
        return i

    def _ensure_factor(self):
        if self._factor is not None:
            return
        m = self.grounded.shape[0]
        if m <= _DENSE_LIMIT:
            self._dense = sla.cho_factor(self.grounded.toarray())
            self._factor = "dense"
        elif m <= _DIRECT_LIMIT:
            self._factor = spla.splu(self.grounded)
        else:
            diag = self.grounded.diagonal()
            self._precond = spla.LinearOperator(
                self.grounded.shape, lambda x: x / diag
            )
            self._factor = "cg"

    def solve_grounded(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the grounded system; rhs indexed like the grounded matrix."""
        self._ensure_factor()
        if self._factor == "dense":
            return sla.cho_solve(self._dense, rhs)
        if self._factor == "cg":
            if rhs.ndim > 1:
                return np.column_stack(
                    [self.solve_grounded(col) for col in rhs.T]
                )
            x, info = spla.cg(
                self.grounded, rhs, rtol=1e-12, atol=0.0, maxiter=20 * self.n,
                M=self._precond,
            )
            if info != 0:
                raise RuntimeError(f"conjugate gradient did not converge (info={info})")
            return x
        return self._factor.solve(rhs)

    def solve(self, rhs_full: np.ndarray) -> np.ndarray:
        """Solve with full-size rhs; ground coordinate pinned to potential 0."""
        x = np.zeros(self.n)
        x[self.keep] = self.solve_grounded(rhs_full[self.keep])
        return x

    def energy(self, f: np.ndarray) -> float:
        """Dirichlet energy sum over edges of (f(x)-f(y))^2."""
        d = f[self.edge_rows] - f[self.edge_cols]
        return float(d @ d)

    def factorization_error(self, seed: int = 0) -> float:
        """Relative error of solve(L x) against x for a random x."""
        g = stream(seed, TAG_GENERIC, 1)
        x = g.standard_normal(self.grounded.shape[0])
        y = self.grounded @ x
        back = self.solve_grounded(y)
        return float(np.linalg.norm(back - x) / np.linalg.norm(x))

    def _flag(self, *pts) -> bool:
        if self.semantics == "restricted":
            return False
        lo, hi = self.vertices[0], self.vertices[-1]
        margin = max(1, self.n // 8)
        return any(min(p - lo, hi - p) < margin for p in pts)

    def two_point(self, i: int, j: int) -> ResistanceQuery:
        kind = (
            "two-point-restricted"
            if self.semantics == "restricted"
            else "two-point-windowed"
        )
        li, lj = self.local_index(i), self.local_index(j)
        if li == lj:
            return ResistanceQuery(kind, i, j, 0.0, self._flag(i, j))
        rhs = np.zeros(self.n)
        rhs[li] += 1.0
        rhs[lj] -= 1.0
        x = self.solve(rhs)
        return ResistanceQuery(kind, i, j, float(x[li] - x[lj]), self._flag(i, j))

    def grounded_inverse_diag(self, chunk: int = 1024) -> np.ndarray:
        """Diagonal of the grounded inverse, by blocked identity solves."""
        m = self.grounded.shape[0]
        if m > _DIRECT_LIMIT:
            raise RuntimeError("inverse diagonal requires a direct factorization")
        out = np.empty(m)
        for c0 in range(0, m, chunk):
            c1 = min(m, c0 + chunk)
            rhs = np.zeros((m, c1 - c0))
            rhs[np.arange(c0, c1), np.arange(c1 - c0)] = 1.0
            sol = self.solve_grounded(rhs)
            out[c0:c1] = sol[np.arange(c0, c1), np.arange(c1 - c0)]
        return out

    def grounded_inverse(self) -> np.ndarray:
        """Dense inverse of the grounded Laplacian (direct paths only)."""
        m = self.grounded.shape[0]
        if m > _DIRECT_LIMIT:
            raise RuntimeError("dense inverse requires a direct factorization")
        self._ensure_factor()
        return self.solve_grounded(np.eye(m))


def assemble(env: Environment, vertices, ground: int | None = None,
             semantics: str = "window") -> LinearSystem:
    """Build a grounded SPD system on an interval (lo, hi) or explicit set."""
    if isinstance(vertices, tuple) and len(vertices) == 2:
        lo, hi = vertices
        verts = np.arange(lo, hi, dtype=np.int64)
    else:
        verts = np.unique(np.asarray(list(vertices), dtype=np.int64))
    if verts.size < 2:
        raise ValueError("system needs at least two vertices")
    if verts[0] < env.params.lo or verts[-1] >= env.params.hi:
        raise ValueError("vertices outside environment window")
    if ground is None:
        ground = int(verts[-1])
    return LinearSystem(env, verts, ground, semantics)


def two_point(sys: LinearSystem, i: int, j: int) -> ResistanceQuery:
    return sys.two_point(i, j)


def point_to_set(env: Environment, i: int, target: set, vertices=None,
                 semantics: str = "window") -> ResistanceQuery:
    """R(i, S): collapse S to ground, solve on the rest of the vertex set.

    Removing the rows and columns of S from the Laplacian over `vertices`
    grounds the whole set at once; diagonal entries keep the conductances
    into S, which is exactly the collapsed supernode.
    """
    target = {int(t) for t in target}
    if i in target:
        raise ValueError(f"source {i} belongs to the target set")
    if not target:
        raise ValueError("target set is empty")
    if vertices is None:
        vertices = (env.params.lo, env.params.hi)
    if isinstance(vertices, tuple):
        verts = np.arange(vertices[0], vertices[1], dtype=np.int64)
    else:
        verts = np.unique(np.asarray(list(vertices), dtype=np.int64))
    targets = np.fromiter(target, dtype=np.int64)
    if not np.all(np.isin(targets, verts)):
        raise ValueError("target vertices outside the vertex set")
    mask = ~np.isin(verts, targets)
    kept = verts[mask]
    n = len(verts)
    label = "S(size=%d)" % len(target)
    flag = semantics == "window" and _near_window_edge(env, i, kept)
    contiguous = (verts[-1] - verts[0]) == n - 1
    if contiguous and n >= _FRONTAL_MIN:
        if not (verts[0] <= i <= verts[-1]):
            raise ValueError(f"source {i} not in vertex set")
        r, c = _laplacian_edges(env, verts)
        deg = np.bincount(np.concatenate([r, c]), minlength=n).astype(float)
        gap = c - r
        grounds = {int(t - verts[0]) for t in target}
        val = _frontal_inverse_diag(
            n, r[gap >= 2], c[gap >= 2], deg, grounds, defer=int(i - verts[0])
        )
        return ResistanceQuery("point-to-set", i, label, float(val), flag)
    r, c = _laplacian_edges(env, verts)
    deg = np.bincount(np.concatenate([r, c]), minlength=n).astype(float)
    data = np.concatenate([-np.ones(len(r)), -np.ones(len(r)), deg])
    ii = np.concatenate([r, c, np.arange(n)])
    jj = np.concatenate([c, r, np.arange(n)])
    lap = sp.coo_matrix((data, (ii, jj)), shape=(n, n)).tocsr()
    sub = lap[mask][:, mask].tocsc()
    li = int(np.searchsorted(kept, i))
    if li >= len(kept) or kept[li] != i:
        raise ValueError(f"source {i} not in vertex set")
    rhs = np.zeros(len(kept))
    rhs[li] = 1.0
    if len(kept) <= _DENSE_LIMIT:
        u = sla.cho_solve(sla.cho_factor(sub.toarray()), rhs)
    else:
        u = spla.splu(sub).solve(rhs)
    return ResistanceQuery("point-to-set", i, label, float(u[li]), flag)


def _near_window_edge(env: Environment, i: int, kept: np.ndarray) -> bool:
    lo, hi = env.params.lo, env.params.hi - 1
    margin = max(1, env.params.n_vertices // 8)
    return min(i - lo, hi - i) < margin


_FRONTAL_MIN = 4096
_FRONTAL_BLOCK = 64


def _frontal_inverse_diag(n: int, long_rows: np.ndarray, long_cols: np.ndarray,
                          deg: np.ndarray, grounds, defer: int | None = None):
    """Inverse diagonal of a grounded path-plus-long-edges Laplacian.

    Eliminates vertices left to right in blocks; the dense frontier holds
    only endpoints of long edges crossing the current block, so fronts stay
    around beta*log(n) and the sweep is linear in n.  A reverse pass then
    recovers the inverse diagonal from the stored elimination columns.

    grounds is the set of local indices whose rows and columns are deleted
    (their entries in the result are 0).  With defer set, that vertex is
    eliminated last and only its inverse-diagonal entry is returned, as a
    float; no reverse pass runs.
    """
    gs = np.zeros(n, dtype=bool)
    gs[list(grounds)] = True
    if defer is not None and gs[defer]:
        raise ValueError("deferred vertex cannot be grounded")
    if long_rows.size:
        live = ~(gs[long_rows] | gs[long_cols])
        long_rows, long_cols = long_rows[live], long_cols[live]
        order = np.argsort(long_rows, kind="stable")
        long_rows, long_cols = long_rows[order], long_cols[order]
    blocks = range(0, n, _FRONTAL_BLOCK)
    starts = np.searchsorted(long_rows, np.arange(0, n + _FRONTAL_BLOCK, _FRONTAL_BLOCK))
    pos = np.full(n, -1, dtype=np.int64)
    front = np.empty(0, dtype=np.int64)
    M = np.zeros((0, 0))
    tape = [] if defer is None else None
    for bi, b0 in enumerate(blocks):
        b1 = min(n, b0 + _FRONTAL_BLOCK)
        er = long_rows[starts[bi]:starts[bi + 1]]
        ec = long_cols[starts[bi]:starts[bi + 1]]
        blk = np.arange(b0, b1)
        blk = blk[~gs[blk]]
        cand = [blk, ec]
        if b1 < n and not gs[b1] and not gs[b1 - 1]:
            cand.append(np.array([b1]))
        cand = np.unique(np.concatenate(cand))
        fresh = cand[pos[cand] < 0]
        prev = front
        if fresh.size:
            pos[fresh] = len(front) + np.arange(len(fresh))
            front = np.concatenate([front, fresh])
            grown = np.zeros((len(front), len(front)))
            grown[:len(prev), :len(prev)] = M
            grown[pos[fresh], pos[fresh]] = deg[fresh]
            M = grown
        nn = blk[blk + 1 < n]
        nn = nn[~gs[nn + 1]]
        ar = np.concatenate([er, nn])
        ac = np.concatenate([ec, nn + 1])
        np.subtract.at(M, (pos[ar], pos[ac]), 1.0)
        np.subtract.at(M, (pos[ac], pos[ar]), 1.0)
        eids = blk if defer is None else blk[blk != defer]
        if eids.size == 0:
            continue
        pe = pos[eids]
        keep_mask = np.ones(len(front), dtype=bool)
        keep_mask[pe] = False
        pk = np.flatnonzero(keep_mask)
        kids = front[pk]
        cho = sla.cho_factor(M[np.ix_(pe, pe)])
        Mek = M[np.ix_(pe, pk)]
        G = sla.cho_solve(cho, Mek)
        M = M[np.ix_(pk, pk)] - Mek.T @ G
        if tape is not None:
            ee_inv = sla.cho_solve(cho, np.eye(len(eids)))
            tape.append((eids, kids, prev, G, ee_inv))
        pos[eids] = -2
        front = kids
        pos[front] = np.arange(len(front))
    if defer is not None:
        if front.size != 1 or front[0] != defer:
            raise InvariantViolation("deferred vertex did not survive elimination")
        return 1.0 / M[0, 0]
    out = np.zeros(n)
    W = np.zeros((0, 0))
    scratch = pos  # reuse as an id -> position lookup
    for eids, kids, prev, G, ee_inv in reversed(tape):
        GW = G @ W
        Xee = ee_inv + GW @ G.T
        out[eids] = np.diag(Xee)
        if prev.size:
            full = np.empty((len(eids) + len(kids), len(eids) + len(kids)))
            ne = len(eids)
            full[:ne, :ne] = Xee
            full[:ne, ne:] = -GW
            full[ne:, :ne] = -GW.T
            full[ne:, ne:] = W
            scratch[eids] = np.arange(ne)
            scratch[kids] = ne + np.arange(len(kids))
            sel = scratch[prev]
            W = full[np.ix_(sel, sel)]
        else:
            W = np.zeros((0, 0))
    return out


def _frontal_long_edges(sys: LinearSystem):
    gap = sys.edge_cols - sys.edge_rows
    long = gap >= 2
    return sys.edge_rows[long], sys.edge_cols[long]


def resistance_profile(sys: LinearSystem, source: int) -> np.ndarray:
    """R(source, y) for every y in the system, aligned with sys.vertices.

    Grounding at the source makes the profile the inverse diagonal itself.
    Large interval systems use the frontal sweep; the rest go through the
    identity R(s,y) = M_ss + M_yy - 2 M_sy with M the inverse of the
    grounded Laplacian extended by a zero row/column at the ground.
    """
    ls = sys.local_index(source)
    if sys.contiguous and sys.n >= _FRONTAL_MIN:
        lr, lc = _frontal_long_edges(sys)
        return _frontal_inverse_diag(sys.n, lr, lc, sys.lap.diagonal(), {ls})
    diag_g = sys.grounded_inverse_diag()
    diag = np.zeros(sys.n)
    diag[sys.keep] = diag_g
    rhs = np.zeros(sys.n)
    rhs[ls] = 1.0
    col = sys.solve(rhs)  # M[:, source], zero at ground
    return diag[ls] + diag - 2.0 * col


def resistance_matrix(sys: LinearSystem) -> np.ndarray:
    """All-pairs R over the system's vertices (dense; small and mid n only)."""
    minv = sys.grounded_inverse()
    d = np.zeros(sys.n)
    d[sys.keep] = np.diag(minv)
    full = np.zeros((sys.n, sys.n))
    ix = np.flatnonzero(sys.keep)
    full[np.ix_(ix, ix)] = minv
    return d[:, None] + d[None, :] - 2.0 * full


def grounded_subset_system(env: Environment, members: np.ndarray):
    """Grounded system of a vertex subset: full window degrees on the
    diagonal, adjacency restricted to the subset.  The complement acts as
    a collapsed grounded supernode, so the matrix is SPD."""
    r, c = _laplacian_edges(env, members)
    deg = env.degrees[members - env.params.lo].astype(float)
    nb = len(members)
    data = np.concatenate([-np.ones(len(r)), -np.ones(len(r)), deg])
    ii = np.concatenate([r, c, np.arange(nb)])
    jj = np.concatenate([c, r, np.arange(nb)])
    return sp.coo_matrix((data, (ii, jj)), shape=(nb, nb)).tocsc(), deg


def solve_grounded_subset(env: Environment, members: np.ndarray, rhs: np.ndarray):
    mat, _ = grounded_subset_system(env, members)
    if len(members) <= 400:
        return sla.cho_solve(sla.cho_factor(mat.toarray()), rhs)
    return spla.splu(mat).solve(rhs)


def ball_complement_resistance(env: Environment, ball: ResistanceBall) -> float:
    """R(0, complement of the ball) within the window."""
    members = ball.members
    rhs = np.zeros(len(members))
    origin = int(np.searchsorted(members, 0))
    rhs[origin] = 1.0
    u = solve_grounded_subset(env, members, rhs)
    return float(u[origin])


def build_ball(env: Environment, r: float) -> ResistanceBall:
    """Resistance ball B_r(0) = {y : R(0,y) < r} on a centered window.

    The flag is set when the ball plausibly feels the truncation: a member
    within W/8 of the window edge, or R from 0 to the two window ends
    below r (the sub-level set would continue past the window).
    """
    lo, hi = env.params.lo, env.params.hi
    if lo >= 0 or hi <= 0 or (hi - 1) != -lo:
        raise ValueError("build_ball needs a window centered on 0")
    w = hi - 1
    n = hi - lo
    if n >= _FRONTAL_MIN:
        # full-window profile straight from the frontal engine; skips the
        # assembled system (its matrix is never factored on this path)
        lr = env.edges[:, 0].astype(np.int64) - lo
        lc = env.edges[:, 1].astype(np.int64) - lo
        deg = env.degrees.astype(float)
        prof = _frontal_inverse_diag(n, lr, lc, deg, {w})
        vertices = np.arange(lo, hi, dtype=np.int64)
    else:
        sys = assemble(env, (lo, hi), ground=0, semantics="window")
        prof = resistance_profile(sys, 0)
        vertices = sys.vertices
    # strict sub-level set; the guard keeps solver noise from pulling in
    # vertices whose exact resistance ties with r (paths, small lattices)
    members = vertices[prof < r - 1e-9 * max(1.0, r)]
    volume = int(env.degrees[members - lo].sum())
    touches = bool((np.abs(members) >= w - w // 8).any())
    if not touches:
        if n >= _FRONTAL_MIN:
            ends_val = float(
                _frontal_inverse_diag(n, lr, lc, deg, {0, n - 1}, defer=w)
            )
        else:
            ends_val = point_to_set(env, 0, {lo, hi - 1}, semantics="window").value
        touches = ends_val < r
    return ResistanceBall(0, r, members, volume, touches, w)


def lambda_hat(beta: float, n: int, replicates: int, seed: int,
               mode: str = "all-pairs", subsample: int = 64) -> LambdaEstimate:
    """Estimate the maximal expected two-point resistance on [0, n).

    Per-pair resistances are averaged across replicates first and the
    maximum is taken afterwards, matching the definition (max of
    expectations).  The per-replicate argmax distribution is recorded as a
    diagnostic.  Fast mode (for n beyond all-pairs reach) tracks the
    endpoint pair plus a fixed random pair subsample.
    """
    from .model import ModelParams, sample_environment
    from .rng import replicate_seed

    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    if mode not in ("all-pairs", "fast"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "all-pairs" and n > 1 << 13:
        raise ValueError("all-pairs mode supports n <= 8192")
    params = ModelParams(beta, 0, n)
    if n == 1:
        return LambdaEstimate(beta, 1, 0.0, 0.0, replicates, mode, (0, 0))

    if mode == "all-pairs":
        acc = np.zeros((n, n))
        acc2 = np.zeros((n, n))
        rep_argmax: dict = {}
        for rep in range(replicates):
            env = sample_environment(params, replicate_seed(seed, rep))
            sys = assemble(env, (0, n), semantics="restricted")
            rmat = resistance_matrix(sys)
            acc += rmat
            acc2 += rmat * rmat
            pair = np.unravel_index(np.argmax(rmat), rmat.shape)
            pair = (int(min(pair)), int(max(pair)))
            rep_argmax[pair] = rep_argmax.get(pair, 0) + 1
        mean = acc / replicates
        var = np.maximum(acc2 / replicates - mean * mean, 0.0)
        se = np.sqrt(var / max(replicates - 1, 1))
        flat = np.argmax(mean)
        pair = np.unravel_index(flat, mean.shape)
        pair = (int(min(pair)), int(max(pair)))
        best = float(mean[pair])
        best_se = float(se[pair])
        tied = np.argwhere(mean >= best - best_se)
        tied_pairs = sorted(
            {(int(min(a, b)), int(max(a, b))) for a, b in tied if a != b}
        )[:8]
        counts = dict(
            sorted(rep_argmax.items(), key=lambda kv: -kv[1])[:8]
        )
        ep_mean = float(mean[0, n - 1])
        ep_se = float(se[0, n - 1])
        return LambdaEstimate(
            beta, n, best, best_se, replicates, mode, pair,
            {f"{a},{b}": c for (a, b), c in counts.items()}, tied_pairs,
            ep_mean, ep_se,
        )

    # fast mode: endpoint pair + a fixed random pair subsample
    g = stream(seed, TAG_GENERIC, n)
    subsample = min(subsample, n * (n - 1) // 2 - 1)
    pairs = [(0, n - 1)]
    while len(pairs) < subsample + 1:
        a, b = sorted(int(v) for v in g.integers(0, n, size=2))
        if a != b and (a, b) not in pairs:
            pairs.append((a, b))
    vals = np.zeros((replicates, len(pairs)))
    for rep in range(replicates):
        env = sample_environment(params, replicate_seed(seed, rep))
        sys = assemble(env, (0, n), semantics="restricted")
        for c, (a, b) in enumerate(pairs):
            vals[rep, c] = sys.two_point(a, b).value
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / np.sqrt(replicates)
    best_c = int(np.argmax(mean))
    return LambdaEstimate(
        beta, n, float(mean[best_c]), float(se[best_c]), replicates, "fast",
        pairs[best_c], {}, [], float(mean[0]), float(se[0]),
    )
