"""One-dimensional long-range percolation environments.

Vertices are integers.  Nearest-neighbor edges (x, x+1) are always present
and stored implicitly.  For every pair at distance k >= 2 an independent
long edge is present with probability

    p(k) = 1 - (1 - 1/k^2)^beta,

the closed form of 1 - exp(-beta * I(k)) where I(k) is the integral of
|u - v|^{-2} over the two unit cells at distance k; I(k) = log(k^2/(k^2-1)).
The closed form is validated against direct quadrature in the test suite.

Two samplers are provided: an eager one that fills a finite window in
O(window + edges) expected time, and a lazy one over all of Z that reveals
the full long-edge neighborhood of a vertex on demand and stays exactly
consistent across reveals.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import binom as _binom
from scipy.special import zeta as _hurwitz_zeta

from .rng import TAG_EAGER_CLASS, TAG_LAZY_CHAIN, stream, zigzag

__all__ = [
    "ModelParams",
    "Environment",
    "LazyEnvironment",
    "edge_probability",
    "mean_degree",
    "sample_environment",
    "centered_window",
    "bridging_statistics",
    "unbridged_mask",
]


def edge_probability(beta: float, k: int) -> float:
    """Probability of a long edge between vertices at distance k.

    k = 1 returns 1.0 (nearest neighbors are always connected).
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if k < 1:
        raise ValueError(f"distance must be >= 1, got {k}")
    if k == 1:
        return 1.0
    # 1 - (1 - k^-2)^beta, stable for large k where p ~ beta/k^2
    return -math.expm1(beta * math.log1p(-1.0 / (k * k)))


def _edge_probability_array(beta: float, k: np.ndarray) -> np.ndarray:
    return -np.expm1(beta * np.log1p(-1.0 / (k.astype(float) ** 2)))


@lru_cache(maxsize=None)
def mean_degree(beta: float) -> float:
    """Expected degree of a vertex: 2 + 2 * sum_{k>=2} p(k).

    The series is summed directly to k = 10^4; the remainder is the
    binomial expansion of 1-(1-x)^beta at x = 1/k^2, whose term-wise sums
    are Hurwitz zeta tails.  Absolute accuracy is well below 1e-12.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    cutoff = 10_000
    head = math.fsum(edge_probability(beta, k) for k in range(2, cutoff + 1))
    tail = 0.0
    for j in range(1, 64):
        term = (-1) ** (j + 1) * float(_binom(beta, j)) * float(
            _hurwitz_zeta(2 * j, cutoff + 1)
        )
        tail += term
        if abs(term) < 1e-17:
            break
    return 2.0 + 2.0 * (head + tail)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: beta and a half-open vertex window [lo, hi)."""

    beta: float
    lo: int
    hi: int

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.hi <= self.lo:
            raise ValueError(f"empty window [{self.lo}, {self.hi})")

    @property
    def n_vertices(self) -> int:
        return self.hi - self.lo

    @property
    def vertices(self) -> np.ndarray:
        return np.arange(self.lo, self.hi, dtype=np.int64)


def centered_window(beta: float, half_width: int) -> ModelParams:
    """Window [-W, W] as half-open [-W, W+1), symmetric around 0."""
    return ModelParams(beta=beta, lo=-half_width, hi=half_width + 1)


class Environment:
    """Immutable sampled environment on a finite window.

    Long edges are stored as a sorted (E, 2) array with i < j; adjacency
    lists (long edges only, neighbors sorted) are precomputed.  Nearest
    neighbors are implicit.  Degrees count only edges with both endpoints
    inside the window; consumers that approximate the infinite model add
    their own boundary accounting.
    """

    __slots__ = ("params", "seed", "edges", "degrees", "_offsets", "_targets")

    def __init__(self, params: ModelParams, edges: np.ndarray, seed: int = 0):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
        self._validate(params, edges)
        self.params = params
        self.seed = seed
        self.edges = edges
        self.edges.setflags(write=False)
        n = params.n_vertices
        counts = np.zeros(n, dtype=np.int64)
        if edges.size:
            counts += np.bincount(edges[:, 0] - params.lo, minlength=n)
            counts += np.bincount(edges[:, 1] - params.lo, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        targets = np.empty(offsets[-1], dtype=np.int64)
        if edges.size:
            src = np.concatenate([edges[:, 0], edges[:, 1]]) - params.lo
            dst = np.concatenate([edges[:, 1], edges[:, 0]])
            order = np.lexsort((dst, src))
            targets[:] = dst[order]
        self._offsets = offsets
        self._targets = targets
        nn = np.full(n, 2, dtype=np.int64)
        if n >= 1:
            nn[0] -= 1
            nn[-1] -= 1
        self.degrees = nn + counts
        self.degrees.setflags(write=False)

    @staticmethod
    def _validate(params: ModelParams, edges: np.ndarray) -> None:
        if edges.size == 0:
            return
        if edges.min() < params.lo or edges.max() >= params.hi:
            raise ValueError("edge endpoint outside window")
        gaps = edges[:, 1] - edges[:, 0]
        if (gaps < 2).any():
            raise ValueError("long edges must span distance >= 2")
        if len(edges) > 1 and (np.diff(edges, axis=0) == 0).all(axis=1).any():
            raise ValueError("duplicate long edge")

    @classmethod
    def from_edges(cls, params: ModelParams, edges, seed: int = 0) -> "Environment":
        return cls(params, np.asarray(list(edges), dtype=np.int64).reshape(-1, 2), seed)

    @classmethod
    def pure_path(cls, beta: float, lo: int, hi: int) -> "Environment":
        return cls(ModelParams(beta, lo, hi), np.empty((0, 2), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return self.params.n_vertices

    @property
    def n_long_edges(self) -> int:
        return len(self.edges)

    def degree(self, x: int) -> int:
        return int(self.degrees[x - self.params.lo])

    def long_neighbors(self, x: int) -> np.ndarray:
        v = x - self.params.lo
        return self._targets[self._offsets[v] : self._offsets[v + 1]]

    def neighbors(self, x: int) -> np.ndarray:
        """All neighbors of x inside the window, nearest neighbors included."""
        nn = [y for y in (x - 1, x + 1) if self.params.lo <= y < self.params.hi]
        return np.sort(np.concatenate([np.array(nn, dtype=np.int64), self.long_neighbors(x)]))

    def has_long_edge(self, i: int, j: int) -> bool:
        if i > j:
            i, j = j, i
        nbrs = self.long_neighbors(i)
        pos = np.searchsorted(nbrs, j)
        return pos < len(nbrs) and nbrs[pos] == j

    def with_extra_edge(self, i: int, j: int) -> "Environment":
        """Copy of this environment with one more long edge (monotonicity probes)."""
        if i > j:
            i, j = j, i
        if j - i < 2:
            raise ValueError("extra edge must span distance >= 2")
        if self.has_long_edge(i, j):
            raise ValueError(f"edge ({i},{j}) already present")
        edges = np.vstack([self.edges, [[i, j]]]) if self.edges.size else np.array([[i, j]])
        return Environment(self.params, edges, self.seed)

    # --- serialization ---------------------------------------------------

    def dumps(self) -> str:
        lines = [
            f"# beta={self.params.beta!r} lo={self.params.lo} hi={self.params.hi} "
            f"seed={self.seed}"
        ]
        lines.extend(f"{i} {j}" for i, j in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Environment":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise ValueError("missing header line")
        fields = dict(tok.split("=") for tok in lines[0][1:].split())
        params = ModelParams(float(fields["beta"]), int(fields["lo"]), int(fields["hi"]))
        edges = [tuple(map(int, ln.split())) for ln in lines[1:]]
        return cls.from_edges(params, edges, seed=int(fields["seed"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Environment":
        with open(path) as fh:
            return cls.loads(fh.read())


def sample_environment(params: ModelParams, seed: int) -> Environment:
    """Sample a finite-window environment.

    Dense distance classes (small k) each own a keyed stream and generate
    edge positions by geometric skipping.  The sparse tail, where a class
    holds O(1) edges at most, is handled in one vectorized pass: per-class
    counts from a single binomial draw, then uniform distinct positions.
    Expected cost is O(sqrt(window) streams + number of edges).
    """
    n = params.n_vertices
    pieces = []
    head_max = min(n - 1, 16 + math.isqrt(n))
    for k in range(2, head_max + 1):
        limit = n - k  # admissible left endpoints: lo + [0, limit)
        p = edge_probability(params.beta, k)
        g = stream(seed, TAG_EAGER_CLASS, k)
        pos = -1
        while pos < limit:
            want = max(8, int((limit - pos) * p * 1.25) + 8)
            steps = g.geometric(p, size=want)
            hits = pos + np.cumsum(steps)
            pos = int(hits[-1])
            hits = hits[hits < limit]
            if hits.size:
                left = params.lo + hits
                pieces.append(np.column_stack([left, left + k]))
    if head_max + 1 < n:
        ks = np.arange(head_max + 1, n, dtype=np.int64)
        m = n - ks
        # payload 1 is free: distance classes start at 2
        g = stream(seed, TAG_EAGER_CLASS, 1)
        counts = g.binomial(m, _edge_probability_array(params.beta, ks))
        for idx in np.nonzero(counts)[0]:
            k, c, mk = int(ks[idx]), int(counts[idx]), int(m[idx])
            pos = np.unique(g.integers(0, mk, size=c))
            while pos.size < c:
                extra = g.integers(0, mk, size=c - pos.size)
                pos = np.unique(np.concatenate([pos, extra]))
            left = params.lo + pos
            pieces.append(np.column_stack([left, left + k]))
    edges = np.concatenate(pieces) if pieces else np.empty((0, 2), dtype=np.int64)
    return Environment(params, edges, seed)


def expected_long_edges(beta: float, n: int) -> float:
    """Exact mean number of long edges in a window of n vertices."""
    k = np.arange(2, n)
    if k.size == 0:
        return 0.0
    return float(np.sum((n - k) * _edge_probability_array(beta, k)))


# --- lazy sampler over all of Z ------------------------------------------


def _skip_survival(a: int, b, beta: float) -> float:
    """P(no long edge at any distance in [a, b]), b = None meaning infinity.

    Product of (1 - p(k)) telescopes: ((a-1)(b+1) / (a b))^beta.
    """
    if b is None:
        return ((a - 1) / a) ** beta
    if b < a:
        return 1.0
    return (((a - 1) * (b + 1)) / (a * b)) ** beta


def _sample_side_segments(g, beta: float, segments) -> list:
    """Distances with an edge, over disjoint segments of undecided distances.

    Each segment is (a, b) with b = None for the infinite tail.  Sequential
    inversion: u uniform decides the smallest j >= k with survival(k..j) <= u,
    using the closed-form survival product, so cost is O(edges + segments).
    """
    out = []
    for a, b in segments:
        k = a
        while b is None or k <= b:
            u = g.random()
            if u < _skip_survival(k, b, beta):
                break  # no further edge in this segment
            w = u ** (1.0 / beta)
            # smallest j >= k with (k-1)(j+1)/(kj) <= w
            denom = w * k - (k - 1)
            j = max(k, math.ceil((k - 1) / denom - 1e-12)) if denom > 0 else k
            while _skip_survival(k, j, beta) > u:
                j += 1
            while j > k and _skip_survival(k, j - 1, beta) <= u:
                j -= 1
            out.append(j)
            k = j + 1
    return out


class LazyEnvironment:
    """Environment on all of Z, revealed one vertex neighborhood at a time.

    For each vertex and side (right: partners x+k, left: partners x-k) the
    full set of long edges on that side is drawn in one pass from a keyed
    stream.  A pair (x, y) is already decided when either endpoint has
    revealed the facing side; reveals skip decided distances and reuse the
    stored outcome, which keeps every pair Bernoulli(p(k)) independent and
    consistent no matter the reveal order.
    """

    def __init__(self, beta: float, seed: int):
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.beta = beta
        self.seed = seed
        self._right: dict[int, set] = {}
        self._left: dict[int, set] = {}
        self._right_keys: list[int] = []
        self._left_keys: list[int] = []

    @property
    def revealed_vertices(self) -> int:
        return len(set(self._right) | set(self._left))

    def _reveal_side(self, x: int, side: int) -> None:
        # side 0: partners x+k (right); side 1: partners x-k (left)
        own, own_keys = (self._right, self._right_keys) if side == 0 else (
            self._left,
            self._left_keys,
        )
        if x in own:
            return
        facing, facing_keys = (self._left, self._left_keys) if side == 0 else (
            self._right,
            self._right_keys,
        )
        sign = 1 if side == 0 else -1
        # distances already decided by partners that revealed their facing side
        decided_present = []
        excluded = []
        if side == 0:
            i0 = bisect.bisect_left(facing_keys, x + 2)
            partners = facing_keys[i0:]
        else:
            i1 = bisect.bisect_right(facing_keys, x - 2)
            partners = facing_keys[:i1]
        for y in partners:
            k = sign * (y - x)
            excluded.append(k)
            if k in facing[y]:
                decided_present.append(k)
        excluded.sort()
        segments = []
        a = 2
        for e in excluded:
            if e > a:
                segments.append((a, e - 1))
            a = max(a, e + 1)
        segments.append((a, None))
        g = stream(self.seed, TAG_LAZY_CHAIN, (zigzag(x) << 1) | side)
        present = set(decided_present)
        present.update(_sample_side_segments(g, self.beta, segments))
        own[x] = present
        bisect.insort(own_keys, x)

    def reveal_incident(self, x: int) -> list:
        """All long edges at x, as (i, j) pairs with i < j.  Memoized."""
        self._reveal_side(x, 0)
        self._reveal_side(x, 1)
        right = sorted(self._right[x])
        left = sorted(self._left[x])
        return [(x - k, x) for k in reversed(left)] + [(x, x + k) for k in right]

    def long_neighbors(self, x: int) -> list:
        self.reveal_incident(x)
        return sorted(
            [x - k for k in self._left[x]] + [x + k for k in self._right[x]]
        )

    def degree(self, x: int) -> int:
        self.reveal_incident(x)
        return 2 + len(self._left[x]) + len(self._right[x])

    def neighbors(self, x: int) -> list:
        return sorted([x - 1, x + 1] + self.long_neighbors(x))

    def has_long_edge(self, i: int, j: int) -> bool:
        if i > j:
            i, j = j, i
        if j - i < 2:
            raise ValueError("not a long-edge pair")
        if i in self._right:
            return (j - i) in self._right[i]
        self._reveal_side(j, 1)
        return (j - i) in self._left[j]


# --- bridging diagnostics -------------------------------------------------


def unbridged_mask(env: Environment, m: int, n: int) -> np.ndarray:
    """For i in [1, m-2]: True when no edge joins [0, i*m^n) to [(i+1)*m^n, m^{n+1}).

    A single pass over the edge list marks the contiguous range of block
    indices each edge bridges, via a difference array.
    """
    scale = m**n
    window = m ** (n + 1)
    if env.params.lo > 0 or env.params.hi < window:
        raise ValueError(f"environment window does not cover [0, {window})")
    diff = np.zeros(m, dtype=np.int64)
    for a, b in env.edges:
        i_lo = max(1, a // scale + 1)
        i_hi = min(m - 2, b // scale - 1)
        if i_lo <= i_hi:
            diff[i_lo] += 1
            diff[i_hi + 1] -= 1
    bridged = np.cumsum(diff)[1 : m - 1] > 0
    return ~bridged


def bridging_statistics(
    beta: float,
    m: int,
    n: int,
    replicates: int,
    seed: int,
    forced_edges=(),
) -> np.ndarray:
    """Empirical probability that block [i*m^n, (i+1)*m^n) is unbridged.

    Returns frequencies indexed by i - 1 for i in [1, m-2].  forced_edges
    are injected into every replicate (used to pin definitional cases).
    """
    if m < 3:
        raise ValueError(f"m must be >= 3, got {m}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    window = m ** (n + 1)
    if window > 1 << 26:
        raise ValueError(f"window [0, {window}) too large")
    from .rng import replicate_seed

    params = ModelParams(beta, 0, window)
    counts = np.zeros(m - 2, dtype=np.int64)
    for rep in range(replicates):
        env = sample_environment(params, replicate_seed(seed, rep))
        for i, j in forced_edges:
            if not env.has_long_edge(i, j):
                env = env.with_extra_edge(i, j)
        counts += unbridged_mask(env, m, n)
    return counts / replicates
