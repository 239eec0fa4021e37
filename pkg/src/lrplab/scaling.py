"""Scaling-law estimation on top of the resistance and walk engines.

Exponents are measured, never assumed: delta comes from the growth of the
maximal expected two-point resistance on [0, n), spectral dimensions from
even-time return probabilities, and the exit-time exponent from exact
mean exit times of resistance balls.  Tail curves and the good-radius
frequency quantify the concentration events behind those exponents.

The exponent delta has no closed form; every scale function here consumes
the value estimated in the same run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import t as _student_t

from .errors import InvariantViolation, NumericValidityError
from .model import Environment, centered_window, sample_environment
from .resistance import (
    assemble,
    ball_complement_resistance,
    build_ball,
    lambda_hat,
)
from .rng import replicate_seed
from .walk import diagonal_heat_kernel, expected_exit_time, suggest_half_width

DEFAULT_WINDOW_MULTIPLIER = 8.0
# Balls reach much farther than r^{1/delta} at desk scale (window-graph
# resistances grow with a small effective exponent), so ball windows start
# wider and escalate on flagged draws.
DEFAULT_BALL_MULTIPLIER = 64.0

__all__ = [
    "ExponentFit",
    "ScalingFunctions",
    "TailCurve",
    "SpectralEstimate",
    "ExitExponent",
    "BallSampleSet",
    "fit_power_law",
    "estimate_delta",
    "spectral_dimension_annealed",
    "spectral_dimension_quenched",
    "exit_time_exponent",
    "ball_samples",
    "tail_curve",
    "good_radius_frequency",
    "fit_tail_slope",
    "dyadic_chain_sequence",
    "dyadic_chain_check",
    "wilson_interval",
]


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class ExponentFit:
    log_x: np.ndarray
    log_y: np.ndarray
    log_se: np.ndarray  # per-point standard errors in log space (0 = unweighted)
    slope: float
    intercept: float
    slope_halfwidth: float  # 95% half-width
    r_squared: float
    residual_max: float

    @property
    def n_points(self) -> int:
        return len(self.log_x)

    def predict(self, x) -> np.ndarray:
        return np.exp(self.intercept + self.slope * np.log(np.asarray(x, dtype=float)))


def fit_power_law(points) -> ExponentFit:
    """Weighted least-squares power-law fit log y = a log x + b.

    points: iterable of (x, y) or (x, y, se_y).  Inverse-variance weights
    use the delta-method log errors se_y / y; if any point lacks a usable
    error the fit is unweighted.  The 95% slope half-width uses a Student
    t quantile and is inflated by the reduced chi-square when > 1.
    """
    rows = [tuple(map(float, p)) for p in points]
    if len(rows) < 3:
        raise ValueError("need at least 3 points to fit")
    x = np.array([p[0] for p in rows])
    y = np.array([p[1] for p in rows])
    if (x <= 0).any() or (y <= 0).any():
        raise ValueError("power-law fit needs positive x and y")
    se = np.array([p[2] if len(p) > 2 else 0.0 for p in rows])
    lx, ly = np.log(x), np.log(y)
    lse = np.where(y > 0, se / y, 0.0)
    weighted = bool((lse > 0).all())
    w = 1.0 / lse**2 if weighted else np.ones_like(lx)
    sw = w.sum()
    mx = (w * lx).sum() / sw
    my = (w * ly).sum() / sw
    sxx = (w * (lx - mx) ** 2).sum()
    if sxx <= 0:
        raise ValueError("degenerate fit: all x identical")
    slope = (w * (lx - mx) * (ly - my)).sum() / sxx
    intercept = my - slope * mx
    resid = ly - (intercept + slope * lx)
    dof = len(rows) - 2
    chi2 = (w * resid**2).sum()
    if weighted:
        var_slope = 1.0 / sxx
        scale = max(1.0, chi2 / dof) if dof > 0 else 1.0
        var_slope *= scale
    else:
        var_slope = (chi2 / dof) / sxx if dof > 0 else 0.0
    tq = float(_student_t.ppf(0.975, dof)) if dof > 0 else float("inf")
    half = tq * math.sqrt(var_slope) if dof > 0 else float("nan")
    sst = (w * (ly - my) ** 2).sum()
    r2 = 1.0 - chi2 / sst if sst > 0 else 1.0
    return ExponentFit(lx, ly, lse, float(slope), float(intercept), float(half),
                       float(r2), float(np.abs(resid).max()))


@dataclass
class ScalingFunctions:
    """Scale functions generated by an estimated delta.

    volume_scale(r) = r^{1/delta} governs ball volumes; resistance_scale
    is the identity (resistance metric); walk_radius is the inverse of
    r -> volume_scale(r) * resistance_scale(r) and gives the resistance
    radius reached in a given time; return_scale(t) = volume_scale(
    walk_radius(t)) sets the return-probability decay t^{-1/(1+delta)}.
    """

    delta_hat: float

    def __post_init__(self):
        if not 0 < self.delta_hat < 1:
            raise ValueError(
                f"delta estimate {self.delta_hat} outside (0, 1); scaling "
                "functions are not defined"
            )

    def volume_scale(self, r):
        return np.asarray(r, dtype=float) ** (1.0 / self.delta_hat)

    def resistance_scale(self, r):
        return np.asarray(r, dtype=float)

    def walk_radius(self, t):
        return np.asarray(t, dtype=float) ** (self.delta_hat / (1.0 + self.delta_hat))

    def return_scale(self, t):
        return np.asarray(t, dtype=float) ** (1.0 / (1.0 + self.delta_hat))

    @property
    def exit_time_exponent(self) -> float:
        return (1.0 + self.delta_hat) / self.delta_hat

    @property
    def return_exponent(self) -> float:
        return 1.0 / (1.0 + self.delta_hat)

    @property
    def spectral_dimension(self) -> float:
        return 2.0 / (1.0 + self.delta_hat)

    def inverse_identity_error(self, r_grid=None) -> float:
        """max relative error of walk_radius(volume_scale(r) * r) = r."""
        if r_grid is None:
            r_grid = np.exp(np.linspace(0.0, 12.0, 25))
        r = np.asarray(r_grid, dtype=float)
        back = self.walk_radius(self.volume_scale(r) * self.resistance_scale(r))
        return float(np.max(np.abs(back - r) / r))


def _lambda_task(args):
    beta, n, replicates, seed, mode = args
    return lambda_hat(beta, n, replicates, seed, mode=mode)


def collect_lambda(beta: float, n_grid, replicates: int, seed: int, pmap=None):
    """One LambdaEstimate per grid point; seeds derive from the point index."""
    n_grid = sorted(int(n) for n in n_grid)
    tasks = [
        (beta, n, replicates, replicate_seed(seed, i),
         "all-pairs" if n <= 1 << 10 else "fast")
        for i, n in enumerate(n_grid)
    ]
    mapper = pmap or map
    return list(mapper(_lambda_task, tasks))


def estimate_delta(beta: float, n_grid, replicates: int, seed: int,
                   lambda_source=None, pmap=None):
    """Fit the growth exponent of the maximal expected resistance.

    lambda_source(n) -> (estimate, se) may replace the resistance engine
    (plumbing tests).  Returns (ScalingFunctions, ExponentFit).
    """
    n_grid = sorted(int(n) for n in n_grid)
    if len(n_grid) < 3:
        raise ValueError("n_grid needs at least 3 points")
    if lambda_source is not None:
        points = [(n, *lambda_source(n)) for n in n_grid]
    else:
        ests = collect_lambda(beta, n_grid, replicates, seed, pmap)
        points = [(e.n, e.estimate, e.se) for e in ests]
    fit = fit_power_law(points)
    return ScalingFunctions(fit.slope), fit


@dataclass
class SpectralEstimate:
    flavor: str  # annealed | quenched
    fit: ExponentFit
    spectral_dimension: float
    discard_rate: float
    environments_used: int
    times: np.ndarray = field(default_factory=lambda: np.array([]))
    mean_p: np.ndarray = field(default_factory=lambda: np.array([]))
    se_p: np.ndarray = field(default_factory=lambda: np.array([]))
    window_escalations: int = 0


def _check_even_grid(n_grid) -> np.ndarray:
    times = np.asarray(sorted(int(n) for n in n_grid), dtype=np.int64)
    if times.size < 3:
        raise ValueError("time grid needs at least 3 points")
    if (times % 2 != 0).any() or times[0] < 2:
        raise ValueError("time grid must contain even times >= 2")
    return times


def _annealed_trace_task(args):
    """One annealed sample, escalating the window until the leak is
    negligible.  Retry draws are fresh environments (fine for annealed
    averaging); the escalation count is returned for accounting."""
    beta, w, half_times, env_seed, leak_rel_tol, retries = args
    for level in range(retries + 1):
        seed_l = env_seed if level == 0 else replicate_seed(env_seed, level)
        env = sample_environment(centered_window(beta, w << level), seed_l)
        trace = diagonal_heat_kernel(env, 0, list(half_times))
        if trace.total_leak <= leak_rel_tol * trace.p2n[-1]:
            return trace.p2n, level, True
    return trace.p2n, retries, False


def spectral_dimension_annealed(
    beta: float,
    n_grid,
    replicates: int,
    seed: int,
    window_multiplier: float = DEFAULT_WINDOW_MULTIPLIER,
    window_max=None,
    max_discard: float = 0.05,
    leak_rel_tol: float = 0.05,
    window_growth_retries: int = 3,
    trace_source=None,
    pmap=None,
) -> SpectralEstimate:
    """Slope of log E[p_n(0,0)] over even times n; d_s = -2 * slope.

    Averages exact per-environment return probabilities over fresh
    environments.  Long edges put a sliver of mass at the window boundary
    in almost every environment, so a trace counts as leaky only when the
    absorbed mass is non-negligible next to the measured value (leak >
    leak_rel_tol * p at the largest time; absorption biases p downward by
    at most the leak).  A leaky draw is retried at doubled windows up to
    window_growth_retries times; draws still leaky after that are
    discarded, and more than max_discard discards invalidate the run.
    """
    times = _check_even_grid(n_grid)
    half = times // 2
    w = suggest_half_width(window_multiplier, int(half.max()), window_max)
    if trace_source is not None:
        results = [trace_source(replicate_seed(seed, rep)) for rep in range(replicates)]
    else:
        tasks = [
            (beta, w, tuple(int(t) for t in half), replicate_seed(seed, rep),
             leak_rel_tol, window_growth_retries)
            for rep in range(replicates)
        ]
        mapper = pmap or map
        results = list(mapper(_annealed_trace_task, tasks))
    rows = []
    discarded = 0
    escalations = 0
    for values, level, ok in results:
        escalations += level
        if not ok:
            discarded += 1
            continue
        rows.append(np.asarray(values, dtype=float))
    rate = discarded / replicates if replicates else 0.0
    if rate > max_discard:
        raise NumericValidityError(
            f"{discarded}/{replicates} traces leaked; enlarge the window "
            f"(discard rate {rate:.3f} > {max_discard})"
        )
    if len(rows) < 3:
        raise NumericValidityError("too few valid traces to fit")
    mat = np.vstack(rows)
    mean = mat.mean(axis=0)
    se = mat.std(axis=0, ddof=1) / math.sqrt(len(rows))
    fit = fit_power_law(zip(times, mean, se))
    return SpectralEstimate(
        "annealed", fit, -2.0 * fit.slope, rate, len(rows), times, mean, se,
        escalations,
    )


def spectral_dimension_quenched(
    env: Environment | None,
    n_grid,
    seed: int = 0,
    leak_rel_tol: float = 0.05,
    trace_source=None,
) -> SpectralEstimate:
    """Slope of log p_n(0,0) over even times n on one frozen environment."""
    times = _check_even_grid(n_grid)
    half = times // 2
    if trace_source is not None:
        values, leak = trace_source(seed)
    else:
        if env is None:
            raise ValueError("need an environment or a trace_source")
        trace = diagonal_heat_kernel(env, 0, half)
        values, leak = trace.p2n, trace.total_leak
    values = np.asarray(values, dtype=float)
    if leak > leak_rel_tol * values[-1]:
        raise NumericValidityError(
            f"quenched trace leaked {leak:.3e} against p = {values[-1]:.3e}; "
            "enlarge the window"
        )
    fit = fit_power_law(zip(times, values))
    return SpectralEstimate(
        "quenched", fit, -2.0 * fit.slope, 0.0, 1, times,
        values, np.zeros(len(times)),
    )


def _ball_half_width(r: float, delta_hat: float, multiplier: float,
                     window_min: int, window_max) -> int:
    extent = float(r) ** (1.0 / delta_hat)
    w = int(math.ceil(multiplier * extent))
    w = max(w, int(window_min))
    if window_max is not None:
        w = min(w, int(window_max))
    return w


@dataclass
class ExitExponent:
    fit: ExponentFit
    predicted_slope: float
    discard_rate: float
    r_grid: np.ndarray
    mean_exit: np.ndarray
    se_exit: np.ndarray
    used: np.ndarray
    window_escalations: int = 0


def _escalating_ball(beta, w, r, env_seed, retries, window_max):
    """Fresh environments at doubling windows until the ball clears its
    boundary flags; flagged balls are discarded per the ball policy.
    Returns (env, ball or None, levels climbed)."""
    for level in range(retries + 1):
        wl = w << level
        if window_max is not None:
            wl = min(wl, int(window_max))
        seed_l = env_seed if level == 0 else replicate_seed(env_seed, level)
        env = sample_environment(centered_window(beta, wl), seed_l)
        ball = build_ball(env, r)
        if not ball.touches_window_boundary:
            return env, ball, level
    return env, None, retries


def _exit_task(args):
    beta, w, r, env_seed, retries, window_max = args
    env, ball, level = _escalating_ball(beta, w, r, env_seed, retries, window_max)
    if ball is None:
        return None, level
    return expected_exit_time(env, ball).exact, level


def exit_time_exponent(
    beta: float,
    r_grid,
    replicates: int,
    seed: int,
    scaling: ScalingFunctions,
    window_multiplier: float = DEFAULT_BALL_MULTIPLIER,
    window_min: int = 64,
    window_max=None,
    max_discard: float = 0.05,
    window_growth_retries: int = 3,
    exit_source=None,
    pmap=None,
) -> ExitExponent:
    """Fit log E[exit time of B_r(0)] against log r.

    Window half-widths scale like r^{1/delta_hat} (the Euclidean extent of
    a resistance-r ball).  A flagged ball is discarded and redrawn on a
    doubled window up to window_growth_retries times; replicates flagged at
    every level count against max_discard (pooled over the whole grid).
    """
    r_grid = sorted(float(r) for r in r_grid)
    mapper = pmap or map
    means, ses, used = [], [], []
    discarded = 0
    total = 0
    escalations = 0
    for ri, r in enumerate(r_grid):
        if exit_source is not None:
            mu, se = exit_source(r)
            means.append(mu)
            ses.append(se)
            used.append(replicates)
            continue
        w = _ball_half_width(r, scaling.delta_hat, window_multiplier,
                             window_min, window_max)
        tasks = [
            (beta, w, r, replicate_seed(seed, ri * replicates + rep),
             window_growth_retries, window_max)
            for rep in range(replicates)
        ]
        results = list(mapper(_exit_task, tasks))
        total += replicates
        discarded += sum(v is None for v, _ in results)
        escalations += sum(lvl for _, lvl in results)
        vals = np.array([v for v, _ in results if v is not None])
        if len(vals) < 2:
            raise NumericValidityError(f"too few valid balls at r={r}")
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(len(vals))))
        used.append(len(vals))
    rate = discarded / total if total else 0.0
    if rate > max_discard:
        raise NumericValidityError(
            f"ball discard rate {rate:.3f} exceeds {max_discard}; "
            "increase window_multiplier"
        )
    fit = fit_power_law(zip(r_grid, means, ses))
    return ExitExponent(
        fit, scaling.exit_time_exponent, rate, np.array(r_grid),
        np.array(means), np.array(ses), np.array(used), escalations,
    )


# --- tail curves and the good-radius event ---------------------------------


@dataclass
class BallSampleSet:
    beta: float
    r: float
    delta_hat: float
    window_half_width: int
    volumes: np.ndarray  # valid samples only
    complement_resistance: np.ndarray
    total: int
    discarded: int
    window_escalations: int = 0

    @property
    def used(self) -> int:
        return len(self.volumes)

    @property
    def discard_rate(self) -> float:
        return self.discarded / self.total if self.total else 0.0


def _ball_task(args):
    beta, w, r, env_seed, retries, window_max = args
    env, ball, level = _escalating_ball(beta, w, r, env_seed, retries, window_max)
    if ball is None:
        return None, level
    return (ball.volume, ball_complement_resistance(env, ball)), level


def ball_samples(
    beta: float,
    r: float,
    replicates: int,
    delta_hat: float,
    seed: int,
    window_multiplier: float = DEFAULT_BALL_MULTIPLIER,
    window_min: int = 64,
    window_max=None,
    max_discard: float = 0.05,
    window_growth_retries: int = 3,
    pmap=None,
) -> BallSampleSet:
    """Sample (volume, complement resistance) of resistance balls B_r(0).

    Flagged balls escalate to doubled windows like the exit-time sampler;
    only replicates flagged at every level are discarded.
    """
    w = _ball_half_width(r, delta_hat, window_multiplier, window_min, window_max)
    tasks = [
        (beta, w, float(r), replicate_seed(seed, rep), window_growth_retries,
         window_max)
        for rep in range(replicates)
    ]
    mapper = pmap or map
    results = list(mapper(_ball_task, tasks))
    vols, rcs = [], []
    discarded = 0
    escalations = 0
    for item, level in results:
        escalations += level
        if item is None:
            discarded += 1
            continue
        vols.append(item[0])
        rcs.append(item[1])
    rate = discarded / replicates if replicates else 0.0
    if rate > max_discard:
        raise NumericValidityError(
            f"ball discard rate {rate:.3f} exceeds {max_discard} at r={r}"
        )
    return BallSampleSet(
        beta, float(r), delta_hat, w, np.array(vols, dtype=float),
        np.array(rcs, dtype=float), replicates, discarded, escalations,
    )


_TAIL_TAGS = ("volume-lower", "volume-upper", "resistance-lower", "good-radius")


@dataclass
class TailCurve:
    tag: str
    beta: float
    r: float
    lambdas: np.ndarray
    probabilities: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    used: int
    discarded: int


def _tail_events(tag: str, lam: float, samples: BallSampleSet) -> np.ndarray:
    v = samples.volumes
    rc = samples.complement_resistance
    phi = samples.r ** (1.0 / samples.delta_hat)
    if tag == "volume-lower":
        return v <= phi / lam
    if tag == "volume-upper":
        return v >= phi * lam
    if tag == "resistance-lower":
        return rc <= samples.r / lam
    if tag == "good-radius":
        return (phi / lam <= v) & (v <= phi * lam) & (rc >= samples.r / lam)
    raise ValueError(f"unknown tail tag {tag!r}; known: {_TAIL_TAGS}")


def tail_curve(
    tag: str,
    beta: float,
    r: float,
    lambda_grid,
    replicates: int,
    delta_hat: float,
    seed: int,
    samples: BallSampleSet | None = None,
    **window_policy,
) -> TailCurve:
    """Empirical probability of the tagged ball event per lambda.

    All lambdas share one replicate set, so nesting of events is exact in
    the sample and monotonicity checks are not noise-limited.  A
    precomputed BallSampleSet can be shared across tags.
    """
    if tag not in _TAIL_TAGS:
        raise ValueError(f"unknown tail tag {tag!r}; known: {_TAIL_TAGS}")
    lambdas = np.asarray(sorted(float(v) for v in lambda_grid))
    if (lambdas < 1).any():
        raise ValueError("lambda grid must be >= 1")
    if samples is None:
        samples = ball_samples(beta, r, replicates, delta_hat, seed, **window_policy)
    probs, lo, hi = [], [], []
    for lam in lambdas:
        hits = int(_tail_events(tag, lam, samples).sum())
        n = samples.used
        probs.append(hits / n if n else 0.0)
        wl, wh = wilson_interval(hits, n)
        lo.append(wl)
        hi.append(wh)
    return TailCurve(
        tag, beta, float(r), lambdas, np.array(probs), np.array(lo),
        np.array(hi), samples.used, samples.discarded,
    )


def good_radius_frequency(
    beta: float,
    r: float,
    lam: float,
    replicates: int,
    delta_hat: float,
    seed: int,
    samples: BallSampleSet | None = None,
    **window_policy,
) -> float:
    """Empirical probability that r is a good radius at tolerance lambda.

    The event is a volume pinch around the volume scale together with a
    complement-resistance lower bound.  The third defining condition of a
    good radius (two-point resistance dominated by lambda times the
    metric) is identically true here because the metric is the resistance
    metric itself; it is asserted structurally in the test suite.
    """
    if lam <= 1:
        raise ValueError("lambda must exceed 1")
    if samples is None:
        samples = ball_samples(beta, r, replicates, delta_hat, seed, **window_policy)
    if samples.used == 0:
        raise NumericValidityError("no valid samples")
    return float(_tail_events("good-radius", lam, samples).mean())


def fit_tail_slope(curve: TailCurve) -> ExponentFit:
    """Log-log slope of a tail curve, dropping zero-probability points."""
    pts = []
    for lam, p, lo, hi in zip(curve.lambdas, curve.probabilities,
                              curve.ci_low, curve.ci_high):
        if p > 0:
            pts.append((lam, p, max((hi - lo) / 3.92, 1e-6)))
    if len(pts) < 3:
        raise ValueError("fewer than 3 nonzero points on the tail curve")
    return fit_power_law(pts)


# --- dyadic chaining diagnostic ---------------------------------------------


def dyadic_chain_sequence(x: int, m: int) -> list:
    """The dyadic coarsening x = x_0, x_1, ..., x_m = 0.

    x_l stays when already divisible by 2^l, otherwise drops by 2^{l-1};
    consequently x_l is a multiple of 2^l and consecutive terms differ by
    0 or 2^l.
    """
    seq = [x]
    for level in range(1, m + 1):
        prev = seq[-1]
        seq.append(prev if prev % (1 << level) == 0 else prev - (1 << (level - 1)))
    return seq


@dataclass
class ChainCheckReport:
    n: int
    x: int
    m: int
    sequence: list
    resistance: float  # R on [0, n) between 0 and x
    chain_sum: float  # telescoped interval resistances along the sequence
    level_max_sum: float  # per-level maxima over all aligned intervals
    chain_slack: float  # chain_sum - resistance
    level_slack: float  # level_max_sum - chain_sum
    properties_ok: bool


def dyadic_chain_check(env: Environment, n: int, x: int) -> ChainCheckReport:
    """Verify the dyadic chaining inequality on a sampled environment.

    Builds the coarsening sequence, checks its structural properties
    (multiples of 2^l inside [0, n), steps of 0 or 2^l, final 0), then
    verifies numerically that the restricted resistance R(0, x) is at most
    the chained interval sum, which is at most the per-level maxima sum.
    Structural failures are implementation bugs and raise immediately.
    """
    if not 0 <= x < n:
        raise ValueError(f"x={x} outside [0, {n})")
    if env.params.lo > 0 or env.params.hi < n:
        raise ValueError(f"environment window does not cover [0, {n})")
    m = max(1, (n - 1).bit_length())
    seq = dyadic_chain_sequence(x, m)
    for level, val in enumerate(seq):
        if val % (1 << level) != 0:
            raise InvariantViolation(f"x_{level}={val} not a multiple of 2^{level}")
        if not 0 <= val < n:
            raise InvariantViolation(f"x_{level}={val} escaped [0, {n})")
    for level in range(m):
        step = seq[level] - seq[level + 1]
        if step not in (0, 1 << level):
            raise InvariantViolation(
                f"x_{level} - x_{level + 1} = {step} not in {{0, 2^{level}}}"
            )
    if seq[m] != 0:
        raise InvariantViolation(f"x_m = {seq[m]} != 0")

    sys_full = assemble(env, (0, n), semantics="restricted")
    lhs = sys_full.two_point(0, x).value
    chain = 0.0
    for level in range(m):
        a, b = seq[level + 1], seq[level]
        if a == b:
            continue
        piece = assemble(env, (a, b + 1), semantics="restricted")
        chain += piece.two_point(a, b).value
    level_sum = 0.0
    for level in range(m):
        block = 1 << level
        best = 0.0
        for y in range(block, n, block):
            piece = assemble(env, (y - block, y + 1), semantics="restricted")
            best = max(best, piece.two_point(y - block, y).value)
        level_sum += best
    return ChainCheckReport(
        n, x, m, seq, float(lhs), float(chain), float(level_sum),
        float(chain - lhs), float(level_sum - chain), True,
    )
