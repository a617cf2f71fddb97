"""Moment criteria for inverse subordinators and Monte Carlo evidence for them.

The classifiers are exact statements about finiteness of E[exp(f(E_t))]
and E[1/f(E_t)]. The probes are heuristics: finiteness of an expectation
cannot be decided from samples, so a probe only reports whether the
running mean looks dominated by a single summand.
"""

from dataclasses import dataclass, field
from enum import Enum
import math

import numpy as np

from .errors import DomainError, FitError, ResolutionError
from .noise import SubordinatorSpec, _generator, levy_tail, sample_increment
from .time_change import sample_inverse

__all__ = [
    "Verdict",
    "ProbeHint",
    "TestFunction",
    "MomentQuery",
    "classify_exp_moment",
    "classify_negative_moment",
    "estimate_small_ball",
    "estimate_mean_scaling",
    "exit_probability_bracket",
    "probe_exp_moment",
]

DEFAULT_DELTA = 2.0**-12
DOMINANCE_THRESHOLD = 0.5


class Verdict(str, Enum):
    FINITE = "FINITE"
    INFINITE = "INFINITE"
    BOUNDARY = "BOUNDARY"


class ProbeHint(str, Enum):
    STABLE = "STABLE_MEAN"
    DIVERGING = "DIVERGING_MEAN"


@dataclass(frozen=True)
class TestFunction:
    """``power``: f(u) = scale u^p; ``exp_of_power``: f(u) = u^p; ``inverse_power``: 1/u^p."""

    __test__ = False  # not a pytest class

    kind: str
    p: float
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "exp_of_power", "inverse_power"):
            raise DomainError(f"unknown test function {self.kind!r}")
        if not self.p > 0:
            raise DomainError("p must be positive")

    @classmethod
    def power(cls, scale=1.0, p=1.0):
        return cls("power", p, scale)

    @classmethod
    def exp_of_power(cls, p):
        return cls("exp_of_power", p)

    @classmethod
    def inverse_power(cls, p):
        return cls("inverse_power", p)

    def exponent(self, u):
        return self.scale * np.power(u, self.p)


@dataclass(frozen=True)
class MomentQuery:
    spec: SubordinatorSpec
    t: float
    test_function: TestFunction
    n_samples: int

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError("t must be positive")
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")

    def classify(self):
        tf = self.test_function
        if tf.kind == "inverse_power":
            return classify_negative_moment(tf.p, levy_tail(self.spec, self.t), linear_bounded=True)
        if tf.kind == "power" and tf.p <= 1:
            # exponential moments of a linear function always exist
            return Verdict.FINITE
        return classify_exp_moment(self.spec.index, tf.p)

    def to_dict(self):
        return {
            "subordinator": self.spec.to_dict(),
            "t": self.t,
            "test_function": {"kind": self.test_function.kind, "p": self.test_function.p,
                              "scale": self.test_function.scale},
            "n_samples": self.n_samples,
        }


def classify_exp_moment(beta, p):
    """Is E[exp(f(E_t))] finite for f regularly varying with index p?

    ``beta`` is the index of the Laplace exponent (0 for Gamma, where the
    extra slow-variation hypothesis on psi' is assumed, not checked).
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError("beta must lie in [0, 1)")
    if not p > 0:
        raise DomainError("p must be positive")
    critical = 1.0 / (1.0 - beta)
    if math.isclose(p, critical, rel_tol=1e-12, abs_tol=1e-15):
        return Verdict.BOUNDARY
    return Verdict.FINITE if p < critical else Verdict.INFINITE


def classify_negative_moment(p, levy_tail_at_t, linear_bounded=False):
    """Is E[1/f(E_t)] finite for f regularly varying at 0 with index p?

    At p = 1 the answer is INFINITE only when the tail is positive and
    f(s) <= c s near zero (``linear_bounded``); otherwise BOUNDARY. For
    p > 1 with a vanishing tail the criterion is silent: BOUNDARY.
    """
    if not p > 0:
        raise DomainError("p must be positive")
    if p < 1:
        return Verdict.FINITE
    if levy_tail_at_t > 0 and (p > 1 or linear_bounded):
        return Verdict.INFINITE
    return Verdict.BOUNDARY


def _inverse_samples(spec, times, n, rng, delta, sampler):
    if sampler is not None:
        out = np.asarray(sampler(times, n, rng), dtype=float)
    else:
        out = sample_inverse(spec, times, delta, n, rng)
    return out.reshape(n, len(times))


@dataclass(frozen=True)
class SmallBall:
    p_hat: float
    predicted: float
    stderr: float
    n: int
    delta: float


def estimate_small_ball(spec, t, u, n, rng, delta=None, batch=10_000):
    """P(E^delta_t <= u) against the small-ball prediction nu[t, inf) * u.

    E^delta_t <= u exactly when D at inner time (floor(u/delta) + 1) delta
    exceeds t, so only that many increments are needed per path.
    """
    if not (t > 0 and u > 0):
        raise DomainError("t and u must be positive")
    if delta is None:
        delta = u / 64.0
    if delta >= u / 4.0:
        raise ResolutionError(f"delta={delta} too coarse for the event E_t <= {u}")
    steps = math.floor(u / delta) + 1
    gen = _generator(rng)
    hits = 0
    done = 0
    while done < n:
        size = min(batch, n - done)
        d = sample_increment(spec, delta, gen, size=(size, steps)).sum(axis=1)
        hits += int(np.count_nonzero(d > t))
        done += size
    p_hat = hits / n
    return SmallBall(p_hat, levy_tail(spec, t) * u, math.sqrt(p_hat * (1 - p_hat) / n), n, delta)


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise FitError("degenerate abscissae")
    slope = np.sum((x - xm) * (y - ym)) / sxx
    return float(slope), float(ym - slope * xm)


def estimate_mean_scaling(spec, t_grid, n, rng, delta=DEFAULT_DELTA, sampler=None):
    """Least-squares slope of log(mean E_t) against log t; estimates beta for Stable(beta)."""
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if t_grid.size < 4 or np.any(t_grid <= 0) or t_grid[-1] / t_grid[0] < 10:
        raise FitError("t_grid needs >= 4 positive points spanning at least a decade")
    e = _inverse_samples(spec, t_grid, n, rng, delta, sampler)
    means = e.mean(axis=0)
    if np.any(means <= 0):
        raise FitError("zero sample mean; refine delta")
    slope, _ = _ols(np.log(t_grid), np.log(means))
    return slope


@dataclass(frozen=True)
class ExitBracket:
    lower: float
    estimate: float
    upper: float
    lower_se: float
    estimate_se: float
    upper_se: float
    excluded: int
    n: int

    def to_dict(self):
        return dict(self.__dict__)


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / values.size
    if values.size < 2:
        return mean, math.nan
    var = math.fsum((values - mean) ** 2) / (values.size - 1)
    return mean, math.sqrt(var / values.size)


def exit_probability_bracket(spec, T, n, rng, delta=DEFAULT_DELTA, sampler=None):
    """Bracket of P(max_{t <= T} B_{E_t} <= 1) by conditioning on E_T.

    lower = sqrt(2/pi) E[E_T^{-1/2} exp(-1/(2 E_T))], upper = sqrt(2/pi) E[E_T^{-1/2}];
    the estimate is the frequency of {max_n B_{n delta} <= 1, n delta <= E^delta_T}
    with B simulated on the inner-clock grid. Paths with E^delta_T = 0 are
    excluded from the bracket means.
    """
    if not T > 0:
        raise DomainError("T must be positive")
    gen = _generator(rng)
    e_t = _inverse_samples(spec, [T], n, gen, delta, sampler)[:, 0]
    steps = np.rint(e_t / delta).astype(np.int64)
    below = np.empty(n, dtype=bool)
    sd = math.sqrt(delta)
    for i, k in enumerate(steps):
        if k == 0:
            below[i] = True
            continue
        b = np.cumsum(gen.standard_normal(k)) * sd
        below[i] = b.max() <= 1.0
    pos = e_t[e_t > 0]
    c = math.sqrt(2.0 / math.pi)
    lower, lower_se = _mean_se(c * pos**-0.5 * np.exp(-0.5 / pos))
    upper, upper_se = _mean_se(c * pos**-0.5)
    est = float(np.count_nonzero(below)) / n
    return ExitBracket(
        lower,
        est,
        upper,
        lower_se,
        math.sqrt(est * (1 - est) / n),
        upper_se,
        int(n - pos.size),
        n,
    )


@dataclass(frozen=True)
class ProbeResult:
    running_means: dict
    verdict_hint: ProbeHint
    max_share: float
    overflowed: int = 0
    sizes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "running_means": {str(k): v for k, v in self.running_means.items()},
            "verdict_hint": self.verdict_hint.value,
            "max_share": self.max_share,
            "overflowed": self.overflowed,
        }


def probe_exp_moment(query, rng, delta=DEFAULT_DELTA, sampler=None):
    """Running means of exp(f(E^delta_t)) with a max-term dominance hint.

    The hint is DIVERGING_MEAN when a single summand exceeds half of the
    total, or when any summand overflows.
    """
    tf = query.test_function
    if tf.kind == "inverse_power":
        raise DomainError("probe_exp_moment handles power and exp_of_power test functions")
    n = query.n_samples
    e = _inverse_samples(query.spec, [query.t], n, rng, delta, sampler)[:, 0]
    with np.errstate(over="ignore"):
        vals = np.exp(tf.exponent(e))
    overflowed = int(np.count_nonzero(~np.isfinite(vals)))
    sizes = sorted({s for s in (10**3, 10**4, 10**5) if s <= n} | {n})
    running = {}
    for s in sizes:
        chunk = vals[:s]
        running[s] = math.inf if not np.all(np.isfinite(chunk)) else math.fsum(chunk) / s
    if overflowed:
        share = 1.0
    else:
        total = math.fsum(vals)
        share = float(vals.max() / total) if total > 0 else 0.0
    hint = ProbeHint.DIVERGING if overflowed or share > DOMINANCE_THRESHOLD else ProbeHint.STABLE
    return ProbeResult(running, hint, share, overflowed, sizes)
