"""Euler-Maruyama, Milstein and Ito-Taylor schemes on the random partition tau_n.

Steps are equidistant (size delta) on the inner clock E and random
(tau_{n+1} - tau_n, a copy of D_delta) on the outer clock. Brownian
increments live on the inner clock: ``db[n] = B_{(n+1) delta} - B_{n delta}``.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .coefficients import MultiIndex, coefficient_function, hierarchical_set, sorted_indices
from .errors import AssumptionViolation, DomainError, NumericOverflow, UnsupportedOrder
from .noise import area_from_normals
from .time_change import step_index

__all__ = [
    "SchemeConfig",
    "InnerClockNoise",
    "SolutionPath",
    "em_step",
    "milstein_step",
    "multiple_integral",
    "ito_taylor_step",
    "make_stepper",
    "simulate_solution",
    "evaluate_at",
    "BROWNIAN_CHANNEL",
    "AREA_CHANNEL",
]

KINDS = ("em", "milstein", "ito-taylor")
COMPENSATORS = ("inner", "outer")
GAMMAS = (0.5, 1.0, 1.5)

# substream channels of a path's NoiseStream
SUBORDINATOR_CHANNEL = 0
BROWNIAN_CHANNEL = 1
AREA_CHANNEL = 2


@dataclass(frozen=True)
class SchemeConfig:
    """``kind`` in {"em", "milstein", "ito-taylor"}.

    ``milstein_compensator`` selects what is subtracted from dB^2 in the
    Milstein correction: ``"inner"`` uses delta (the quadratic variation of
    B o E over one step), ``"outer"`` uses the outer-clock step tau_{n+1} - tau_n.
    """

    kind: str = "em"
    gamma: float | None = None
    milstein_compensator: str = "inner"

    def __post_init__(self):
        kind = self.kind.lower().replace("_", "-")
        if kind == "itotaylor":
            kind = "ito-taylor"
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise DomainError(f"unknown scheme {self.kind!r}")
        if kind == "ito-taylor":
            if self.gamma is None or float(self.gamma) not in GAMMAS:
                raise UnsupportedOrder(f"ito-taylor needs gamma in {GAMMAS}, got {self.gamma}")
            object.__setattr__(self, "gamma", float(self.gamma))
        if self.milstein_compensator not in COMPENSATORS:
            raise DomainError(f"milstein_compensator must be one of {COMPENSATORS}")

    @property
    def needs_area(self):
        return self.kind == "ito-taylor" and self.gamma == 1.5

    def to_dict(self):
        d = {"kind": self.kind}
        if self.gamma is not None:
            d["gamma"] = self.gamma
        if self.kind == "milstein":
            d["milstein_compensator"] = self.milstein_compensator
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"kind", "gamma", "milstein_compensator"}
        if unknown:
            raise DomainError(f"unknown scheme keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class InnerClockNoise:
    """Brownian increments (and optionally time integrals of B) per inner step."""

    delta: float
    db: np.ndarray
    dz: np.ndarray | None = None

    @classmethod
    def draw(cls, stream, n_steps, delta, with_area=False):
        xi = stream.substream(BROWNIAN_CHANNEL).generator.standard_normal(n_steps)
        db = math.sqrt(delta) * xi
        dz = None
        if with_area:
            eta = stream.substream(AREA_CHANNEL).generator.standard_normal(n_steps)
            dz = area_from_normals(delta, db, eta)
        return cls(delta, db, dz)

    def __len__(self):
        return self.db.size

    def coarsen(self, m):
        """Increments over blocks of ``m`` steps, built from the same path."""
        m = int(m)
        if m == 1:
            return self
        k = self.db.size // m
        blocks = self.db[: k * m].reshape(k, m)
        db = blocks.sum(axis=1)
        dz = None
        if self.dz is not None:
            # integral over a block = sum of sub-integrals + delta * B offset at each sub-step
            offset = np.cumsum(blocks, axis=1) - blocks
            dz = (self.dz[: k * m].reshape(k, m) + self.delta * offset).sum(axis=1)
        return InnerClockNoise(self.delta * m, db, dz)

    def brownian_path(self):
        """B at inner times 0, delta, 2 delta, ..."""
        return np.concatenate(([0.0], np.cumsum(self.db)))


@dataclass(frozen=True, eq=False)
class SolutionPath:
    time_change: object
    x0: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.size != self.time_change.N + 1:
            raise DomainError("values must have N + 1 entries")

    @property
    def terminal(self):
        return float(self.values[-1])

    def write_csv(self, fh):
        """Per-step dump: n, tau_n, E_delta, X_delta."""
        tc = self.time_change
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "tau_n", "E_delta", "X_delta"])
        for n, x in enumerate(self.values):
            w.writerow([n, f"{tc.d_values[n]:.15g}", f"{n * tc.delta:.15g}", f"{x:.15g}"])


def _finite(n, x):
    if not math.isfinite(x):
        raise NumericOverflow(n, x)
    return x


def _require_no_dt_drift(coeffs, what):
    if coeffs.H is not None:
        raise AssumptionViolation(f"{what} requires H == 0; coefficient set {coeffs.name!r} has H")


def em_step(coeffs, n, x, tau_step, delta, db):
    u = n * delta
    with np.errstate(over="ignore", invalid="ignore"):
        x_new = x + coeffs.drift_t(u) * tau_step + coeffs.F(u, x) * delta + coeffs.G(u, x) * db
    return _finite(n, float(x_new))


def milstein_step(coeffs, n, x, tau_step, delta, db, config=None):
    _require_no_dt_drift(coeffs, "the Milstein scheme")
    G_x = coeffs.partial("G_x", context="Milstein correction G*G_x")
    comp = delta if config is None or config.milstein_compensator == "inner" else tau_step
    u = n * delta
    with np.errstate(over="ignore", invalid="ignore"):
        g = coeffs.G(u, x)
        x_new = x + coeffs.F(u, x) * delta + g * db + 0.5 * (g * G_x(u, x)) * (db * db - comp)
    return _finite(n, float(x_new))


def multiple_integral(alpha, delta, db, dz=None):
    """I_alpha[1] over one inner-clock step of length ``delta``."""
    alpha = tuple(alpha)
    if alpha == (0,):
        return delta
    if alpha == (1,):
        return db
    if alpha == (0, 0):
        return 0.5 * delta * delta
    if alpha == (1, 1):
        return 0.5 * (db * db - delta)
    if alpha == (1, 1, 1):
        return (db**3 - 3.0 * delta * db) / 6.0
    if alpha in ((1, 0), (0, 1)):
        if dz is None:
            raise DomainError(f"I{MultiIndex(alpha)} needs the time integral dz")
        return dz if alpha == (1, 0) else delta * db - dz
    raise UnsupportedOrder(f"no closed form for I{MultiIndex(alpha)}")


def _ito_taylor_terms(coeffs, gamma):
    _require_no_dt_drift(coeffs, "the Ito-Taylor scheme")
    indices = [a for a in sorted_indices(hierarchical_set(gamma)) if a]
    return [(a, coefficient_function(coeffs, a)) for a in indices]


def ito_taylor_step(coeffs, gamma, n, x, delta, db, dz=None, _terms=None):
    terms = _terms if _terms is not None else _ito_taylor_terms(coeffs, gamma)
    u = n * delta
    x_new = x
    with np.errstate(over="ignore", invalid="ignore"):
        for alpha, f in terms:
            x_new = x_new + f(u, x) * multiple_integral(alpha, delta, db, dz)
    return _finite(n, float(x_new))


def make_stepper(coeffs, scheme):
    """Return step(n, x, tau_step, delta, db, dz) for the configured scheme."""
    if scheme.kind == "em":
        F, G = coeffs.F, coeffs.G
        if coeffs.H is None:

            def step(n, x, tau_step, delta, db, dz):
                u = n * delta
                return x + F(u, x) * delta + G(u, x) * db

        else:
            H = coeffs.H

            def step(n, x, tau_step, delta, db, dz):
                u = n * delta
                return x + H(u) * tau_step + F(u, x) * delta + G(u, x) * db

        return step
    if scheme.kind == "milstein":
        _require_no_dt_drift(coeffs, "the Milstein scheme")
        F, G = coeffs.F, coeffs.G
        G_x = coeffs.partial("G_x", context="Milstein correction G*G_x")
        inner = scheme.milstein_compensator == "inner"

        def step(n, x, tau_step, delta, db, dz):
            u = n * delta
            g = G(u, x)
            comp = delta if inner else tau_step
            return x + F(u, x) * delta + g * db + 0.5 * (g * G_x(u, x)) * (db * db - comp)

        return step
    terms = _ito_taylor_terms(coeffs, scheme.gamma)

    def step(n, x, tau_step, delta, db, dz):
        u = n * delta
        x_new = x
        for alpha, f in terms:
            x_new = x_new + f(u, x) * multiple_integral(alpha, delta, db, dz)
        return x_new

    return step


def simulate_solution(coeffs, scheme, path, noise=None, x0=1.0, increments=None):
    """Run the scheme over the partition of ``path``.

    Brownian increments come from ``increments`` when given (coupled runs),
    otherwise they are drawn from the Brownian substream of ``noise``.
    Raises NumericOverflow carrying the step index on a non-finite state.
    """
    N = path.N
    delta = path.delta
    if increments is None:
        if noise is None:
            raise DomainError("need either a noise stream or precomputed increments")
        increments = InnerClockNoise.draw(noise, N, delta, with_area=scheme.needs_area)
    if len(increments) < N:
        raise DomainError(f"need {N} Brownian increments, got {len(increments)}")
    if not math.isclose(increments.delta, delta, rel_tol=1e-12):
        raise DomainError("increment step does not match the time-change step")
    if scheme.needs_area and increments.dz is None:
        raise DomainError("gamma = 1.5 needs time-integral increments")
    step = make_stepper(coeffs, scheme)
    d = path.d_values
    db = increments.db.tolist()
    dz = increments.dz.tolist() if increments.dz is not None else [None] * N
    tau_steps = np.diff(d[: N + 1]).tolist()
    values = np.empty(N + 1)
    x = float(x0)
    values[0] = x
    isfinite = math.isfinite
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(N):
            x = float(step(n, x, tau_steps[n], delta, db[n], dz[n]))
            if not isfinite(x):
                raise NumericOverflow(n, x)
            values[n + 1] = x
    return SolutionPath(path, float(x0), values)


def evaluate_at(sol, t):
    """Piecewise-constant evaluation: X^delta_t = X^delta_{tau_n} on [tau_n, tau_{n+1})."""
    n = step_index(sol.time_change, t)
    return sol.values[n]
