"""Random streams, Brownian increments and subordinator increment samplers.

Streams are keyed by ``(seed, stream_id, channel...)`` and backed by the
counter-based Philox generator, so every Monte Carlo path owns an
independent, reproducible sequence without coordination between workers.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from .errors import DomainError, SimulationLimit, TailUnavailable

__all__ = [
    "SubordinatorSpec",
    "NoiseStream",
    "laplace_exponent",
    "levy_tail",
    "sample_increment",
    "brownian_increment",
    "correlated_area_pair",
    "area_from_normals",
]

FAMILIES = ("stable", "tempered_stable", "gamma")
TINY = np.finfo(float).tiny
MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SubordinatorSpec:
    """Zero-drift, zero-killing subordinator with an infinite Levy measure.

    ``family`` is one of ``"stable"`` (needs ``beta``), ``"tempered_stable"``
    (needs ``beta`` and ``kappa``) or ``"gamma"``.
    """

    family: str
    beta: float | None = None
    kappa: float | None = None
    description: str = field(default="", compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown subordinator family {self.family!r}")
        if self.family in ("stable", "tempered_stable"):
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise DomainError(f"{self.family} requires 0 < beta < 1, got {self.beta}")
        if self.family == "tempered_stable":
            if self.kappa is None or not self.kappa > 0.0:
                raise DomainError(f"tempered_stable requires kappa > 0, got {self.kappa}")
        if self.family == "gamma" and (self.beta is not None or self.kappa is not None):
            raise DomainError("gamma subordinator takes no beta/kappa")
        if not self.description:
            object.__setattr__(self, "description", self._label())

    @classmethod
    def stable(cls, beta):
        return cls("stable", beta=float(beta))

    @classmethod
    def tempered_stable(cls, beta, kappa):
        return cls("tempered_stable", beta=float(beta), kappa=float(kappa))

    @classmethod
    def gamma(cls):
        return cls("gamma")

    def _label(self):
        if self.family == "stable":
            return f"Stable({self.beta:g})"
        if self.family == "tempered_stable":
            return f"TemperedStable({self.beta:g}, kappa={self.kappa:g})"
        return "Gamma"

    @property
    def index(self):
        """Regular-variation index of the Laplace exponent at infinity."""
        return 0.0 if self.family == "gamma" else self.beta

    def to_dict(self):
        d = {"family": self.family}
        if self.beta is not None:
            d["beta"] = self.beta
        if self.kappa is not None:
            d["kappa"] = self.kappa
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", None)
        aliases = {"tempered": "tempered_stable", "tempered-stable": "tempered_stable"}
        family = aliases.get(family, family)
        allowed = {"beta", "kappa", "description"}
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown subordinator keys: {sorted(unknown)}")
        return cls(family, **d)


class NoiseStream:
    """Independent random stream for one Monte Carlo path.

    Identical ``(seed, stream_id, channel)`` triples reproduce identical
    draws bit for bit. ``substream`` derives a child stream for a separate
    source of randomness on the same path (subordinator vs Brownian noise),
    so consuming more of one never shifts the other.
    """

    def __init__(self, seed, stream_id=0, channel=()):
        self.seed = int(seed) & MASK64
        self.stream_id = int(stream_id)
        self.channel = tuple(int(c) for c in channel)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.channel))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def substream(self, *channel):
        return NoiseStream(self.seed, self.stream_id, self.channel + channel)

    @property
    def counter(self):
        return int(self.generator.bit_generator.state["state"]["counter"][0])

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, stream_id={self.stream_id}, channel={self.channel})"


def _generator(rng):
    if isinstance(rng, NoiseStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected NoiseStream or numpy Generator, got {type(rng).__name__}")


def laplace_exponent(spec, s):
    """psi(s) with E[exp(-s D_t)] = exp(-t psi(s)); vectorised over ``s``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise DomainError("laplace_exponent needs s >= 0")
    if spec.family == "stable":
        out = s_arr**spec.beta
    elif spec.family == "tempered_stable":
        out = (s_arr + spec.kappa) ** spec.beta - spec.kappa**spec.beta
    else:
        out = np.log1p(s_arr)
    return float(out) if out.ndim == 0 else out


def levy_tail(spec, t):
    """Levy measure of the half line, nu[t, inf)."""
    if not t > 0:
        raise DomainError("levy_tail needs t > 0")
    if spec.family == "stable":
        return t ** (-spec.beta) / math.gamma(1.0 - spec.beta)
    if spec.family == "tempered_stable":
        # density beta/Gamma(1-beta) y^(-1-beta) exp(-kappa y), integrated by parts
        b, k = spec.beta, spec.kappa
        return t ** (-b) * math.exp(-k * t) / math.gamma(1.0 - b) - k**b * special.gammaincc(1.0 - b, k * t)
    if spec.family == "gamma":
        return float(special.exp1(t))
    raise TailUnavailable(f"no closed-form Levy tail for {spec.family!r}")


def _positive_stable(beta, scale, gen, size):
    # Kanter's representation; Laplace transform exp(-s^beta) before scaling.
    u = 1.0 - gen.random(size)
    w = gen.standard_exponential(size)
    pu = np.pi * u
    z = (
        np.sin(beta * pu)
        / np.sin(pu) ** (1.0 / beta)
        * (np.sin((1.0 - beta) * pu) / w) ** ((1.0 - beta) / beta)
    )
    return scale * z


def _tempered_stable(beta, kappa, delta, gen, n, max_attempts):
    # Exponential tilting: accept a stable draw Z with probability exp(-kappa Z).
    out = np.empty(n)
    filled = 0
    rounds = 0
    scale = delta ** (1.0 / beta)
    while filled < n:
        rounds += 1
        if rounds > max_attempts:
            raise SimulationLimit(f"tempered-stable rejection exceeded {max_attempts} attempts")
        need = n - filled
        z = _positive_stable(beta, scale, gen, need)
        keep = z[gen.random(need) < np.exp(-kappa * z)]
        out[filled : filled + keep.size] = keep
        filled += keep.size
    return out


def sample_increment(spec, delta, rng, size=None, max_attempts=10**6):
    """Draw from the law of D_delta.

    Draws are floored at the smallest normal double so they stay strictly
    positive even when a tiny Gamma shape underflows.
    """
    if not delta > 0:
        raise DomainError("sample_increment needs delta > 0")
    gen = _generator(rng)
    n = 1 if size is None else int(np.prod(size))
    if spec.family == "stable":
        z = _positive_stable(spec.beta, delta ** (1.0 / spec.beta), gen, n)
    elif spec.family == "tempered_stable":
        z = _tempered_stable(spec.beta, spec.kappa, delta, gen, n, max_attempts)
    else:
        z = gen.gamma(delta, 1.0, n)
    z = np.maximum(z, TINY)
    if size is None:
        return float(z[0])
    return z.reshape(size)


def brownian_increment(delta, rng, size=None):
    """B_{t+delta} - B_t; ``delta == 0`` returns exact zeros."""
    if delta < 0:
        raise DomainError("brownian_increment needs delta >= 0")
    xi = _generator(rng).standard_normal(size)
    return math.sqrt(delta) * xi


def area_from_normals(delta, db, xi):
    """Time integral of (B_s - B_start) over a step, given dB and an independent N(0,1)."""
    return 0.5 * delta * (db + xi * math.sqrt(delta / 3.0))


def correlated_area_pair(delta, rng, size=None):
    """Joint draw of (dB, dZ) with dZ the integral of B_s - B_start over the step.

    Var dB = delta, Var dZ = delta^3/3, Cov = delta^2/2.
    """
    if not delta > 0:
        raise DomainError("correlated_area_pair needs delta > 0")
    gen = _generator(rng)
    xi1 = gen.standard_normal(size)
    xi2 = gen.standard_normal(size)
    db = math.sqrt(delta) * xi1
    return db, area_from_normals(delta, db, xi2)
