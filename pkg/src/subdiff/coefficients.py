"""SDE coefficients, Ito-Taylor multi-indices and the coefficient functions f_alpha.

The SDE is ``dX = H(E) dt + F(E, X) dE + G(E, X) dB_E``. Coefficient
functions of the Ito-Taylor expansion are built by applying

    L0 = d/du + F d/dx + 1/2 G^2 d^2/dx^2,     L1 = G d/dx

to F or G. This is done exactly on a small polynomial algebra whose atoms are
partial derivatives of F and G, so ``f_alpha`` for any index reduces to a
sum of products of the closed-form partials supplied by the coefficient
author (named ``"F_u"``, ``"G_xx"``, ``"G_uxx"``, ...).
"""

from dataclasses import dataclass, field
from fractions import Fraction
import inspect
import itertools
from typing import Callable, Optional

import numpy as np

from .errors import AssumptionViolation, DomainError, MissingDerivative, UnsupportedOrder

__all__ = [
    "MultiIndex",
    "hierarchical_set",
    "remainder_set",
    "phi",
    "CoefficientSet",
    "coefficient_function",
    "coefficient_polynomial",
    "RateInfo",
    "theoretical_rate",
    "rate_from_metadata",
    "check_partials",
    "check_growth",
    "get_coefficients",
    "REGISTRY",
]

MAX_GAMMA = 1.5


class MultiIndex(tuple):
    """A finite {0, 1} sequence; 0 integrates against dE, 1 against dB_E."""

    def __new__(cls, entries=()):
        entries = tuple(int(j) for j in entries)
        if any(j not in (0, 1) for j in entries):
            raise DomainError(f"multi-index entries must be 0 or 1, got {entries}")
        return super().__new__(cls, entries)

    @property
    def length(self):
        return len(self)

    @property
    def zeros(self):
        return sum(1 for j in self if j == 0)

    def remove_first(self):
        return MultiIndex(self[1:])

    def remove_last(self):
        return MultiIndex(self[:-1])

    def __repr__(self):
        if not self:
            return "v"
        return "(" + ",".join(str(j) for j in self) + ")"

    __str__ = __repr__


def _sort_key(alpha):
    return (len(alpha), tuple(alpha))


def _check_gamma(gamma):
    two = 2 * gamma
    if two <= 0 or abs(two - round(two)) > 1e-12:
        raise DomainError(f"2*gamma must be a positive integer, got gamma={gamma}")
    if gamma > MAX_GAMMA:
        raise UnsupportedOrder(f"Ito-Taylor order {gamma} unsupported (max {MAX_GAMMA})")
    return round(two)


def _in_hierarchy(alpha, two_gamma):
    ell, n = alpha.length, alpha.zeros
    return 2 * (ell + n) <= 2 * two_gamma or (ell == n and 2 * ell == two_gamma + 1)


def _all_indices(max_len):
    for ell in range(max_len + 1):
        for entries in itertools.product((0, 1), repeat=ell):
            yield MultiIndex(entries)


def hierarchical_set(gamma):
    """A_gamma, including the empty index v."""
    two = _check_gamma(gamma)
    return frozenset(a for a in _all_indices(two + 1) if _in_hierarchy(a, two))


def remainder_set(gamma):
    """R(A_gamma): indices outside A_gamma whose tail -alpha lies inside."""
    two = _check_gamma(gamma)
    return frozenset(
        a
        for a in _all_indices(two + 2)
        if a and not _in_hierarchy(a, two) and _in_hierarchy(a.remove_first(), two)
    )


def sorted_indices(indices):
    return sorted(indices, key=_sort_key)


def phi(alpha):
    alpha = MultiIndex(alpha)
    ell, n = alpha.length, alpha.zeros
    if ell < 1:
        raise DomainError("phi is undefined for the empty multi-index")
    if ell != n:
        return ell + n - 1
    return 2 * ell - 2


# --- differential polynomials in the partials of F and G -------------------
# An atom (base, du, dx) stands for d^du/du^du d^dx/dx^dx of base in {"F", "G"};
# a polynomial maps a sorted tuple of atoms to a rational coefficient.


def _atom_name(atom):
    base, du, dx = atom
    if du == 0 and dx == 0:
        return base
    return f"{base}_{'u' * du}{'x' * dx}"


def _parse_name(name):
    base, _, tail = name.partition("_")
    if base not in ("F", "G") or set(tail) - {"u", "x"}:
        raise DomainError(f"bad partial name {name!r}")
    return (base, tail.count("u"), tail.count("x"))


def _poly_add(*polys):
    out = {}
    for p in polys:
        for mono, c in p.items():
            out[mono] = out.get(mono, 0) + c
    return {m: c for m, c in out.items() if c != 0}


def _poly_mul(p, q):
    out = {}
    for (m1, c1), (m2, c2) in itertools.product(p.items(), q.items()):
        mono = tuple(sorted(m1 + m2))
        out[mono] = out.get(mono, 0) + c1 * c2
    return {m: c for m, c in out.items() if c != 0}


def _poly_diff(p, var):
    out = {}
    for mono, c in p.items():
        for i, (base, du, dx) in enumerate(mono):
            atom = (base, du + (var == "u"), dx + (var == "x"))
            new = tuple(sorted(mono[:i] + (atom,) + mono[i + 1 :]))
            out[new] = out.get(new, 0) + c
    return {m: c for m, c in out.items() if c != 0}


_F = {(("F", 0, 0),): Fraction(1)}
_G = {(("G", 0, 0),): Fraction(1)}
_HALF_G2 = {(("G", 0, 0), ("G", 0, 0)): Fraction(1, 2)}


def _L0(p):
    px = _poly_diff(p, "x")
    return _poly_add(_poly_diff(p, "u"), _poly_mul(_F, px), _poly_mul(_HALF_G2, _poly_diff(px, "x")))


def _L1(p):
    return _poly_mul(_G, _poly_diff(p, "x"))


def coefficient_polynomial(alpha):
    """f_alpha as {tuple of atoms: coefficient}; ``alpha`` must be nonempty."""
    alpha = MultiIndex(alpha)
    if not alpha:
        raise DomainError("f_v is the identity, not a polynomial in F and G")
    p = _G if alpha[-1] == 1 else _F
    for j in reversed(alpha[:-1]):
        p = _L1(p) if j == 1 else _L0(p)
    return p


def format_polynomial(p):
    terms = []
    for mono, c in sorted(p.items()):
        factors = "*".join(_atom_name(a) for a in mono)
        terms.append(factors if c == 1 else f"{c}*{factors}")
    return " + ".join(terms) or "0"


# --- coefficient sets --------------------------------------------------------


def _takes_state(fn):
    try:
        params = inspect.signature(fn).parameters.values()
    except (TypeError, ValueError):
        return False
    required = [
        p
        for p in params
        if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD) and p.default is p.empty
    ]
    return len(required) >= 2


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Coefficients of dX = H(E) dt + F(E, X) dE + G(E, X) dB_E.

    ``H=None`` means H is identically zero. ``h_index`` is the regular
    variation index q of the Lipschitz/growth bound h (``None`` for constant
    h); ``k_log_index`` is the index q~ of log k (``None`` for constant k).
    ``exact`` optionally maps ``(x0, E_T, B_{E_T})`` to the exact X_T.
    """

    F: Callable
    G: Callable
    H: Optional[Callable] = None
    partials: dict = field(default_factory=dict)
    h_bound: Optional[Callable] = None
    h_index: Optional[float] = None
    k_bound: Optional[Callable] = None
    k_log_index: Optional[float] = None
    theta: float = 1.0
    K: float = 1.0
    additive_noise: bool = False
    exact: Optional[Callable] = None
    name: str = "custom"

    def __post_init__(self):
        if self.H is not None and _takes_state(self.H):
            raise AssumptionViolation(
                "H must depend on u only: with H(u, x) the strong-rate results for the "
                "Euler-Maruyama scheme do not apply (the dt-integral cannot be "
                "controlled by E-moments alone)"
            )
        if not 0.0 < self.theta <= 1.0:
            raise DomainError("theta must lie in (0, 1]")
        for name in self.partials:
            _parse_name(name)
        object.__setattr__(self, "partials", dict(self.partials))

    @property
    def has_drift_in_t(self):
        return self.H is not None

    def drift_t(self, u):
        return 0.0 if self.H is None else self.H(u)

    def partial(self, name, context=""):
        if name == "F":
            return self.F
        if name == "G":
            return self.G
        try:
            return self.partials[name]
        except KeyError:
            raise MissingDerivative(name, context) from None


def coefficient_function(coeffs, alpha):
    """Callable (u, x) -> f_alpha(u, x); f_v(u, x) = x."""
    alpha = MultiIndex(alpha)
    if not alpha:
        return lambda u, x: x
    poly = coefficient_polynomial(alpha)
    names = sorted({_atom_name(a) for mono in poly for a in mono})
    fns = {n: coeffs.partial(n, context=f"f_{alpha}") for n in names}
    terms = [(float(c), [_atom_name(a) for a in mono]) for mono, c in poly.items()]
    if not terms:
        return lambda u, x: 0.0 * x

    def f_alpha(u, x):
        vals = {n: fn(u, x) for n, fn in fns.items()}
        total = 0.0
        for c, atoms in terms:
            prod = c
            for a in atoms:
                prod = prod * vals[a]
            total = total + prod
        return total

    f_alpha.__name__ = f"f_{alpha}"
    f_alpha.__doc__ = format_polynomial(poly)
    return f_alpha


# --- theoretical rates ---------------------------------------------------------


@dataclass(frozen=True)
class RateInfo:
    order: float
    beta_valid: bool
    required_beta_range: tuple
    basis: str


def _range_from_qstar(qstar):
    return ((qstar - 1.0) / qstar, 1.0)


def rate_from_metadata(scheme, beta, q=None, q_tilde=None, theta=1.0, gamma=None, additive=False):
    """Guaranteed strong order and the admissible index range of beta.

    ``scheme`` is ``"em"``, ``"milstein"`` or ``"ito-taylor"``. ``q=None``
    means the bound h is constant, ``q_tilde=None`` that k is constant. For
    ``"em"`` with ``additive=True`` (G = G(u)) the order-theta result
    applies; otherwise the order min(theta, 1/2) result.
    """
    scheme = scheme.lower().replace("_", "-")
    if not 0.0 <= beta < 1.0:
        raise DomainError("beta must lie in [0, 1)")
    if not 0.0 < theta <= 1.0:
        raise DomainError("theta must lie in (0, 1]")
    if scheme == "em" and not additive:
        order = min(theta, 0.5)
        rng = (0.5, 1.0) if q is None else ((2 * q + 1) / (2 * q + 2), 1.0)
        label = "EM, Lipschitz coefficients"
    elif scheme == "em":
        order = theta
        if q is None and q_tilde is None:
            rng = (0.0, 1.0)
        else:
            rng = _range_from_qstar(max(2 * (q or 0.0) + 1, q_tilde or 0.0))
        label = "EM, additive noise"
    elif scheme == "milstein":
        order = 1.0
        if q is None and q_tilde is None:
            rng = (0.5, 1.0)
        else:
            rng = _range_from_qstar(max(2 * (q or 0.0) + 2, q_tilde or 0.0))
        label = "Milstein"
    elif scheme in ("ito-taylor", "itotaylor"):
        if gamma is None:
            raise DomainError("ito-taylor rate needs gamma")
        _check_gamma(gamma)
        order = float(gamma)
        if q is None and q_tilde is None:
            rng = (0.5, 1.0)
        else:
            rng = _range_from_qstar(max(2 * (q or 0.0) + 2, q_tilde or 0.0))
        label = f"Ito-Taylor gamma={gamma:g}"
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    lo, hi = rng
    valid = (lo < beta < hi) or (lo == 0.0 and beta == 0.0)
    return RateInfo(order, valid, rng, label)


def theoretical_rate(coeffs, scheme, beta, gamma=None):
    scheme_key = scheme.lower().replace("_", "-")
    if scheme_key != "em" and coeffs.H is not None:
        raise AssumptionViolation(f"{scheme} rate requires H == 0, but {coeffs.name} has H")
    additive = coeffs.additive_noise and scheme_key == "em"
    if additive and coeffs.k_bound is None:
        additive = False
    return rate_from_metadata(
        scheme_key,
        beta,
        q=coeffs.h_index,
        q_tilde=coeffs.k_log_index,
        theta=coeffs.theta,
        gamma=gamma,
        additive=additive,
    )


# --- validation helpers ------------------------------------------------------


def _fd(fn, u, x, var, h):
    if var == "u":
        # stay inside u >= 0
        u = np.maximum(u, h)
        return (fn(u + h, x) - fn(u - h, x)) / (2 * h), u
    return (fn(u, x + h) - fn(u, x - h)) / (2 * h), u


def check_partials(coeffs, rng, n=100, u_max=5.0, x_max=5.0, rtol=1e-5):
    """Compare each supplied partial with a central difference of a parent.

    Returns {name: max scaled error}; the error is |exact - fd| / max(1, |exact|).
    """
    gen = rng if isinstance(rng, np.random.Generator) else rng.generator
    u = gen.uniform(0.05, u_max, n)
    x = gen.uniform(-x_max, x_max, n)
    report = {}
    for name in sorted(coeffs.partials):
        base, du, dx = _parse_name(name)
        candidates = []
        if du:
            candidates.append(((base, du - 1, dx), "u"))
        if dx:
            candidates.append(((base, du, dx - 1), "x"))
        parent, var = next(
            (c for c in candidates if c[0][1:] == (0, 0) or _atom_name(c[0]) in coeffs.partials),
            candidates[0],
        )
        parent_fn = coeffs.partial(_atom_name(parent))
        h = 1e-6 * max(1.0, u_max if var == "u" else x_max)
        approx, uu = _fd(parent_fn, u, x, var, h)
        exact = np.asarray(coeffs.partials[name](uu, x), dtype=float) * np.ones_like(u)
        err = np.abs(exact - approx) / np.maximum(1.0, np.abs(exact))
        report[name] = float(err.max())
    return report


def check_growth(coeffs, rng, n=1000, u_max=5.0, x_max=10.0):
    """Spot-check the Lipschitz and linear-growth bounds with h.

    Returns the largest ratio (lhs / rhs) seen; values <= 1 are consistent
    with the bounds.
    """
    if coeffs.h_bound is None:
        raise DomainError("coefficient set declares no h_bound")
    gen = rng if isinstance(rng, np.random.Generator) else rng.generator
    u = gen.uniform(0.0, u_max, n)
    x = gen.uniform(-x_max, x_max, n)
    y = gen.uniform(-x_max, x_max, n)
    h = coeffs.h_bound(u)
    H = coeffs.drift_t(u) * np.ones_like(u)
    lip = (np.abs(coeffs.F(u, x) - coeffs.F(u, y)) + np.abs(coeffs.G(u, x) - coeffs.G(u, y))) / (
        h * np.abs(x - y)
    )
    grow = (np.abs(H) + np.abs(coeffs.F(u, x)) + np.abs(coeffs.G(u, x))) / (h * (1 + np.abs(x)))
    return float(max(lip.max(), grow.max()))


# --- built-in coefficient sets -------------------------------------------------


def _ex1():
    s = np.sqrt
    partials = {
        "F_u": lambda u, x: x / (2 * s(1 + u)),
        "F_x": lambda u, x: s(1 + u) + 0 * x,
        "F_xx": lambda u, x: 0 * x,
        "F_uu": lambda u, x: -x / (4 * (1 + u) ** 1.5),
        "F_ux": lambda u, x: 1 / (2 * s(1 + u)) + 0 * x,
        "F_uxx": lambda u, x: 0 * x,
        "F_xxx": lambda u, x: 0 * x,
    }
    partials.update({"G" + k[1:]: v for k, v in partials.items()})
    return CoefficientSet(
        F=lambda u, x: s(1 + u) * x,
        G=lambda u, x: s(1 + u) * x,
        H=lambda u: s(1 + u),
        partials=partials,
        h_bound=lambda u: 2 * s(1 + u),
        h_index=0.5,
        theta=1.0,
        K=1.0,
        name="ex1",
    )


def _ex2():
    s = np.sqrt
    partials = {
        "F_u": lambda u, x: x / (2 * s(1 + u)),
        "F_x": lambda u, x: s(1 + u) + 0 * x,
        "F_xx": lambda u, x: 0 * x,
        "F_uu": lambda u, x: -x / (4 * (1 + u) ** 1.5),
        "F_ux": lambda u, x: 1 / (2 * s(1 + u)) + 0 * x,
        "F_uxx": lambda u, x: 0 * x,
        "F_xxx": lambda u, x: 0 * x,
        "G_u": lambda u, x: 1 / (2 * s(1 + u)) + 0 * x,
        "G_x": lambda u, x: 0 * x,
        "G_xx": lambda u, x: 0 * x,
        "G_uu": lambda u, x: -1 / (4 * (1 + u) ** 1.5) + 0 * x,
        "G_ux": lambda u, x: 0 * x,
        "G_uxx": lambda u, x: 0 * x,
        "G_xxx": lambda u, x: 0 * x,
    }
    return CoefficientSet(
        F=lambda u, x: s(1 + u) * x,
        G=lambda u, x: s(1 + u) + 0 * x,
        H=lambda u: s(1 + u),
        partials=partials,
        h_bound=lambda u: 2 * s(1 + u),
        h_index=0.5,
        k_bound=lambda u: 3 * (1 + u),
        k_log_index=0.0,
        theta=1.0,
        K=1.0,
        additive_noise=True,
        name="ex2",
    )


def tc_gbm(mu=0.05, sigma=0.2):
    """Time-changed geometric Brownian motion dX = mu X dE + sigma X dB_E."""
    zero = lambda u, x: 0 * x  # noqa: E731
    partials = {
        "F_u": zero,
        "F_x": lambda u, x: mu + 0 * x,
        "F_xx": zero,
        "F_uu": zero,
        "F_ux": zero,
        "F_uxx": zero,
        "F_xxx": zero,
        "G_u": zero,
        "G_x": lambda u, x: sigma + 0 * x,
        "G_xx": zero,
        "G_uu": zero,
        "G_ux": zero,
        "G_uxx": zero,
        "G_xxx": zero,
    }
    bound = abs(mu) + abs(sigma)

    def exact(x0, e_t, b_e):
        return x0 * np.exp((mu - 0.5 * sigma**2) * e_t + sigma * b_e)

    return CoefficientSet(
        F=lambda u, x: mu * x,
        G=lambda u, x: sigma * x,
        H=None,
        partials=partials,
        h_bound=lambda u: bound + 0 * u,
        h_index=None,
        k_bound=lambda u: max(bound * bound, 1e-300) + 0 * u,
        k_log_index=None,
        theta=1.0,
        K=1.0,
        exact=exact,
        name="tc-gbm",
    )


REGISTRY = {"ex1": _ex1, "ex2": _ex2, "tc-gbm": tc_gbm}


def get_coefficients(name, **params):
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise DomainError(f"unknown coefficient set {name!r}; known: {sorted(REGISTRY)}") from None
    return factory(**params)
