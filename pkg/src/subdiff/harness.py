"""Coupled strong-error experiments and log2-log2 order fitting.

Every path ``i`` owns the stream ``(seed, i)``. The subordinator is simulated
once at the reference step and coarsened by subsampling; Brownian
increments at a coarse step are exact block sums of the reference ones. So
the reference and all coarse solutions see one realization of (D, B).
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import io
import json
import math
import os

import numpy as np

from .coefficients import CoefficientSet, get_coefficients
from .errors import DomainError, FitError, NumericOverflow
from .noise import NoiseStream, SubordinatorSpec
from .schemes import SUBORDINATOR_CHANNEL, InnerClockNoise, SchemeConfig, simulate_solution
from .time_change import coarsen, simulate_time_change

__all__ = [
    "ExperimentConfig",
    "ConvergenceRow",
    "ConvergenceReport",
    "CoupledPath",
    "simulate_coupled_path",
    "run_convergence",
    "fit_order",
    "emit_report",
    "read_csv_rows",
]

SCHEMA_VERSION = 1
ERROR_MODES = ("reference", "closed_form")
ERROR_POINTS = ("node", "terminal")


def _is_dyadic(x):
    m, e = math.frexp(x)
    return x > 0 and m == 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one convergence experiment.

    ``error_point="node"`` compares solutions at the coarse path's last
    partition point tau_N <= T, where reference and coarse runs sit at the
    same inner time; ``"terminal"`` compares the piecewise-constant values at
    T itself, which also picks up the Brownian increment between the two
    inner clocks' last grid points.
    """

    sde: object = "ex1"
    sde_params: dict = field(default_factory=dict)
    subordinator: SubordinatorSpec = field(default_factory=lambda: SubordinatorSpec.stable(0.8))
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    T: float = 1.0
    x0: float = 1.0
    delta_ref: float = 2.0**-13
    deltas: tuple = tuple(2.0**-k for k in range(12, 6, -1))
    n_paths: int = 100
    seed: int = 0
    error_mode: str = "reference"
    error_point: str = "node"

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(sorted(float(d) for d in self.deltas)))
        if not _is_dyadic(self.delta_ref):
            raise DomainError(f"delta_ref must be a power of two, got {self.delta_ref}")
        if not self.deltas:
            raise DomainError("deltas must not be empty")
        for d in self.deltas:
            ratio = d / self.delta_ref
            if ratio < 2 or not _is_dyadic(ratio):
                raise DomainError(f"delta {d} is not 2^j * delta_ref with j >= 1")
            if d >= 1:
                raise DomainError("every delta must be < 1")
        if self.n_paths < 1:
            raise DomainError("n_paths must be positive")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if self.error_mode not in ERROR_MODES:
            raise DomainError(f"error_mode must be one of {ERROR_MODES}")
        if self.error_point not in ERROR_POINTS:
            raise DomainError(f"error_point must be one of {ERROR_POINTS}")
        if self.error_mode == "closed_form" and self.coefficients().exact is None:
            raise DomainError("closed_form error needs a coefficient set with an exact solution")

    def coefficients(self):
        if isinstance(self.sde, CoefficientSet):
            return self.sde
        return get_coefficients(self.sde, **self.sde_params)

    @property
    def factors(self):
        return [int(round(d / self.delta_ref)) for d in self.deltas]

    def to_dict(self):
        if isinstance(self.sde, CoefficientSet):
            raise DomainError("custom coefficient sets are not serializable")
        return {
            "schema": SCHEMA_VERSION,
            "sde": self.sde,
            "sde_params": dict(self.sde_params),
            "subordinator": self.subordinator.to_dict(),
            "scheme": self.scheme.to_dict(),
            "T": self.T,
            "x0": self.x0,
            "delta_ref": self.delta_ref,
            "deltas": list(self.deltas),
            "n_paths": self.n_paths,
            "seed": self.seed,
            "error_mode": self.error_mode,
            "error_point": self.error_point,
        }

    @classmethod
    def from_dict(cls, d, seed=None):
        d = dict(d)
        schema = d.pop("schema", None)
        if schema != SCHEMA_VERSION:
            raise DomainError(f"config schema must be {SCHEMA_VERSION}, got {schema!r}")
        allowed = set(cls.__dataclass_fields__)
        unknown = set(d) - allowed
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        if "subordinator" in d:
            d["subordinator"] = SubordinatorSpec.from_dict(d["subordinator"])
        if "scheme" in d:
            d["scheme"] = SchemeConfig.from_dict(d["scheme"])
        if "deltas" in d:
            d["deltas"] = tuple(d["deltas"])
        if seed is not None and "seed" not in d:
            d["seed"] = seed
        return cls(**d)

    @classmethod
    def from_json(cls, text, seed=None):
        return cls.from_dict(json.loads(text), seed=seed)


@dataclass(frozen=True, eq=False)
class CoupledPath:
    """Per-path outcome; ``nan`` marks an overflowed run."""

    index: int
    fine: object
    coarse: list
    node_errors: np.ndarray
    terminal_errors: np.ndarray
    sup_errors: np.ndarray
    reference_failed: bool = False


def simulate_coupled_path(config, index, coeffs=None):
    coeffs = coeffs if coeffs is not None else config.coefficients()
    factors = config.factors
    stream = NoiseStream(config.seed, index)
    fine = simulate_time_change(
        config.subordinator,
        config.delta_ref,
        config.T,
        stream.substream(SUBORDINATOR_CHANNEL),
        extend_to=max(factors),
    )
    inc = InnerClockNoise.draw(stream, fine.N, config.delta_ref, with_area=config.scheme.needs_area)
    nan = np.full(len(factors), np.nan)
    if config.error_mode == "closed_form":
        b = inc.brownian_path()[: fine.N + 1]
        ref = coeffs.exact(config.x0, np.arange(fine.N + 1) * config.delta_ref, b)
    else:
        try:
            ref = simulate_solution(coeffs, config.scheme, fine, x0=config.x0, increments=inc).values
        except NumericOverflow:
            return CoupledPath(index, fine, [], nan, nan.copy(), nan.copy(), True)
    node = nan.copy()
    term = nan.copy()
    sup = nan.copy()
    coarse_paths = []
    k = np.arange(fine.N + 1)
    for j, m in enumerate(factors):
        ctc = coarsen(fine, m)
        coarse_paths.append(ctc)
        try:
            sol = simulate_solution(coeffs, config.scheme, ctc, x0=config.x0, increments=inc.coarsen(m))
        except NumericOverflow:
            continue
        x = sol.values
        node[j] = abs(x[-1] - ref[ctc.N * m])
        term[j] = abs(x[-1] - ref[fine.N])
        sup[j] = np.max(np.abs(x[k // m] - ref))
    return CoupledPath(index, fine, coarse_paths, node, term, sup)


def _path_errors(args):
    config, index = args
    p = simulate_coupled_path(config, index)
    return p.node_errors, p.terminal_errors, p.sup_errors


@dataclass(frozen=True)
class ConvergenceRow:
    delta: float
    error: float | None
    excluded: int
    sup_error: float | None = None
    terminal_error: float | None = None


@dataclass(frozen=True)
class ConvergenceReport:
    rows: list
    slope: float | None
    intercept: float | None
    r_squared: float | None
    diagnostic: str = ""
    config: dict | None = None

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "config": self.config,
            "rows": [dict(r.__dict__) for r in self.rows],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "diagnostic": self.diagnostic,
        }


def fit_order(rows):
    """OLS of log2(error) on log2(delta); returns (slope, intercept, r_squared)."""
    pairs = [(float(d), float(e)) for d, e in rows]
    if len(pairs) < 2:
        raise FitError("need at least two rows to fit an order")
    if any(not (e > 0 and math.isfinite(e)) for _, e in pairs):
        raise FitError("errors must be positive and finite")
    if any(not d > 0 for d, _ in pairs):
        raise FitError("step sizes must be positive")
    x = np.log2([d for d, _ in pairs])
    y = np.log2([e for _, e in pairs])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if sxx == 0:
        raise FitError("all step sizes are equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum((y - (intercept + slope * x)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return slope, intercept, r2


def _row_means(errors):
    """Per-column mean over finite entries (exact summation) and exclusion counts."""
    means, excluded = [], []
    for col in errors.T:
        ok = col[np.isfinite(col)]
        excluded.append(int(col.size - ok.size))
        means.append(math.fsum(ok) / ok.size if ok.size else None)
    return means, excluded


def run_convergence(config, threads=1):
    n = config.n_paths
    if threads > 1 and not isinstance(config.sde, CoefficientSet):
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_path_errors, [(config, i) for i in range(n)], chunksize=4))
    else:
        coeffs = config.coefficients()
        results = []
        for i in range(n):
            p = simulate_coupled_path(config, i, coeffs)
            results.append((p.node_errors, p.terminal_errors, p.sup_errors))
    node = np.array([r[0] for r in results])
    term = np.array([r[1] for r in results])
    sup = np.array([r[2] for r in results])
    # exclude a path from a row whenever any of its runs for that row overflowed
    bad = ~(np.isfinite(node) & np.isfinite(term) & np.isfinite(sup))
    node[bad] = term[bad] = sup[bad] = np.nan
    chosen = node if config.error_point == "node" else term
    err, excluded = _row_means(chosen)
    sup_m, _ = _row_means(sup)
    term_m, _ = _row_means(term)
    rows = [
        ConvergenceRow(d, e, x, s, t)
        for d, e, x, s, t in zip(config.deltas, err, excluded, sup_m, term_m)
    ]
    cfg = None if isinstance(config.sde, CoefficientSet) else config.to_dict()
    missing = [r.delta for r in rows if r.error is None]
    if missing:
        return ConvergenceReport(
            rows, None, None, None, f"all paths excluded at delta={missing}; no fit", cfg
        )
    slope, intercept, r2 = fit_order([(r.delta, r.error) for r in rows])
    return ConvergenceReport(rows, slope, intercept, r2, "", cfg)


# --- output -----------------------------------------------------------------


def _g(x):
    return "" if x is None else f"{x:.15g}"


def _csv_text(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["delta", "log2_delta", "error", "log2_error", "excluded"])
    for r in report.rows:
        log_e = math.log2(r.error) if r.error else None
        w.writerow([_g(r.delta), _g(math.log2(r.delta)), _g(r.error), _g(log_e), r.excluded])
    return buf.getvalue()


def read_csv_rows(text):
    """Parse emitted CSV back into (delta, error, excluded) tuples."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        err = float(rec["error"]) if rec["error"] else None
        out.append((float(rec["delta"]), err, int(rec["excluded"])))
    return out


def _svg_text(report, width=480, height=360, pad=48):
    pts = [(math.log2(r.delta), math.log2(r.error)) for r in report.rows if r.error]
    if not pts:
        raise FitError("nothing to plot")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if report.slope is not None:
        ys += [report.intercept + report.slope * x for x in (min(xs), max(xs))]
    x0, x1 = min(xs) - 0.5, max(xs) + 0.5
    y0, y1 = min(ys) - 0.5, max(ys) + 0.5

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    f = "{:.15g}".format
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<path d="M{pad} {height - pad} H{width - pad} M{pad} {height - pad} V{pad}" '
        'stroke="black" fill="none"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">log2 delta</text>',
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
        'text-anchor="middle">log2 error</text>',
    ]
    for x, y in pts:
        parts.append(f'<circle cx="{f(sx(x))}" cy="{f(sy(y))}" r="4" fill="black"/>')
    if report.slope is not None:
        a, b = min(xs), max(xs)
        parts.append(
            f'<line x1="{f(sx(a))}" y1="{f(sy(report.intercept + report.slope * a))}" '
            f'x2="{f(sx(b))}" y2="{f(sy(report.intercept + report.slope * b))}" '
            'stroke="black" stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{pad + 8}" y="{pad}">y = {report.slope:.4f} x + {report.intercept:.4f}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_report(report, fmt):
    if fmt == "csv":
        return _csv_text(report)
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt in ("svg", "svg_plotdata"):
        return _svg_text(report)
    raise DomainError(f"unknown report format {fmt!r}")


def emit_report(report, fmt, path):
    text = render_report(report, fmt)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {os.fspath(path)!r}: {exc.strerror}") from exc
    return path
