"""Strong convergence orders of the three test problems.

The two experiment SDEs are run with the Euler-Maruyama scheme against a
fine reference on the same noise. Time-changed geometric Brownian motion is
compared against its closed form, once with Euler-Maruyama and once with
Milstein, which shows the gap between order 1/2 and order 1.

Expect about half a minute in total on one core. Pass --svg DIR to write
one log-log plot per experiment.

Run: python demos/02_convergence_orders.py [--svg out/]
"""

import argparse
import math
import pathlib
import time

from subdiff import ExperimentConfig, SchemeConfig, emit_report, run_convergence

parser = argparse.ArgumentParser()
parser.add_argument("--svg", type=pathlib.Path, default=None)
parser.add_argument("--paths", type=int, default=100)
args = parser.parse_args()

experiments = {
    "ex1-em": ExperimentConfig(sde="ex1", n_paths=args.paths, seed=1),
    "ex2-em": ExperimentConfig(sde="ex2", n_paths=args.paths, seed=1),
    "gbm-em": ExperimentConfig(sde="tc-gbm", error_mode="closed_form", n_paths=args.paths, seed=1),
    "gbm-milstein": ExperimentConfig(
        sde="tc-gbm", scheme=SchemeConfig("milstein"), error_mode="closed_form", n_paths=args.paths, seed=1
    ),
}

for name, cfg in experiments.items():
    t0 = time.perf_counter()
    rep = run_convergence(cfg)
    print(f"\n{name}: fitted order {rep.slope:.3f} (r^2 {rep.r_squared:.3f}, {time.perf_counter() - t0:.1f}s)")
    print("   delta        error        sup-in-time error")
    for r in rep.rows:
        print(f"   2^{math.log2(r.delta):<8.0f} {r.error:.4e}   {r.sup_error:.4e}")
    if args.svg:
        args.svg.mkdir(parents=True, exist_ok=True)
        emit_report(rep, "svg", args.svg / f"{name}.svg")

print(
    "\nThe ex2 order reads a little above 1 at this reference step: the reference's own"
    "\nerror is correlated with the coarse errors, so differences shrink faster than the"
    "\nerrors themselves. Rerunning with delta_ref = 2^-16 brings it back to about 1."
    "\n\nThe sup-in-time column decays like delta^(1/2) for every scheme, Milstein included:"
    "\nbetween grid points the piecewise-constant solution misses the Brownian motion"
    "\nrun over up to one inner step. Errors in the main column are taken at the last"
    "\ngrid point tau_N, where the scheme and its comparison sit at the same inner time."
)
