"""When do exponential moments of the inverse subordinator exist?

For f regularly varying with index p, E[exp(f(E_t))] is finite when
p < 1/(1 - beta) and infinite above it. The classifier states the answer;
the Monte Carlo probe only looks for a running mean dominated by a single
sample. We also compare P(E_t <= u) with its small-u asymptote and bracket
the one-sided exit probability of B(E_t).

Run: python demos/03_moments.py
"""

from subdiff import (
    MomentQuery,
    NoiseStream,
    SubordinatorSpec,
    TestFunction,
    estimate_small_ball,
    exit_probability_bracket,
    probe_exp_moment,
)

for beta in (0.3, 0.5, 0.8):
    q = MomentQuery(SubordinatorSpec.stable(beta), 1.0, TestFunction.exp_of_power(2), 10_000)
    probe = probe_exp_moment(q, NoiseStream(3), delta=2.0**-10)
    print(
        f"beta={beta}: E[exp(E_1^2)] is {q.classify().value:<8}"
        f" probe says {probe.verdict_hint.value:<15} (largest sample = {probe.max_share:.0%} of the sum)"
    )

spec = SubordinatorSpec.stable(0.8)
for u in (0.1, 0.05, 0.025):
    sb = estimate_small_ball(spec, 1.0, u, 100_000, NoiseStream(4))
    print(f"P(E_1 <= {u:<5}) = {sb.p_hat:.5f} +- {sb.stderr:.5f}, asymptote nu[1,inf) u = {sb.predicted:.5f}")

b = exit_probability_bracket(spec, 1.0, 10_000, NoiseStream(5), delta=2.0**-10)
print(f"\nP(max B(E_t) <= 1 on [0,1]): {b.lower:.3f} <= {b.estimate:.3f} <= {b.upper:.3f}")
