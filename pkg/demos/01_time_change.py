"""A first look at the random clock.

We simulate a stable subordinator on a grid of inner-clock steps, turn it
into the discretized inverse E^delta, and check two facts on the way: the
inverse grows like t^beta on average, and coarsening the grid never moves
E^delta up or by more than the coarse step.

Run: python demos/01_time_change.py
"""

import numpy as np

from subdiff import NoiseStream, SubordinatorSpec, coarsen, inverse_at, sample_inverse, simulate_time_change
from subdiff.time_change import mean_inverse_stable

spec = SubordinatorSpec.stable(0.8)
delta = 2.0**-10

path = simulate_time_change(spec, delta, T=1.0, rng=NoiseStream(seed=2024), extend_to=16)
print(f"one path: N = {path.N} inner steps before D passes T=1, so E^delta_1 = {path.terminal_inverse:.4f}")

# The longest plateau of E is the biggest jump of D; that is where a particle is trapped.
jumps = np.diff(path.tau)
k = int(np.argmax(jumps))
print(f"longest trapping interval: [{path.tau[k]:.4f}, {path.tau[k + 1]:.4f}] ({jumps[k] / path.T:.1%} of the horizon)")

coarse = coarsen(path, 16)
t = np.linspace(0, 1, 1001)
gap = inverse_at(path, t) - inverse_at(coarse, t)
print(f"fine minus coarse inverse on 1001 times: min {gap.min():.5f}, max {gap.max():.5f} (bound {16 * delta:.5f})")

print("\nmean of E_t over 4000 paths vs t^beta / Gamma(1 + beta):")
times = [0.25, 0.5, 1.0, 2.0, 4.0]
e = sample_inverse(spec, times, delta, 4000, NoiseStream(7))
for t_i, m in zip(times, e.mean(axis=0)):
    print(f"  t={t_i:<5} simulated {m:.4f}   closed form {mean_inverse_stable(0.8, t_i):.4f}")
