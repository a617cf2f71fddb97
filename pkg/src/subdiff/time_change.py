"""Subordinator paths on the inner-clock grid and the discretized inverse E^delta.

A path stores D at the equidistant inner times ``n * delta``. The stopping
index ``N`` brackets the horizon, ``d_values[N] <= T < d_values[N + 1]``, and
the discretized inverse is ``E^delta_t = n * delta`` for
``t in [d_values[n], d_values[n + 1])``.
"""

from dataclasses import dataclass
import math
import struct

import numpy as np

from .errors import DomainError, SimulationLimit
from .noise import sample_increment

__all__ = [
    "DiscretizedTimeChange",
    "simulate_time_change",
    "inverse_at",
    "step_index",
    "coarsen",
    "InverseCursor",
    "sample_inverse",
    "dump_time_change",
    "load_time_change",
]

CHUNK = 2048
_HEADER = struct.Struct("<ddQQ")


@dataclass(frozen=True, eq=False)
class DiscretizedTimeChange:
    """Simulated D on the delta-grid, possibly over-extended past ``N + 1``."""

    delta: float
    T: float
    d_values: np.ndarray
    N: int

    def __post_init__(self):
        d = np.array(self.d_values, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "d_values", d)
        N = int(self.N)
        object.__setattr__(self, "N", N)
        if not self.delta > 0 or not self.T > 0:
            raise DomainError("delta and T must be positive")
        if d.ndim != 1 or d.size < N + 2:
            raise DomainError(f"d_values needs at least N + 2 = {N + 2} entries")
        if d[0] != 0.0:
            raise DomainError("d_values[0] must be 0")
        if np.any(np.diff(d) < 0):
            raise DomainError("d_values must be nondecreasing")
        if not d[N] <= self.T < d[N + 1]:
            raise DomainError("stopping index violates d[N] <= T < d[N+1]")

    @property
    def tau(self):
        """Random partition tau_0..tau_N on the outer clock."""
        return self.d_values[: self.N + 1]

    @property
    def terminal_inverse(self):
        return self.N * self.delta

    def __len__(self):
        return self.N + 1


def _stop_index(d, T):
    # first index with D > T, or len(d) if none yet
    return int(np.searchsorted(d, T, side="right"))


def simulate_time_change(spec, delta, T, rng, extend_to=1, max_steps=10**9):
    """Simulate D_{n delta} until it passes ``T``.

    With ``extend_to=m`` the path is continued up to the first index that is
    a multiple of ``m`` with D > T, which is what ``coarsen(path, m)`` needs.
    Increments are drawn in fixed-size chunks so the n-th increment does not
    depend on how far the path is extended.
    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not T > 0:
        raise DomainError("T must be positive")
    m = int(extend_to)
    if m < 1:
        raise DomainError("extend_to must be a positive integer")

    chunks = [np.zeros(1)]
    last = 0.0
    length = 1
    stop = None
    while True:
        inc = sample_increment(spec, delta, rng, size=CHUNK)
        block = last + np.cumsum(inc)
        chunks.append(block)
        if stop is None and block[-1] > T:
            stop = length + _stop_index(block, T)
        length += CHUNK
        last = block[-1]
        if stop is not None:
            need = -(-stop // m) * m + 1
            if length >= need:
                break
        if length > max_steps:
            raise SimulationLimit(f"time change did not pass T={T} within {max_steps} steps")
    d = np.concatenate(chunks)[:need]
    return DiscretizedTimeChange(delta, T, d, stop - 1)


def _check_t(path, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > path.T):
        raise DomainError(f"t must lie in [0, {path.T}]")
    return t_arr


def step_index(path, t):
    """n_t = max{n : tau_n <= t}; vectorised over ``t``."""
    t_arr = _check_t(path, t)
    n = np.searchsorted(path.d_values[: path.N + 2], t_arr, side="right") - 1
    return int(n) if n.ndim == 0 else n


def inverse_at(path, t):
    """E^delta_t for ``t`` in [0, T]."""
    n = step_index(path, t)
    return n * path.delta


class InverseCursor:
    """Amortised O(1) lookups for nondecreasing query times."""

    def __init__(self, path):
        self.path = path
        self.n = 0

    def step_index(self, t):
        if t < 0 or t > self.path.T:
            raise DomainError(f"t must lie in [0, {self.path.T}]")
        d = self.path.d_values
        if t < d[self.n]:
            raise DomainError("InverseCursor queries must be nondecreasing")
        while d[self.n + 1] <= t:
            self.n += 1
        return self.n

    def inverse_at(self, t):
        return self.step_index(t) * self.path.delta


def coarsen(path, m):
    """The path seen at step ``m * delta``: every m-th grid value."""
    m = int(m)
    if m < 1:
        raise DomainError("m must be a positive integer")
    if m == 1:
        return path
    sub = path.d_values[::m]
    stop = _stop_index(sub, path.T)
    if stop >= sub.size:
        raise DomainError(
            f"fine path too short to coarsen by {m}; re-simulate with extend_to={m}"
        )
    return DiscretizedTimeChange(path.delta * m, path.T, sub[: stop + 1], stop - 1)


def sample_inverse(spec, times, delta, n_paths, rng, chunk=256):
    """E^delta_t at each of ``times`` for ``n_paths`` independent paths.

    Batched over paths; returns an array of shape ``(n_paths, len(times))``.
    Uses E^delta_t = delta * #{k >= 1 : D_{k delta} <= t}.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise DomainError("times must be nonnegative")
    if not delta > 0:
        raise DomainError("delta must be positive")
    t_max = times.max()
    level = np.zeros(n_paths)
    counts = np.zeros((n_paths, times.size), dtype=np.int64)
    active = np.arange(n_paths)
    while active.size:
        inc = sample_increment(spec, delta, rng, size=(active.size, chunk))
        d = level[active, None] + np.cumsum(inc, axis=1)
        for j, t in enumerate(times):
            counts[active, j] += np.count_nonzero(d <= t, axis=1)
        level[active] = d[:, -1]
        active = active[level[active] <= t_max]
    return counts * delta


def dump_time_change(path, fh):
    """Little-endian binary dump: header (delta, T, N, length) then float64 d_values."""
    d = np.ascontiguousarray(path.d_values, dtype="<f8")
    fh.write(_HEADER.pack(path.delta, path.T, path.N, d.size))
    fh.write(d.tobytes())


def load_time_change(fh):
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise DomainError("truncated time-change header")
    delta, T, N, size = _HEADER.unpack(head)
    raw = fh.read(8 * size)
    if len(raw) != 8 * size:
        raise DomainError("truncated time-change data")
    return DiscretizedTimeChange(delta, T, np.frombuffer(raw, dtype="<f8").copy(), N)


def mean_inverse_stable(beta, t):
    """E[E_t] = t^beta / Gamma(1 + beta) for the inverse beta-stable subordinator."""
    return t**beta / math.gamma(1.0 + beta)
