"""History functions: the state objects of time-delay systems.

A history is a curve phi on [-delay, 0] with values in R^n, stored as
samples on a strictly increasing grid together with an interpolation
rule (piecewise-linear by default, cubic Hermite optional).  The sup
norm is the supremum of the Euclidean norm |phi(tau)| over the window;
for piecewise-linear histories it is attained at a grid node, so it is
computed exactly.

The module also provides the two-branch extension used to form upper
right-hand derivatives of functionals along solutions: for a step
h in [0, delay) and a direction w, the extended history shifts phi left
by h and continues linearly with slope w on [-h, 0].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

_DEDUPE_REL = 1e-12
_EDGE_REL = 1e-9

__all__ = [
    "HistoryFunction",
    "constant_history",
    "zero_history",
    "random_history",
    "driver_extension",
    "window",
]


def _edge_tol(delay: float) -> float:
    return _EDGE_REL * max(1.0, delay)


@dataclass(frozen=True)
class HistoryFunction:
    """Sampled curve on [-delay, 0] with interpolation.

    Immutable after construction; instances are safe to share across
    parallel workers.
    """

    delay: float
    grid: np.ndarray
    values: np.ndarray
    interpolation: str = "linear"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        if grid.ndim != 1 or values.ndim != 2 or values.shape[0] != grid.shape[0]:
            raise ValueError("grid must be (m,), values (m, n) with matching m")
        if self.interpolation not in ("linear", "cubic"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        if self.delay == 0.0:
            if grid.shape[0] != 1 or grid[0] != 0.0:
                raise ValueError("zero-delay history must have the single node 0")
        else:
            if grid.shape[0] < 2 or np.any(np.diff(grid) <= 0):
                raise ValueError("grid must be strictly increasing")
            if grid[0] != -self.delay or grid[-1] != 0.0:
                raise ValueError("grid must span exactly [-delay, 0]")
        if not np.all(np.isfinite(values)):
            raise ValueError("history values must be finite")
        grid.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def _trusted(cls, delay, grid, values, interpolation="linear"):
        # Hot-path constructor for solver-internal grids; skips validation.
        obj = object.__new__(cls)
        object.__setattr__(obj, "delay", float(delay))
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", values)
        object.__setattr__(obj, "interpolation", interpolation)
        return obj

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @cached_property
    def _spline(self):
        from scipy.interpolate import CubicHermiteSpline

        slopes = np.gradient(self.values, self.grid, axis=0)
        return CubicHermiteSpline(self.grid, self.values, slopes, axis=0)

    def eval(self, tau):
        """Value at tau in [-delay, 0]; exact at grid nodes.

        Accepts a scalar or a 1-d array of query points.
        """
        tau = np.asarray(tau, dtype=float)
        scalar = tau.ndim == 0
        t = np.atleast_1d(tau)
        tol = _edge_tol(self.delay)
        if np.any(t < -self.delay - tol) or np.any(t > tol):
            raise ValueError(f"tau outside [-{self.delay}, 0]")
        t = np.clip(t, -self.delay, 0.0)
        if self.grid.shape[0] == 1:
            out = np.broadcast_to(self.values[0], (t.shape[0], self.n)).copy()
        elif self.interpolation == "cubic":
            out = self._spline(t)
        else:
            idx = np.clip(np.searchsorted(self.grid, t, side="right") - 1,
                          0, self.grid.shape[0] - 2)
            g0 = self.grid[idx]
            span = self.grid[idx + 1] - g0
            lam = (t - g0) / span
            out = (1.0 - lam)[:, None] * self.values[idx] + lam[:, None] * self.values[idx + 1]
        return out[0] if scalar else out

    def sup_norm(self) -> float:
        """sup of |phi(tau)| over [-delay, 0].

        Exact for piecewise-linear histories (the Euclidean norm along a
        linear segment is convex, so it peaks at an endpoint).  Cubic
        histories are oversampled 8x per segment, a documented
        approximation.
        """
        node_max = float(np.max(np.linalg.norm(self.values, axis=1)))
        if self.interpolation != "cubic" or self.grid.shape[0] < 2:
            return node_max
        offsets = np.linspace(0.0, 1.0, 10)[1:-1]
        seg = self.grid[:-1][:, None] + offsets[None, :] * np.diff(self.grid)[:, None]
        vals = self._spline(seg.ravel())
        return max(node_max, float(np.max(np.linalg.norm(vals, axis=1))))


def constant_history(delay: float, value) -> HistoryFunction:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    if delay == 0.0:
        return HistoryFunction(0.0, np.array([0.0]), value[None, :])
    grid = np.array([-delay, 0.0])
    return HistoryFunction(delay, grid, np.vstack([value, value]))


def zero_history(delay: float, n: int) -> HistoryFunction:
    return constant_history(delay, np.zeros(n))


def random_history(seed, n: int, delay: float, norm_bound: float,
                   modes: int) -> HistoryFunction:
    """Deterministic-in-seed random history.

    A random constant plus `modes` random Fourier modes on [-delay, 0],
    rescaled so the sup norm equals norm_bound (or the zero history for
    norm_bound = 0).  `seed` may be an int or a tuple of ints; the same
    seed always yields a bitwise-identical history.
    """
    if norm_bound < 0:
        raise ValueError("norm_bound must be >= 0")
    if modes < 0:
        raise ValueError("modes must be >= 0")
    rng = np.random.default_rng(seed)
    const = rng.standard_normal(n)
    if delay == 0.0:
        values = const[None, :]
        grid = np.array([0.0])
    else:
        npts = max(2, 8 * modes + 1)
        grid = np.linspace(-delay, 0.0, npts)
        values = np.tile(const, (npts, 1))
        for j in range(1, modes + 1):
            amp_c = rng.standard_normal(n)
            amp_s = rng.standard_normal(n)
            phase = j * np.pi * grid / delay
            values = values + np.outer(np.cos(phase), amp_c) + np.outer(np.sin(phase), amp_s)
    peak = float(np.max(np.linalg.norm(values, axis=1)))
    if norm_bound == 0.0 or peak == 0.0:
        values = np.zeros_like(values)
    else:
        values = values * (norm_bound / peak)
    return HistoryFunction(delay, grid, values)


def driver_extension(phi: HistoryFunction, h: float, w) -> HistoryFunction:
    """Extension of phi by a step h in [0, delay) with slope w.

    The result equals phi(. + h) on [-delay, -h) and continues linearly
    from phi(0) with slope w on [-h, 0].  The grid is the union of the
    shifted grid and the breakpoint -h, so no interpolation error is
    introduced at the kink.
    """
    if h == 0.0:
        return phi
    if h < 0 or h >= phi.delay:
        raise ValueError("step must satisfy 0 <= h < delay")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (phi.n,):
        raise ValueError(f"slope must have shape ({phi.n},)")
    tol = _DEDUPE_REL * max(1.0, phi.delay)
    shifted = phi.grid - h
    keep = (shifted > -phi.delay + tol) & (shifted < -h - tol)
    mid_grid = shifted[keep]
    mid_vals = phi.values[keep]
    head = phi.eval(-phi.delay + h)
    tail_val = phi.values[-1] + h * w
    grid = np.concatenate(([-phi.delay], mid_grid, [-h, 0.0]))
    values = np.vstack([head, mid_vals, phi.values[-1], tail_val])
    return HistoryFunction(phi.delay, grid, values, phi.interpolation)


def window(traj, t: float) -> HistoryFunction:
    """The history x_t(tau) = x(t + tau) extracted from a trajectory.

    `traj` is any object with attributes `times` (increasing, starting
    at -delay), `values` ((len(times), n) array) and `delay`.
    """
    delay = traj.delay
    times = traj.times
    values = traj.values
    tol = _edge_tol(max(delay, abs(times[-1])))
    if t < -tol or t > times[-1] + tol:
        raise ValueError(f"t={t} outside the trajectory domain [0, {times[-1]}]")
    t = min(max(t, 0.0), times[-1])
    lo = t - delay
    i0 = np.searchsorted(times, lo, side="right")
    i1 = np.searchsorted(times, t, side="left")
    if delay == 0.0:
        return HistoryFunction._trusted(
            0.0, np.array([0.0]), _interp_rows(times, values, t)[None, :])
    grid = np.concatenate(([-delay], times[i0:i1] - t, [0.0]))
    vals = np.vstack([
        _interp_rows(times, values, lo),
        values[i0:i1],
        _interp_rows(times, values, t),
    ])
    return HistoryFunction._trusted(delay, grid, vals)


def _interp_rows(times: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    idx = int(np.searchsorted(times, t, side="right")) - 1
    idx = min(max(idx, 0), times.shape[0] - 2)
    g0 = times[idx]
    lam = (t - g0) / (times[idx + 1] - g0)
    lam = min(max(lam, 0.0), 1.0)
    return (1.0 - lam) * values[idx] + lam * values[idx + 1]
