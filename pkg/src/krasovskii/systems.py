"""Delay systems dx/dt = f(x_t, u(t)) and input signals.

Provides three built-in planar benchmark systems (a cubically coupled
pair, its perturbed variant with bounded modeling uncertainties, and a
variant with an extra -x2^3 damping term that defeats any quadratic
lower growth bound) plus an analytically solvable scalar baseline
dx/dt = -a x(t) + b x(t - delay) + u(t).

Vector fields are pure callables (HistoryFunction, input vector) -> R^n
with f(0, 0) = 0, asserted once at construction.  Systems that depend on
the history only through phi(0) and phi(-delay) also expose a
`pointwise` evaluator, which the solver uses as a fast path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .histories import HistoryFunction, random_history, zero_history

__all__ = [
    "DelaySystem",
    "InputSignal",
    "UncertaintyPair",
    "make_example1",
    "make_example2",
    "make_example3",
    "make_linear_baseline",
    "zero_input",
    "constant_input",
    "step_input",
    "sinusoid_input",
    "piecewise_noise_input",
    "shift_input",
    "build_system",
]


@dataclass(frozen=True)
class DelaySystem:
    """Immutable system description; `field` must be pure."""

    n: int
    m: int
    delay: float
    field: Callable[[HistoryFunction, np.ndarray], np.ndarray]
    name: str = ""
    # optional fast evaluator f(x(t), x(t - delay), v) for fields that read
    # the history only at 0 and -delay
    pointwise: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be nonnegative")
        origin = np.asarray(self.field(zero_history(self.delay, self.n),
                                       np.zeros(self.m)), dtype=float)
        if origin.shape != (self.n,) or np.max(np.abs(origin)) > 1e-12:
            raise ValueError(f"field must satisfy f(0, 0) = 0, got {origin}")
        if self.pointwise is not None:
            z = np.zeros(self.n)
            pw = np.asarray(self.pointwise(z, z, np.zeros(self.m)), dtype=float)
            if np.max(np.abs(pw)) > 1e-12:
                raise ValueError("pointwise evaluator must satisfy f(0, 0) = 0")


@dataclass(frozen=True)
class InputSignal:
    """Input u(t) for t >= 0 with an exact windowed sup.

    window_sup(t1, t2) returns the essential sup of |u| on [t1, t2]; it
    is monotone under interval inclusion.
    """

    m: int
    evaluate: Callable[[float], np.ndarray]
    window_sup: Callable[[float, float], float]
    name: str = ""


@dataclass(frozen=True)
class UncertaintyPair:
    """Two scalar functionals of the history, each bounded by the sup norm."""

    d1: Callable[[HistoryFunction], float]
    d2: Callable[[HistoryFunction], float]

    def validate(self, n: int, delay: float, probes: int = 100) -> None:
        """Probe |d_i(phi)| <= sup|phi| on seeded random histories.

        A contract check, not a proof.
        """
        bounds = (0.1, 1.0, 10.0)
        mode_choices = (0, 2, 8)
        for i in range(probes):
            phi = random_history((911, i), n, delay,
                                 bounds[i % 3], mode_choices[(i // 3) % 3])
            cap = phi.sup_norm() * (1.0 + 1e-9) + 1e-15
            for tag, d in (("d1", self.d1), ("d2", self.d2)):
                if abs(float(d(phi))) > cap:
                    raise ValueError(
                        f"uncertainty {tag} violates |d(phi)| <= sup|phi| "
                        f"on probe {i}")


ZERO_UNCERTAINTY = UncertaintyPair(lambda phi: 0.0, lambda phi: 0.0)


def make_example1(delay: float) -> DelaySystem:
    """Planar system with a delayed cross-coupling and cubic rotation terms."""

    def field(phi, v):
        x = phi.eval(0.0)
        xd = phi.eval(-delay)
        q = x[0] * x[0] + xd[1] * xd[1]
        return np.array([-0.5 * x[0] + xd[1] + x[1] * q,
                         -2.0 * x[1] - x[0] * q + v[0]])

    def pointwise(x, xd, v):
        q = x[0] * x[0] + xd[1] * xd[1]
        return np.array([-0.5 * x[0] + xd[1] + x[1] * q,
                         -2.0 * x[1] - x[0] * q + v[0]])

    return DelaySystem(2, 1, delay, field, "example1", pointwise)


def make_example2(delay: float, epsilon: float = 0.0,
                  d: UncertaintyPair | None = None) -> DelaySystem:
    """Perturbed variant: x1 self-coupling through the delay plus
    uncertainty terms epsilon*d_i(x_t) with |d_i(phi)| <= sup|phi|.

    With epsilon = 0 and d = 0 the first equation still reads
    x1(t - delay), unlike example1's x2(t - delay); this follows the
    defining equations of this variant.
    """
    if d is None:
        d = ZERO_UNCERTAINTY
    else:
        d.validate(2, delay)

    def field(phi, v):
        x = phi.eval(0.0)
        xd = phi.eval(-delay)
        q = x[0] * x[0] + xd[1] * xd[1]
        return np.array([
            -0.5 * x[0] + xd[0] + x[1] * q + epsilon * d.d1(phi),
            -2.0 * x[1] - x[0] * q + v[0] + epsilon * d.d2(phi),
        ])

    pointwise = None
    if d is ZERO_UNCERTAINTY or epsilon == 0.0:
        def pointwise(x, xd, v):
            q = x[0] * x[0] + xd[1] * xd[1]
            return np.array([-0.5 * x[0] + xd[0] + x[1] * q,
                             -2.0 * x[1] - x[0] * q + v[0]])

    return DelaySystem(2, 1, delay, field, f"example2(eps={epsilon:g})", pointwise)


def make_example3(delay: float) -> DelaySystem:
    """example2 with epsilon = 0 plus an extra -x2^3 term in the second
    equation.  The quartic it induces in x(0)'f(x_t, .) defeats every
    quadratic lower growth bound."""

    def field(phi, v):
        x = phi.eval(0.0)
        xd = phi.eval(-delay)
        q = x[0] * x[0] + xd[1] * xd[1]
        return np.array([
            -0.5 * x[0] + xd[0] + x[1] * q,
            -2.0 * x[1] - x[1] ** 3 - x[0] * q + v[0],
        ])

    def pointwise(x, xd, v):
        q = x[0] * x[0] + xd[1] * xd[1]
        return np.array([-0.5 * x[0] + xd[0] + x[1] * q,
                         -2.0 * x[1] - x[1] ** 3 - x[0] * q + v[0]])

    return DelaySystem(2, 1, delay, field, "example3", pointwise)


def make_linear_baseline(a: float, b: float, delay: float) -> DelaySystem:
    """Scalar dx/dt = -a x(t) + b x(t - delay) + u(t); solvable by hand."""

    def field(phi, v):
        return np.array([-a * phi.eval(0.0)[0] + b * phi.eval(-delay)[0] + v[0]])

    def pointwise(x, xd, v):
        return np.array([-a * x[0] + b * xd[0] + v[0]])

    return DelaySystem(1, 1, delay, field, f"linear(a={a:g},b={b:g})", pointwise)


# ---------------------------------------------------------------------------
# input signals

def zero_input(m: int = 1) -> InputSignal:
    z = np.zeros(m)
    return InputSignal(m, lambda t: z, lambda t1, t2: 0.0, "zero")


def constant_input(value) -> InputSignal:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    mag = float(np.linalg.norm(value))
    return InputSignal(value.shape[0], lambda t: value, lambda t1, t2: mag,
                       f"constant({value})")


def step_input(t_switch: float, before, after) -> InputSignal:
    before = np.atleast_1d(np.asarray(before, dtype=float))
    after = np.atleast_1d(np.asarray(after, dtype=float))
    if before.shape != after.shape:
        raise ValueError("before/after must have the same dimension")
    nb, na = float(np.linalg.norm(before)), float(np.linalg.norm(after))

    def evaluate(t):
        return after if t >= t_switch else before

    def window_sup(t1, t2):
        if t2 < t_switch:
            return nb
        if t1 >= t_switch:
            return na
        return max(nb, na)

    return InputSignal(before.shape[0], evaluate, window_sup,
                       f"step(t={t_switch:g})")


def sinusoid_input(amplitude: float, omega: float, phase: float = 0.0) -> InputSignal:
    def evaluate(t):
        return np.array([amplitude * np.sin(omega * t + phase)])

    def window_sup(t1, t2):
        if omega == 0.0:
            return abs(amplitude * np.sin(phase))
        # |sin| peaks where omega*t + phase = pi/2 + k*pi
        best = max(abs(np.sin(omega * t1 + phase)), abs(np.sin(omega * t2 + phase)))
        k_lo = np.ceil((omega * t1 + phase - np.pi / 2) / np.pi)
        k_hi = np.floor((omega * t2 + phase - np.pi / 2) / np.pi)
        if k_hi >= k_lo:
            best = 1.0
        return abs(amplitude) * best

    return InputSignal(1, evaluate, window_sup,
                       f"sinusoid(A={amplitude:g},w={omega:g})")


def piecewise_noise_input(seed, amplitude: float, switch_dt: float,
                          m: int = 1) -> InputSignal:
    """Seeded piecewise-constant noise, uniform in [-amplitude, amplitude]."""
    if switch_dt <= 0:
        raise ValueError("switch_dt must be positive")

    def _segment(j: int) -> np.ndarray:
        rng = np.random.default_rng((seed, j) if np.isscalar(seed) else (*seed, j))
        return rng.uniform(-amplitude, amplitude, m)

    def evaluate(t):
        return _segment(int(np.floor(t / switch_dt)))

    def window_sup(t1, t2):
        j1 = int(np.floor(t1 / switch_dt))
        j2 = int(np.floor(t2 / switch_dt))
        return max(float(np.linalg.norm(_segment(j)))
                   for j in range(j1, j2 + 1))

    return InputSignal(m, evaluate, window_sup, f"noise(A={amplitude:g})")


def shift_input(u: InputSignal, offset: float) -> InputSignal:
    """u shifted left: the result evaluated at t equals u(t + offset)."""
    return InputSignal(u.m,
                       lambda t: u.evaluate(t + offset),
                       lambda t1, t2: u.window_sup(t1 + offset, t2 + offset),
                       f"{u.name}+{offset:g}")


# ---------------------------------------------------------------------------
# registry used by the CLI

def build_system(name: str, delay: float, params: dict | None = None) -> DelaySystem:
    params = dict(params or {})
    if name == "example1":
        if params:
            raise ValueError(f"unknown example1 parameter(s): {sorted(params)}")
        return make_example1(delay)
    if name == "example2":
        eps = float(params.pop("epsilon", 0.0))
        d = None
        if params.pop("uncertainty", "") == "delayed":
            # built-in bounded uncertainty: component values at -delay
            d = UncertaintyPair(lambda phi: float(phi.eval(-delay)[0]),
                                lambda phi: float(phi.eval(-delay)[1]))
        if params:
            raise ValueError(f"unknown example2 parameter(s): {sorted(params)}")
        return make_example2(delay, eps, d)
    if name == "example3":
        if params:
            raise ValueError(f"unknown example3 parameter(s): {sorted(params)}")
        return make_example3(delay)
    if name == "linear":
        a = float(params.pop("a", 1.0))
        b = float(params.pop("b", 0.0))
        if params:
            raise ValueError(f"unknown linear parameter(s): {sorted(params)}")
        return make_linear_baseline(a, b, delay)
    raise ValueError(f"unknown system {name!r}")
