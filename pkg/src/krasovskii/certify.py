"""Hypothesis checking by falsification and closed-form margin constants.

Checks sample (history, input) pairs from a seeded stratified sampler
and report the worst residual of the tested inequality together with a
witness when it is violated.  A "no violation found" verdict is
sampling evidence, never a proof.

Margins are the closed-form constants attached to the two growth-route
stability results and their supporting lemmas: the tolerable strength
of a history term in the dissipation inequality, the derived decay and
gain factors, the Gronwall reachability radius, and the two-way
conversion between an exponential envelope and the pair of
solution-norm inequalities (bounded overshoot on one horizon plus a
contraction at its end).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .functionals import (
    Functional,
    PowerGain,
    contains_maxexp,
    driver_derivative_closed,
    driver_derivative_numeric,
    eval_functional,
)
from .histories import HistoryFunction, random_history
from .parallel import ordered_map
from .systems import DelaySystem

__all__ = [
    "FalsificationSampler",
    "CheckReport",
    "MarginReport",
    "InfeasibilityError",
    "check_sandwich",
    "check_pointwise_dissipation",
    "check_right_growth",
    "check_left_growth",
    "margin_history_term",
    "history_term_constants",
    "margin_right",
    "margin_left",
    "robustness_margin_example2",
    "Example2Margins",
    "rfc_bound",
    "expiss_to_two_inequality",
    "two_inequality_to_expiss",
]

EVIDENCE_NOTE = "sampling evidence, not a proof"

NORM_SCALES = (0.1, 1.0, 10.0)
INPUT_SCALES = (0.0, 0.1, 1.0, 10.0)
MODE_CHOICES = (0, 2, 8)

VIOLATED = "violated"
NO_VIOLATION = "no-violation-found"


class InfeasibilityError(RuntimeError):
    """A margin computation produced constants outside their feasible range."""


@dataclass(frozen=True)
class FalsificationSampler:
    """Stratified, seeded sampler of (history, input) pairs.

    Sample i is drawn from stratum i mod 36 of the product
    norm scale x input scale x Fourier-mode count, with an independent
    substream per index, so verdicts are reproducible and independent of
    how samples are distributed over workers.
    """

    seed: int
    n: int
    m: int
    delay: float

    def sample(self, i: int):
        strata = i % (len(NORM_SCALES) * len(INPUT_SCALES) * len(MODE_CHOICES))
        norm_scale = NORM_SCALES[strata % len(NORM_SCALES)]
        strata //= len(NORM_SCALES)
        input_scale = INPUT_SCALES[strata % len(INPUT_SCALES)]
        modes = MODE_CHOICES[strata // len(INPUT_SCALES)]
        phi = random_history((self.seed, i), self.n, self.delay,
                             norm_scale, modes)
        rng = np.random.default_rng((self.seed, i, 1))
        v = input_scale * rng.standard_normal(self.m)
        return phi, v


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one falsification sweep."""

    check: str
    samples: int
    skipped: int
    worst: float
    tolerance: float
    verdict: str
    witness: Optional[tuple] = None
    witness_index: Optional[int] = None
    note: str = EVIDENCE_NOTE

    @property
    def violated(self) -> bool:
        return self.verdict == VIOLATED

    def csv_rows(self):
        phi0 = inp = sup = ""
        if self.witness is not None:
            phi, v = self.witness
            sup = f"{phi.sup_norm():.17g}"
            phi0 = " ".join(f"{x:.17g}" for x in phi.eval(0.0))
            inp = " ".join(f"{x:.17g}" for x in np.atleast_1d(v))
        return [["check", self.check, str(self.samples), str(self.skipped),
                 f"{self.worst:.17g}", f"{self.tolerance:.17g}", self.verdict,
                 "" if self.witness_index is None else str(self.witness_index),
                 sup, phi0, inp, self.note]]

    def text(self) -> str:
        lines = [
            f"check {self.check}: {self.verdict}",
            f"  samples={self.samples} skipped={self.skipped} "
            f"worst residual={self.worst:.6g} (tolerance {self.tolerance:g})",
        ]
        if self.witness is not None:
            phi, v = self.witness
            lines.append(f"  witness #{self.witness_index}: sup|phi|="
                         f"{phi.sup_norm():.6g}, phi(0)={phi.eval(0.0)}, v={v}")
        lines.append(f"  note: {self.note}")
        return "\n".join(lines)


def _sweep(check: str, residual_fn, sampler, budget: int,
           tolerance: float) -> CheckReport:
    if budget < 1:
        raise ValueError("budget must be >= 1")

    def one(i: int):
        phi, v = sampler.sample(i)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                r = residual_fn(phi, v)
        except (FloatingPointError, OverflowError):
            return None
        if not np.isfinite(r):
            return None
        return float(r)

    worst = -math.inf
    worst_idx = None
    skipped = 0
    residuals = ordered_map(one, range(budget))
    for i, r in enumerate(residuals):
        if r is None:
            skipped += 1
        elif r > worst:
            worst, worst_idx = r, i
    if worst_idx is None:
        raise RuntimeError(f"every sample of check {check} was skipped")
    if worst > tolerance:
        witness = sampler.sample(worst_idx)
        return CheckReport(check, budget, skipped, worst, tolerance,
                           VIOLATED, witness, worst_idx)
    return CheckReport(check, budget, skipped, worst, tolerance, NO_VIOLATION)


def check_sandwich(V: Functional, a_lower: Optional[float], a_upper: float,
                   rho: float, sampler, budget: int,
                   tolerance: float = 1e-9) -> CheckReport:
    """Residuals of a_lower |phi(0)|^rho <= V(phi) <= a_upper sup|phi|^rho.

    The lower bound is skipped when a_lower is None (the right-growth
    route needs only the upper one)."""

    def residual(phi, v):
        val = eval_functional(V, phi)
        upper = val - a_upper * phi.sup_norm() ** rho
        if a_lower is None:
            return upper
        x0 = float(np.linalg.norm(phi.eval(0.0)))
        return max(upper, a_lower * x0 ** rho - val)

    return _sweep("sandwich", residual, sampler, budget, tolerance)


def _derivative_along(V: Functional, sys: DelaySystem):
    closed = not contains_maxexp(V)

    def derive(phi, v):
        w = sys.field(phi, np.atleast_1d(v))
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("field evaluation blew up")
        if closed:
            return driver_derivative_closed(V, phi, w)
        return driver_derivative_numeric(V, phi, w)

    return derive


def check_pointwise_dissipation(sys: DelaySystem, V: Functional, a: float,
                                c: float, gamma, sampler, budget: int,
                                tolerance: float = 1e-9) -> CheckReport:
    """Residual of the point-wise dissipation inequality
    D+V(phi, f(phi, v)) <= -a |phi(0)|^2 + c sup|phi|^2 + gamma(|v|)."""
    derive = _derivative_along(V, sys)

    def residual(phi, v):
        x0 = float(np.linalg.norm(phi.eval(0.0)))
        return (derive(phi, v) + a * x0 ** 2
                - c * phi.sup_norm() ** 2 - gamma(float(np.linalg.norm(v))))

    return _sweep("pointwise-dissipation", residual, sampler, budget, tolerance)


def _growth_residual(sys, P, sigma, gamma, sign):
    P = np.asarray(P, dtype=float)

    def residual(phi, v):
        v = np.atleast_1d(v)
        w = sys.field(phi, v)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("field evaluation blew up")
        lhs = float(phi.eval(0.0) @ P @ w)
        cap = sigma * (phi.sup_norm() ** 2 + gamma(float(np.linalg.norm(v))))
        return lhs - cap if sign > 0 else -lhs - cap

    return residual


def check_right_growth(sys: DelaySystem, P, sigma: float, gamma, sampler,
                       budget: int, tolerance: float = 1e-9) -> CheckReport:
    """Residual of phi(0)' P f(phi, v) <= sigma (sup|phi|^2 + gamma(|v|))."""
    return _sweep("right-growth", _growth_residual(sys, P, sigma, gamma, +1),
                  sampler, budget, tolerance)


def check_left_growth(sys: DelaySystem, P, sigma: float, gamma, sampler,
                      budget: int, tolerance: float = 1e-9) -> CheckReport:
    """Residual of phi(0)' P f(phi, v) >= -sigma (sup|phi|^2 + gamma(|v|))."""
    return _sweep("left-growth", _growth_residual(sys, P, sigma, gamma, -1),
                  sampler, budget, tolerance)


# ---------------------------------------------------------------------------
# margins

@dataclass(frozen=True)
class MarginReport:
    """Constants of one hypothesis set.

    route is one of "history-term" (tolerable history strength under an
    LKF-wise dissipation), "right-growth" or "left-growth".  `outputs`
    always carries c_bar plus the route-specific constants.
    """

    route: str
    delay: float
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.outputs.get("c_bar", 1.0) <= 0:
            raise InfeasibilityError("c_bar must be positive")

    def csv_rows(self):
        rows = []
        for key in sorted(self.inputs):
            rows.append(["margin", self.route, "in", key,
                         _fmt(self.inputs[key])])
        for key in sorted(self.outputs):
            rows.append(["margin", self.route, "out", key,
                         _fmt(self.outputs[key])])
        return rows

    def text(self) -> str:
        ins = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(self.inputs.items()))
        outs = "\n".join(f"  {k} = {_fmt(v)}"
                         for k, v in sorted(self.outputs.items()))
        return f"margin [{self.route}] delay={self.delay:g} ({ins})\n{outs}"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _eigen_extremes(P) -> tuple[float, float]:
    eigs = np.linalg.eigvalsh(np.atleast_2d(np.asarray(P, dtype=float)))
    if eigs[0] <= 0:
        raise ValueError("P must be positive definite")
    return float(eigs[0]), float(eigs[-1])


def _ceil_snapped(x: float) -> int:
    # float noise within 1e-9 relative of an integer must not bump the
    # ceiling to the next one
    nearest = round(x)
    if abs(x - nearest) <= 1e-9 * max(1.0, abs(x)):
        return int(nearest)
    return int(math.ceil(x))


def margin_history_term(a_lower: float, a: float, delay: float) -> float:
    """Threshold a_lower * a * exp(-a delay) on the history-term strength
    under an LKF-wise dissipation."""
    if a_lower <= 0 or a <= 0 or delay < 0:
        raise ValueError("a_lower, a must be positive and delay >= 0")
    return a_lower * a * math.exp(-a * delay)


def history_term_constants(a_lower: float, a_upper: float, a: float, rho: float,
                       c: float, delay: float,
                       slack: float = 0.5) -> MarginReport:
    """Computable companions of the history-term route: the headroom
    xi = 1 - c e^{a delay}(1 + eps)/(a_lower a), the overshoot constant
    and the gain prefactor.  The decay rate itself is not constructive
    and is estimated empirically elsewhere.

    eps is placed a `slack` fraction of the way to the feasibility
    boundary (eps = 0 when c = 0)."""
    c_bar = margin_history_term(a_lower, a, delay)
    if not 0 <= c < c_bar:
        raise InfeasibilityError(f"c={c} must lie in [0, c_bar={c_bar})")
    if not 0 < slack < 1:
        raise ValueError("slack must lie in (0, 1)")
    base = c * math.exp(a * delay) / (a_lower * a)
    eps = slack * (1.0 / base - 1.0) if base > 0 else 0.0
    xi = 1.0 - base * (1.0 + eps)
    k = (2.0 * a_upper * math.exp(a * delay) / (a_lower * xi)) ** (1.0 / rho)
    gain_prefactor = (2.0 * math.exp(a * delay) * (1.0 + eps)
                      / (a_lower * a * xi)) ** (1.0 / rho)
    return MarginReport(
        "history-term", delay,
        inputs={"a_lower": a_lower, "a_upper": a_upper, "a": a, "rho": rho,
                "c": c, "eps": eps},
        outputs={"c_bar": c_bar, "xi": xi, "overshoot_k": k,
                 "gain_prefactor": gain_prefactor})


def margin_right(a: float, sigma: float, P, delay: float,
                 a_upper: Optional[float] = None, c: float = 0.0) -> MarginReport:
    """Constants of the right-growth route.

    eps weights the added coercive max-type term, c_bar is the tolerable
    history strength, gamma_factor multiplies the input gain, and (when
    a_upper is given) w_rate is the dissipation rate of the combined
    coercive functional."""
    if a <= 0 or sigma <= 0 or delay < 0:
        raise ValueError("a, sigma must be positive and delay >= 0")
    p_m, p_M = _eigen_extremes(P)
    decay = math.exp(-2.0 * delay)
    eps = a * p_m * decay / (4.0 * sigma * p_M)
    c_bar = min(2.0 * eps, a / (2.0 * p_M)) * p_m * decay
    gamma_factor = 1.0 + 2.0 * eps * sigma
    outputs = {"eps": eps, "c_bar": c_bar, "gamma_factor": gamma_factor,
               "p_m": p_m, "p_M": p_M}
    inputs = {"a": a, "sigma": sigma, "c": c}
    if a_upper is not None:
        inputs["a_upper"] = a_upper
        outputs["w_rate"] = (c_bar - c) / (a_upper + eps * p_M)
    return MarginReport("right-growth", delay, inputs, outputs)


def margin_right_composite(a: float, sigma: float, P, delay: float) -> float:
    """The single-expression form of the right-growth threshold:
    min(p_m e^{-2 delay}/sigma, 1) * (a p_m / (2 p_M)) e^{-2 delay}.
    Must agree with margin_right to machine precision."""
    p_m, p_M = _eigen_extremes(P)
    decay = math.exp(-2.0 * delay)
    return min(p_m * decay / sigma, 1.0) * a * p_m * decay / (2.0 * p_M)


def margin_left(a_lower: float, a_upper: float, a: float, sigma: float, P,
                delay: float) -> MarginReport:
    """Constants of the left-growth route.

    eps is the probing window width, q the number of windows, T = q
    (delay + eps) the contraction horizon, c_bar = a_lower / (2 T) the
    tolerable history strength.  lam_min is the smallest contraction
    factor compatible with the route's key inequality; lam_star is the
    midpoint policy (1 + lam_min)/2, and decay_rate = ln(1/lam_star)/T
    the envelope rate it induces."""
    if min(a_lower, a_upper, a, sigma) <= 0 or delay < 0:
        raise ValueError("all constants must be positive and delay >= 0")
    if a_lower > a_upper:
        raise ValueError("the squeeze forces a_lower <= a_upper")
    p_m, p_M = _eigen_extremes(P)
    eps = p_m * a_lower ** 2 / (16.0 * a_upper ** 2 * sigma)
    q = _ceil_snapped(p_M / (sigma * eps * eps))
    T = q * (delay + eps)
    c_bar = a_lower / (2.0 * T)
    qe = q * eps
    lam_min_sq = ((2.0 * a_upper / a_lower
                   + qe / p_M * (4.0 * eps * sigma * a_upper / a_lower))
                  * 2.0 * a_upper * p_M / (qe * p_m * a_lower))
    if lam_min_sq >= 1.0:
        raise InfeasibilityError(
            f"contraction inequality infeasible: lam_min^2={lam_min_sq}")
    lam_min = math.sqrt(lam_min_sq)
    lam_star = 0.5 * (lam_min + 1.0)
    mu_coefficient = (4.0 / math.sqrt(a_lower)) * max(
        math.sqrt(2.0 * T),
        math.sqrt(a_upper / p_m * (p_M * T / (a * qe)
                                   + sigma * eps * (1.0 + 2.0 * T / a_lower))))
    decay_rate = math.log(1.0 / lam_star) / T
    return MarginReport(
        "left-growth", delay,
        inputs={"a_lower": a_lower, "a_upper": a_upper, "a": a,
                "sigma": sigma},
        outputs={"eps": eps, "q": q, "T": T, "c_bar": c_bar,
                 "lam_min": lam_min, "lam_star": lam_star,
                 "mu_coefficient": mu_coefficient, "decay_rate": decay_rate,
                 "p_m": p_m, "p_M": p_M})


def left_contraction_residual(report: MarginReport, lam: float) -> float:
    """Signed slack of the left-growth contraction inequality at lam;
    positive means lam satisfies it strictly."""
    o, i = report.outputs, report.inputs
    a_lower, a_upper, sigma = i["a_lower"], i["a_upper"], i["sigma"]
    eps, q, p_m, p_M = o["eps"], o["q"], o["p_m"], o["p_M"]
    qe = q * eps
    lhs = qe / p_M * (p_m * a_lower / (2.0 * a_upper) * lam * lam
                      - 4.0 * eps * sigma * a_upper / a_lower)
    return lhs - 2.0 * a_upper / a_lower


@dataclass(frozen=True)
class Example2Margins:
    """Tolerable uncertainty intensities for the perturbed benchmark.

    The uncertainty enters the dissipation residual with strength
    4 |eps|, so each tolerable intensity is the corresponding history
    margin divided by 4.  eps2_margin evaluates the left-growth margin
    as computed here; eps2_closed_form evaluates a standalone
    closed-form expression for the same quantity whose ceiling constant
    is about 3x larger (2304 vs 768 inside the rounding).  Both are
    surfaced; the combined bound uses the computed margin.
    """

    delay: float
    eps1: float
    eps2_margin: float
    eps2_closed_form: float
    eps_bar: float

    @property
    def crossover(self) -> bool:
        return self.eps2_closed_form > self.eps1


def example2_eps2_closed_form(delay: float) -> float:
    """Standalone closed form of the second tolerable intensity."""
    width = 1.0 / (48.0 * (1.0 + 2.0 * delay) ** 2)
    ceil = _ceil_snapped(2304.0 * (1.0 + 2.0 * delay) ** 4)
    return 1.0 / (8.0 * ceil * (delay + width))


def robustness_margin_example2(delay: float) -> Example2Margins:
    """Both tolerable-uncertainty estimates for the perturbed benchmark
    (squeeze constants 1 and 1 + 2 delay, rate 1/2, growth constants 1
    right / 3 left, P = I)."""
    if delay < 0:
        raise ValueError("delay must be >= 0")
    eye = np.eye(2)
    right = margin_right(a=0.5, sigma=1.0, P=eye, delay=delay)
    eps1 = right.outputs["c_bar"] / 4.0
    left = margin_left(a_lower=1.0, a_upper=1.0 + 2.0 * delay, a=0.5,
                       sigma=3.0, P=eye, delay=delay)
    eps2_margin = left.outputs["c_bar"] / 4.0
    eps2_closed_form = example2_eps2_closed_form(delay)
    return Example2Margins(delay, eps1, eps2_margin, eps2_closed_form,
                           max(eps1, eps2_margin))


def rfc_bound(alpha: PowerGain, alpha_upper, c_bar: float, a: float, gamma,
              c: float, r: float, T: float) -> float:
    """Gronwall reachability radius: initial histories and inputs bounded
    by r stay within R = alpha^{-1}((alpha_upper(r) + c_bar) e^{aT}
    + (gamma(r) + c) e^{aT}/a) up to time T.

    alpha must be an invertible power-form gain; a general numeric
    inversion is deliberately not attempted."""
    if not isinstance(alpha, PowerGain):
        raise ValueError("alpha must be a power-form gain (exact inverse)")
    if a == 0:
        raise ValueError("the bound divides by the growth rate a")
    if a < 0 or r < 0 or T < 0 or c < 0 or c_bar < 0:
        raise ValueError("a, r, T, c, c_bar must be nonnegative")
    growth = math.exp(a * T)
    inner = (alpha_upper(r) + c_bar) * growth + (gamma(r) + c) * growth / a
    return alpha.inverse(inner)


def expiss_to_two_inequality(k: float, eta: float, delay: float,
                             lam: float) -> tuple[float, float]:
    """From an envelope |x(t)| <= k sup|x0| e^{-eta t} + mu(...) to the
    two solution-norm inequalities: overshoot ell = k e^{eta delay} on
    the horizon T = delay + ln(k/lam)/eta, contraction lam at T.
    The gain passes through unchanged."""
    if k < 1:
        raise ValueError("overshoot constant k must be >= 1")
    if eta <= 0 or not 0 < lam < 1 or delay < 0:
        raise ValueError("need eta > 0, lam in (0,1), delay >= 0")
    ell = k * math.exp(eta * delay)
    T = delay + math.log(k / lam) / eta
    return ell, T


def two_inequality_to_expiss(ell: float, T: float,
                             lam: float) -> tuple[float, float, float]:
    """Converse direction: overshoot ell on [0, T] plus contraction lam
    at T give the envelope constants eta = ln(1/lam)/T, k = ell/lam, and
    the factor ell/(1-lam) + 1 multiplying the gain."""
    if ell <= 0 or T <= 0 or not 0 < lam < 1:
        raise ValueError("need ell, T > 0 and lam in (0,1)")
    eta = math.log(1.0 / lam) / T
    k = ell / lam
    gain_factor = ell / (1.0 - lam) + 1.0
    return k, eta, gain_factor
