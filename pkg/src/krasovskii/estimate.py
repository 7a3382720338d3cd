"""Empirics: ensembles, decay-envelope fits, input-gain fits, and the
empirical overshoot/contraction test.

Envelope fitting is a domination problem, not a regression: for each
candidate rate eta on a log grid the smallest admissible overshoot
k(eta) is computed exactly from the samples, and the fastest rate whose
overshoot stays below a cap wins.  The certified contraction horizon of
the left-growth route is astronomically conservative, so empirical runs
use a user-chosen horizon and the two are reported side by side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .histories import HistoryFunction, random_history
from .parallel import ordered_map
from .solver import COMPLETED, Trajectory, history_norm_series, integrate
from .systems import DelaySystem, InputSignal, constant_input, zero_input

__all__ = [
    "EnvelopeFit",
    "GainFit",
    "TwoInequalityFit",
    "FitFailure",
    "run_ensemble",
    "fit_envelope",
    "fit_iss_gain",
    "empirical_two_inequality",
    "seeded_history_sampler",
    "write_envelope_data",
]


class FitFailure(RuntimeError):
    """No admissible envelope at this overshoot cap: evidence against
    exponential decay at the explored scale."""


def _seed_key(seed, *extra) -> tuple:
    base = (int(seed),) if np.isscalar(seed) else tuple(int(s) for s in seed)
    return base + tuple(int(e) for e in extra)


def seeded_history_sampler(seed, n: int, delay: float, norm_bound: float,
                           mode_choices: Sequence[int] = (0, 2, 8)):
    """index -> reproducible random history, cycling roughness."""

    def sample(i: int) -> HistoryFunction:
        return random_history(_seed_key(seed, i), n, delay, norm_bound,
                              mode_choices[i % len(mode_choices)])

    return sample


def run_ensemble(sys: DelaySystem, history_sampler, input_sampler,
                 count: int, horizon: float, dt: float) -> list[Trajectory]:
    """count seeded, reproducible integrations.  Blow-ups are returned
    as trajectories with their status set, not raised."""
    if count < 1:
        raise ValueError("count must be >= 1")

    def one(i: int) -> Trajectory:
        u = input_sampler(i) if input_sampler is not None else None
        return integrate(sys, history_sampler(i), u, horizon, dt)

    return ordered_map(one, range(count))


@dataclass(frozen=True)
class EnvelopeFit:
    """Dominating envelope k sup|x0| exp(-eta t) over an ensemble.

    slack is the smallest gap between envelope and samples; it is
    nonnegative by construction.
    """

    k: float
    eta: float
    slack: float
    trajectories: int
    k_cap: float

    def __post_init__(self):
        if self.k < 1 or self.eta <= 0 or self.slack < 0:
            raise ValueError("fit must satisfy k >= 1, eta > 0, slack >= 0")


def fit_envelope(trajs: Sequence[Trajectory], k_cap: float = 1e3,
                 eta_grid: Optional[np.ndarray] = None) -> EnvelopeFit:
    """Largest grid rate whose exact overshoot stays below k_cap.

    Requires completed trajectories with nonzero initial histories and
    (the intended use) zero input.  The rate grid defaults to 200
    log-spaced points in [1e-3, 10].
    """
    if not trajs:
        raise ValueError("need at least one trajectory")
    for tr in trajs:
        if tr.status != COMPLETED:
            raise ValueError("envelope fits need completed trajectories")
        if tr.x0.sup_norm() == 0.0:
            raise ValueError("initial histories must be nonzero")
    if eta_grid is None:
        eta_grid = np.logspace(-3, 1, 200)
    pairs = []
    for tr in trajs:
        sel = tr.times >= 0.0
        pairs.append((tr.times[sel],
                      np.linalg.norm(tr.values[sel], axis=1) / tr.x0.sup_norm()))
    best = None
    for eta in eta_grid:
        k_eta = max(float(np.max(ratio * np.exp(eta * t))) for t, ratio in pairs)
        if k_eta <= k_cap:
            best = (float(eta), k_eta)
    if best is None:
        raise FitFailure(f"no rate admits an overshoot below {k_cap}")
    eta, k_raw = best
    k = max(k_raw, 1.0)
    slack = math.inf
    for tr, (t, ratio) in zip(trajs, pairs):
        gap = float(np.min(k * np.exp(-eta * t) - ratio)) * tr.x0.sup_norm()
        slack = min(slack, gap)
    if -1e-9 * k < slack < 0.0:
        slack = 0.0  # rounding of exp(-eta t) against the argmax sample
    return EnvelopeFit(k, eta, slack, len(trajs), k_cap)


def envelope_slack(fit: EnvelopeFit, trajs: Sequence[Trajectory]) -> float:
    """Smallest gap k sup|x0| e^{-eta t} - |x(t)| over an ensemble."""
    gap = math.inf
    for tr in trajs:
        sel = tr.times >= 0.0
        t = tr.times[sel]
        mag = np.linalg.norm(tr.values[sel], axis=1)
        gap = min(gap, float(np.min(
            fit.k * tr.x0.sup_norm() * np.exp(-fit.eta * t) - mag)))
    return gap


@dataclass(frozen=True)
class GainFit:
    """Linear input-gain estimate from constant-input tails.

    tails maps amplitude -> worst tail sup of |x|; mu0 is the largest
    tail-to-amplitude ratio, so tails <= mu0 * amplitude by
    construction.  Amplitudes whose ensembles blew up are excluded and
    listed."""

    mu0: float
    tail_fraction: float
    tails: dict
    excluded: tuple = ()


def fit_iss_gain(sys: DelaySystem, amplitudes: Sequence[float], horizon: float,
                 dt: float, tail_fraction: float = 0.25,
                 histories_per_amplitude: int = 4, history_bound: float = 1.0,
                 seed: int = 2024) -> GainFit:
    """Constant-input ensembles from zero and random histories; for each
    amplitude record the tail sup of |x| over the last tail_fraction of
    the horizon."""
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    if any(s < 0 for s in amplitudes):
        raise ValueError("amplitudes must be nonnegative")
    tails = {}
    excluded = []
    cut = horizon * (1.0 - tail_fraction)
    for s in amplitudes:
        direction = np.zeros(sys.m)
        direction[0] = 1.0
        u = constant_input(s * direction)
        hist = seeded_history_sampler(_seed_key(seed, int(round(1e6 * s))),
                                      sys.n, sys.delay, history_bound)

        def sample(i, hist=hist):
            if i == 0:
                return random_history(_seed_key(seed, 0), sys.n, sys.delay,
                                      0.0, 0)
            return hist(i)

        trajs = run_ensemble(sys, sample, lambda i, u=u: u,
                             histories_per_amplitude + 1, horizon, dt)
        if any(tr.status != COMPLETED for tr in trajs):
            excluded.append(float(s))
            continue
        worst = 0.0
        for tr in trajs:
            sel = tr.times >= cut
            worst = max(worst, float(np.max(
                np.linalg.norm(tr.values[sel], axis=1))))
        tails[float(s)] = worst
    positive = [(s, tail) for s, tail in tails.items() if s > 0]
    mu0 = max((tail / s for s, tail in positive), default=0.0)
    return GainFit(mu0, tail_fraction, tails, tuple(excluded))


@dataclass(frozen=True)
class TwoInequalityFit:
    """Empirical overshoot/contraction estimates over an ensemble.

    ell bounds sup-norm growth on [0, T] relative to the initial
    history, lam is the same ratio at exactly T; contraction (lam < 1)
    is the evidence that an exponential envelope exists.
    """

    ell: float
    lam: float
    mu0: float
    horizon: float
    trajectories: int

    @property
    def contraction(self) -> bool:
        return self.lam < 1.0


def empirical_two_inequality(sys: DelaySystem, horizon: float, budget: int,
                             dt: float, seed: int = 77,
                             history_bound: float = 1.0,
                             input_amplitudes: Sequence[float] = (0.0,),
                             mu0: Optional[float] = None) -> TwoInequalityFit:
    """Estimate the overshoot ell and end-of-horizon contraction lam
    over seeded ensembles.

    mu0 defaults to a constant-input gain fit over the positive
    amplitudes; pass mu0=0 for input-free studies.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if mu0 is None:
        positive = [s for s in input_amplitudes if s > 0]
        mu0 = (fit_iss_gain(sys, positive, horizon, dt, seed=seed).mu0
               if positive else 0.0)
    hist = seeded_history_sampler(_seed_key(seed, 0), sys.n, sys.delay,
                                  history_bound)

    def input_for(i: int) -> InputSignal:
        s = input_amplitudes[i % len(input_amplitudes)]
        if s == 0:
            return zero_input(sys.m)
        direction = np.zeros(sys.m)
        direction[0] = 1.0
        return constant_input(s * direction)

    trajs = run_ensemble(sys, hist, input_for, budget, horizon, dt)
    ell = -math.inf
    lam = -math.inf
    for tr in trajs:
        if tr.status != COMPLETED:
            ell = lam = math.inf
            break
        x0_norm = tr.x0.sup_norm()
        if x0_norm == 0.0:
            continue
        t_out, norms = history_norm_series(tr)
        usup = np.array([tr.u.window_sup(0.0, t) if t > 0 else
                         float(np.linalg.norm(tr.u.evaluate(0.0)))
                         for t in t_out])
        ratios = (norms - mu0 * usup) / x0_norm
        ell = max(ell, float(np.max(ratios)))
        lam = max(lam, float(ratios[-1]))
    return TwoInequalityFit(ell, lam, mu0, horizon, budget)


def write_envelope_data(fit: EnvelopeFit, trajs: Sequence[Trajectory],
                        path) -> None:
    """Plot data: per trajectory a block of (t, |x(t)|, envelope(t))
    rows, blocks separated by blank lines."""
    with open(path, "w") as fh:
        fh.write("# t  abs_x  envelope\n")
        for tr in trajs:
            sel = tr.times >= 0.0
            t = tr.times[sel]
            mag = np.linalg.norm(tr.values[sel], axis=1)
            env = fit.k * tr.x0.sup_norm() * np.exp(-fit.eta * t)
            for row in zip(t, mag, env):
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
            fh.write("\n")
