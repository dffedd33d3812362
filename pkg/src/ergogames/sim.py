"""Stationary strategy extraction and Monte Carlo mean-payoff simulation.

A bias of the ergodic equation yields pure stationary strategies through
the argmin/argmax selections of the dynamic-programming operator evaluated
at the bias.  Playing them turns the game into a Markov reward chain whose
average payoff per stage matches the ergodic constant from every initial
state; the simulator checks this stochastically and the induced chain gives
the matching deterministic cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GameSpec, markov_chain_operator


@dataclass(frozen=True)
class StationaryStrategyPair:
    """Pure stationary selections: a MIN action per state and a MAX option
    per (state, MIN action)."""

    min_action: tuple[int, ...]
    max_option: tuple[tuple[int, ...], ...]

    def chosen(self, state: int) -> tuple[int, int]:
        a = self.min_action[state]
        return a, self.max_option[state][a]


def extract_strategies(game: GameSpec, bias, g=None) -> StationaryStrategyPair:
    """Argmin/argmax selections at the bias, ties to the lowest index.

    For each state i and MIN action a, the MAX option maximizes
    ``payment + row . bias``; the MIN action then minimizes the maximized
    value.  A state-dependent perturbation g shifts whole states and never
    changes the selections, so it is accepted only for interface symmetry
    with the solver.
    """
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (game.n,):
        raise ValueError(f"bias has shape {bias.shape}, expected ({game.n},)")
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape != (game.n,):
            raise ValueError(f"g has shape {g.shape}, expected ({game.n},)")
    min_action = []
    max_option = []
    for actions in game.states:
        best_vals = []
        opts = []
        for action in actions:
            vals = np.array([opt.payment + opt.row @ bias for opt in action.options])
            b = int(np.argmax(vals))
            opts.append(b)
            best_vals.append(vals[b])
        min_action.append(int(np.argmin(best_vals)))
        max_option.append(tuple(opts))
    return StationaryStrategyPair(tuple(min_action), tuple(max_option))


def induced_chain(game: GameSpec, strat: StationaryStrategyPair,
                  g=None) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix and per-stage payments of the fixed-strategy chain."""
    n = game.n
    P = np.zeros((n, n))
    r = np.zeros(n)
    g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
    for i in range(n):
        a, b = strat.chosen(i)
        opt = game.states[i][a].options[b]
        P[i] = opt.row
        r[i] = g[i] + opt.payment
    return P, r


def policy_value_operator(game: GameSpec, strat: StationaryStrategyPair, g=None):
    """Single-policy operator ``x -> r + P x`` of the induced chain."""
    P, r = induced_chain(game, strat, g)
    return markov_chain_operator(P, r)


@dataclass(frozen=True, eq=False)
class SimReport:
    """One simulated trajectory under fixed stationary strategies.

    ``average`` is exactly the accumulated payment over the horizon;
    ``half_width`` is one standard error of batch means (payoff units) and
    quantifies the Monte Carlo uncertainty of the average.
    """

    initial_state: int
    horizon: int
    seed: int
    average: float
    total: float
    visits: np.ndarray
    half_width: float


def simulate(game: GameSpec, strat: StationaryStrategyPair, g, i0: int,
             horizon: int, seed: int = 0) -> SimReport:
    """Play the fixed strategies for ``horizon`` stages from state ``i0``.

    Each stage accrues ``g_i + payment`` and draws the next state by
    inverse-CDF sampling of the chosen transition row over its stored order,
    on a seeded generator (bit-reproducible for a fixed NumPy generator; see
    the project README for the generator identification).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = game.n
    if not 0 <= i0 < n:
        raise ValueError(f"initial state {i0} out of range [0, {n})")
    g = np.asarray(g, dtype=float)
    if g.shape != (n,):
        raise ValueError(f"g has shape {g.shape}, expected ({n},)")

    cum = []
    pay = []
    for i in range(n):
        a, b = strat.chosen(i)
        opt = game.states[i][a].options[b]
        cum.append(np.cumsum(opt.row))
        pay.append(g[i] + opt.payment)

    rng = np.random.default_rng(seed)
    draws = rng.random(horizon)
    visits = np.zeros(n, dtype=np.int64)
    stage_pay = np.empty(horizon)
    state = i0
    for t in range(horizon):
        visits[state] += 1
        stage_pay[t] = pay[state]
        nxt = int(np.searchsorted(cum[state], draws[t], side="right"))
        state = min(nxt, n - 1)
    total = float(stage_pay.sum())

    nbatch = min(100, horizon)
    usable = horizon - horizon % nbatch
    batches = stage_pay[:usable].reshape(nbatch, -1).mean(axis=1)
    hw = float(batches.std(ddof=1) / np.sqrt(nbatch)) if nbatch > 1 else float("inf")
    return SimReport(i0, horizon, seed, total / horizon, total, visits, hw)
