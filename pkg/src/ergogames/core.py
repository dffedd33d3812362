"""Games, Shapley operators, and the Hilbert-seminorm quotient geometry.

A Shapley operator is any monotone, additively homogeneous self-map of R^n.
This module provides the finite-game data model whose dynamic-programming
operator has coordinates ``min over row-player actions of max over
column-player options of (payment + row . x)``, two built-in three-state
operators with closed-form evaluation, and the quotient of R^n by constant
vectors together with its natural metric, the Hilbert seminorm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

#: Tolerance for probability rows summing to one.  Rows outside this band are
#: rejected outright; silent renormalization hides data bugs.
PROB_ROW_TOL = 1e-12


# ---------------------------------------------------------------------------
# Quotient geometry
# ---------------------------------------------------------------------------

def hilbert_seminorm(x) -> float:
    """Return ``max_i x_i - min_i x_i``.

    This seminorm vanishes exactly on constant vectors and is the natural
    norm on the quotient of R^n by the line of constant vectors.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("hilbert_seminorm expects a nonempty 1-d vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("hilbert_seminorm expects finite entries")
    return float(x.max() - x.min())


def hilbert_distance(x, y) -> float:
    """Seminorm distance between the classes of ``x`` and ``y`` modulo constants."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    return hilbert_seminorm(x - y)


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    """Canonical representative of a vector modulo additive constants.

    The representative is the unique member of the class whose minimum
    coordinate equals zero, which keeps all coordinates nonnegative and ties
    the representative directly to the Hilbert seminorm.
    """

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("QuotientPoint expects a nonempty 1-d vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("QuotientPoint expects finite entries")
        if v.min() != 0.0:
            v = v - v.min()
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def n(self) -> int:
        return self.vector.shape[0]

    def seminorm(self) -> float:
        return float(self.vector.max())

    def distance(self, other: "QuotientPoint") -> float:
        return hilbert_distance(self.vector, other.vector)

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"QuotientPoint({np.array2string(self.vector, precision=6)})"


def canonical_rep(x) -> QuotientPoint:
    """Map ``x`` to the representative of its class with minimum coordinate 0."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("canonical_rep expects a nonempty 1-d vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("canonical_rep expects finite entries")
    return QuotientPoint(x - x.min())


def _canonical_array(x: np.ndarray) -> np.ndarray:
    """Fast path used by solvers: subtract the minimum, no validation."""
    return x - x.min()


# ---------------------------------------------------------------------------
# Finite-game data model
# ---------------------------------------------------------------------------

def _check_probability_row(row: np.ndarray, n: int, where: str) -> np.ndarray:
    row = np.asarray(row, dtype=float)
    if row.shape != (n,):
        raise ValueError(f"{where}: transition row has shape {row.shape}, expected ({n},)")
    if not np.all(np.isfinite(row)):
        raise ValueError(f"{where}: transition row has non-finite entries")
    if row.min() < 0.0:
        raise ValueError(f"{where}: transition row has negative entries")
    s = float(row.sum())
    if abs(s - 1.0) > PROB_ROW_TOL:
        raise ValueError(
            f"{where}: transition row sums to {s!r}, expected 1 within {PROB_ROW_TOL}"
            " (renormalization is refused)"
        )
    return row


@dataclass(frozen=True, eq=False)
class MaxOption:
    """One option of the maximizing player: a payment and a transition row."""

    payment: float
    row: np.ndarray
    label: str = ""


@dataclass(frozen=True, eq=False)
class MinAction:
    """One action of the minimizing player, carrying its list of MAX options."""

    options: tuple[MaxOption, ...]
    label: str = ""


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Finite-state, finite-action zero-sum stochastic game.

    State ``i`` holds a nonempty tuple of MIN actions; each MIN action holds a
    nonempty tuple of MAX options; each option carries a stage payment and a
    probability row over the ``n`` states.
    """

    n: int
    states: tuple[tuple[MinAction, ...], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("game needs at least one state")
        if len(self.states) != self.n:
            raise ValueError(f"got {len(self.states)} states, expected n={self.n}")
        states = []
        for i, actions in enumerate(self.states):
            if len(actions) == 0:
                raise ValueError(f"state {i}: needs at least one MIN action")
            acts = []
            for a, action in enumerate(actions):
                if len(action.options) == 0:
                    raise ValueError(f"state {i} action {a}: needs at least one MAX option")
                opts = []
                for b, opt in enumerate(action.options):
                    where = f"state {i} action {a} option {b}"
                    payment = float(opt.payment)
                    if not math.isfinite(payment):
                        raise ValueError(f"{where}: payment is not finite")
                    row = _check_probability_row(opt.row, self.n, where).copy()
                    row.setflags(write=False)
                    opts.append(MaxOption(payment, row, opt.label))
                acts.append(MinAction(tuple(opts), action.label))
            states.append(tuple(acts))
        object.__setattr__(self, "states", tuple(states))

    @cached_property
    def _tables(self):
        """Flattened option tables for vectorized batch evaluation.

        Options are stacked in (state, action, option) order; segmented
        reductions recover the max over options and the min over actions.
        """
        rows, pays = [], []
        option_starts, action_starts = [], []
        pos = 0
        act = 0
        for actions in self.states:
            action_starts.append(act)
            for action in actions:
                option_starts.append(pos)
                for opt in action.options:
                    rows.append(opt.row)
                    pays.append(opt.payment)
                    pos += 1
                act += 1
        return (
            np.array(rows, dtype=float),
            np.array(pays, dtype=float),
            np.array(option_starts, dtype=np.intp),
            np.array(action_starts, dtype=np.intp),
        )

    @cached_property
    def _action_tables(self):
        """Per-action (payments, rows) pairs for single-vector evaluation."""
        return tuple(
            tuple((np.array([o.payment for o in action.options]),
                   np.array([o.row for o in action.options]))
                  for action in actions)
            for actions in self.states
        )

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Dynamic-programming operator: min over actions, max over options."""
        if x.ndim == 1:
            out = np.empty(self.n)
            for i, actions in enumerate(self._action_tables):
                out[i] = min(float(np.max(pays + rows @ x))
                             for pays, rows in actions)
            return out
        rows, pays, ostart, astart = self._tables
        vals = x @ rows.T + pays
        per_action = np.maximum.reduceat(vals, ostart, axis=-1)
        return np.minimum.reduceat(per_action, astart, axis=-1)


# ---------------------------------------------------------------------------
# Shapley operator handles
# ---------------------------------------------------------------------------

class _GameEval:
    def __init__(self, game: GameSpec):
        self.game = game

    def __call__(self, x):
        return self.game.evaluate(x)


class _IdentityEval:
    def __call__(self, x):
        return np.array(x, dtype=float)


class _MarkovChainEval:
    def __init__(self, P: np.ndarray, r: np.ndarray):
        self.P = P
        self.r = r

    def __call__(self, x):
        return x @ self.P.T + self.r


class _LogActionEval:
    """Closed form of the three-state operator with log-priced actions.

    Coordinate 1 is ``sup over p in (0,1] of (log p + p min(x1,x3) + (1-p) x2)``;
    with d = min(x1,x3) - x2 the optimum sits at p=1 when d >= -1 and at
    p = -1/d otherwise, giving the value x2 - 1 - log(-d).  Coordinate 2 is the
    dual infimum with e = max(x2,x3) - x1: value max(x2,x3) when e <= 1, else
    x1 + 1 + log(e).  Coordinate 3 is absorbing.
    """

    def __call__(self, x):
        if x.ndim == 1:
            x1, x2, x3 = float(x[0]), float(x[1]), float(x[2])
            m = x1 if x1 < x3 else x3
            d = m - x2
            t1 = m if d >= -1.0 else x2 - 1.0 - math.log(-d)
            mx = x2 if x2 > x3 else x3
            e = mx - x1
            t2 = mx if e <= 1.0 else x1 + 1.0 + math.log(e)
            return np.array([t1, t2, x3])
        x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
        m = np.minimum(x1, x3)
        d = m - x2
        low = d < -1.0
        t1 = np.where(low, x2 - 1.0 - np.log(np.where(low, -d, 1.0)), m)
        mx = np.maximum(x2, x3)
        e = mx - x1
        hi = e > 1.0
        t2 = np.where(hi, x1 + 1.0 + np.log(np.where(hi, e, 1.0)), mx)
        return np.stack([t1, t2, x3], axis=-1)


@dataclass(frozen=True, eq=False)
class ShapleyOperator:
    """Evaluable monotone, additively homogeneous operator on R^n.

    ``fn`` must be vectorized over a leading batch dimension: it maps arrays
    of shape (n,) or (m, n) to arrays of the same shape.  Handles are
    immutable and evaluation is pure, so they are safe to share across
    workers.
    """

    n: int
    provenance: str  # finite-game | builtin-example | identity | markov-chain
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    game: GameSpec | None = None

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.n:
            raise ValueError(f"operator expects vectors of length {self.n}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("operator input has non-finite entries")
        return self.fn(x)

    __call__ = evaluate


def evaluate(op: ShapleyOperator, x) -> np.ndarray:
    """Evaluate ``op`` at ``x`` (validating shape and finiteness)."""
    return op.evaluate(x)


def operator_from_game(game: GameSpec, name: str = "game") -> ShapleyOperator:
    return ShapleyOperator(game.n, "finite-game", _GameEval(game), name, game)


def identity_operator(n: int) -> ShapleyOperator:
    if n < 1:
        raise ValueError("identity operator needs n >= 1")
    return ShapleyOperator(int(n), "identity", _IdentityEval(), f"identity({n})")


def markov_chain_operator(P, r) -> ShapleyOperator:
    """Single-policy operator ``x -> r + P x`` of a Markov reward chain."""
    P = np.asarray(P, dtype=float)
    r = np.asarray(r, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"P must be square, got shape {P.shape}")
    n = P.shape[0]
    if r.shape != (n,):
        raise ValueError(f"r has shape {r.shape}, expected ({n},)")
    if not np.all(np.isfinite(r)):
        raise ValueError("r has non-finite entries")
    for i in range(n):
        _check_probability_row(P[i], n, f"chain row {i}")
    P = P.copy()
    P.setflags(write=False)
    r = r.copy()
    r.setflags(write=False)
    return ShapleyOperator(n, "markov-chain", _MarkovChainEval(P, r), f"markov-chain({n})")


def log_action_operator() -> ShapleyOperator:
    """Three-state game where moving probability is priced logarithmically.

    State 1 is controlled by MAX, state 2 by MIN, state 3 is absorbing; the
    action is a probability p in (0,1] of leaving toward the favorable state,
    bought at log-price.  Known in closed form, see ``_LogActionEval``.
    """
    return ShapleyOperator(3, "builtin-example", _LogActionEval(), "example1")


def polyhedral_example_game() -> GameSpec:
    """Three-state perfect-information game with min/max-affine operator.

    Its coordinates are
      T1 = (x1+x3)/2  min  1+(x1+x2)/2
      T2 = 2+(x1+x3)/2  min  ( 1+(x1+x2)/2  max  -2+x3 )
      T3 = 3+(x1+x3)/2  max  1+x3
    encoded below as payments and transition rows.
    """
    half13 = np.array([0.5, 0.0, 0.5])
    half12 = np.array([0.5, 0.5, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])

    def act(label, *opts):
        return MinAction(tuple(MaxOption(p, row, lbl) for lbl, p, row in opts), label)

    states = (
        (act("a0", ("b0", 0.0, half13)), act("a1", ("b0", 1.0, half12))),
        (act("a0", ("b0", 2.0, half13)), act("a1", ("b0", 1.0, half12), ("b1", -2.0, e3))),
        (act("a0", ("b0", 3.0, half13), ("b1", 1.0, e3)),),
    )
    return GameSpec(3, states)


def polyhedral_example_operator() -> ShapleyOperator:
    game = polyhedral_example_game()
    return ShapleyOperator(3, "builtin-example", _GameEval(game), "example2", game)


def builtin_operator(name: str, n: int | None = None, P=None, r=None) -> ShapleyOperator:
    """Construct a built-in operator by name.

    ``example1`` is the log-priced-action game, ``example2`` the
    perfect-information min/max-affine game, ``identity`` needs ``n``, and
    ``markov-chain`` needs a stochastic matrix ``P`` and payment vector ``r``.
    """
    if name == "example1":
        return log_action_operator()
    if name == "example2":
        return polyhedral_example_operator()
    if name == "identity":
        if n is None:
            raise ValueError("identity operator needs n")
        return identity_operator(n)
    if name == "markov-chain":
        if P is None or r is None:
            raise ValueError("markov-chain operator needs P and r")
        return markov_chain_operator(P, r)
    raise ValueError(f"unknown builtin operator {name!r}")


# ---------------------------------------------------------------------------
# Game file format
# ---------------------------------------------------------------------------

def game_to_dict(game: GameSpec) -> dict:
    return {
        "n": game.n,
        "states": [
            {
                "min_actions": [
                    {
                        "label": action.label,
                        "options": [
                            {
                                "label": opt.label,
                                "payment": float(opt.payment),
                                "row": [float(v) for v in opt.row],
                            }
                            for opt in action.options
                        ],
                    }
                    for action in actions
                ]
            }
            for actions in game.states
        ],
    }


def game_from_dict(data: dict) -> GameSpec:
    try:
        n = int(data["n"])
        raw_states = data["states"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"game file: missing field {exc}") from exc
    if len(raw_states) != n:
        raise ValueError(f"game file: {len(raw_states)} states listed, field 'n' says {n}")
    states = []
    for i, st in enumerate(raw_states):
        try:
            raw_actions = st["min_actions"]
        except (KeyError, TypeError):
            raise ValueError(f"game file: state {i} lacks 'min_actions'") from None
        actions = []
        for a, ac in enumerate(raw_actions):
            try:
                raw_options = ac["options"]
            except (KeyError, TypeError):
                raise ValueError(f"game file: state {i} action {a} lacks 'options'") from None
            options = []
            for b, op in enumerate(raw_options):
                try:
                    payment = op["payment"]
                    row = op["row"]
                except (KeyError, TypeError) as exc:
                    raise ValueError(
                        f"game file: state {i} action {a} option {b} lacks {exc}"
                    ) from None
                options.append(MaxOption(payment, np.asarray(row, dtype=float),
                                         str(op.get("label", f"b{b}"))))
            actions.append(MinAction(tuple(options), str(ac.get("label", f"a{a}"))))
        states.append(tuple(actions))
    return GameSpec(n, tuple(states))


def load_game(path) -> GameSpec:
    with open(path) as fh:
        return game_from_dict(json.load(fh))


def save_game(game: GameSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(game_to_dict(game), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Operator axiom sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxiomGaps:
    """Worst sampled violations of the four Shapley-operator axioms.

    All gaps are zero (up to roundoff) for a genuine monotone additively
    homogeneous operator.
    """

    monotonicity: float
    additive_homogeneity: float
    sup_nonexpansive: float
    hilbert_nonexpansive: float

    def max(self) -> float:
        return max(self.monotonicity, self.additive_homogeneity,
                   self.sup_nonexpansive, self.hilbert_nonexpansive)


def operator_axiom_gaps(op: ShapleyOperator, samples: int = 1000, seed: int = 0,
                        scale: float = 10.0) -> AxiomGaps:
    """Sample worst-case violations of monotonicity, additive homogeneity and
    nonexpansiveness (sup norm and Hilbert seminorm)."""
    rng = np.random.default_rng(seed)
    n = op.n
    X = rng.uniform(-scale, scale, (samples, n))
    Y = X + rng.uniform(0.0, scale, (samples, n))
    TX = op.evaluate(X)
    TY = op.evaluate(Y)
    mono = float(np.max(TX - TY, initial=-np.inf))

    c = rng.uniform(-100.0, 100.0, (samples, 1))
    TXc = op.evaluate(X + c)
    hom = float(np.max(np.abs(TXc - TX - c)))

    Z = rng.uniform(-scale, scale, (samples, n))
    TZ = op.evaluate(Z)
    dxz = X - Z
    dT = TX - TZ
    sup_gap = float(np.max(np.abs(dT).max(axis=1) - np.abs(dxz).max(axis=1)))
    hil_gap = float(np.max((dT.max(axis=1) - dT.min(axis=1))
                           - (dxz.max(axis=1) - dxz.min(axis=1))))
    return AxiomGaps(max(mono, 0.0), hom, max(sup_gap, 0.0), max(hil_gap, 0.0))
