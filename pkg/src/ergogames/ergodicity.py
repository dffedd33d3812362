"""Slice-space membership, boundedness probing, and a layered ergodicity verdict.

A game is ergodic when the ergodic equation stays solvable under every
state-dependent payment perturbation, which happens exactly when all slice
spaces ``{x : a*1 + x <= T(x) <= b*1 + x}`` are bounded in the Hilbert
seminorm.  Boundedness cannot be certified by evaluation alone, so this
module layers three probes: an exact unboundedness witness along Boolean
rays (valid for operators whose residual is eventually affine along rays),
sampled perturbation solves as positive evidence, and a Cesaro mean-payoff
diagnosis of failing perturbations.  Only the Boolean witness is a
certificate; everything else is labelled evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ShapleyOperator, hilbert_seminorm
from .solvers import SolveConfig, mean_payoff_estimate, solve_ergodic, value_iteration

#: Enumeration guard: Boolean rays grow as 2^n - 2.
MAX_BOOLEAN_STATES = 24


@dataclass(frozen=True)
class SliceQuery:
    """Bounds (alpha, beta) of a slice space; alpha > beta gives an
    (typically empty) query and is allowed."""

    alpha: float
    beta: float


def slice_membership(op: ShapleyOperator, x, query: SliceQuery) -> bool:
    """Exact componentwise test ``alpha*1 + x <= T(x) <= beta*1 + x``."""
    x = np.asarray(x, dtype=float)
    t = op.evaluate(x)
    return bool(np.all(query.alpha + x <= t) and np.all(t <= query.beta + x))


def residual_seminorm(op: ShapleyOperator, x) -> float:
    """Hilbert seminorm of ``x - T(x)``; invariant under constant shifts of x."""
    x = np.asarray(x, dtype=float)
    return hilbert_seminorm(x - op.evaluate(x))


@dataclass(frozen=True, eq=False)
class BooleanRayWitness:
    """Nonconstant 0/1 direction whose residual stabilizes along the ray.

    For operators that are eventually affine along rays (all finite games),
    a stabilized residual proves the ray eventually stays inside the slice
    space S_alpha^beta, so that slice space is unbounded.
    """

    direction: np.ndarray
    alpha: float
    beta: float
    scale: float
    stabilization_gap: float


def boolean_ray_witness(op: ShapleyOperator, scale: float = 1e3,
                        tol: float = 1e-9) -> BooleanRayWitness | None:
    """Search all nonconstant Boolean directions for a stabilized residual.

    Compares ``rho(s) = T(s u) - s u`` at ``s`` in ``{scale, 2*scale}``; a
    sup-norm gap below ``tol`` yields the witness (u, min rho, max rho).
    Directions are enumerated with the state-1 bit varying fastest.  The
    witness is incomplete: operators can be non-ergodic with residuals that
    grow along every Boolean ray (e.g. chains with several absorbing states).
    """
    n = op.n
    if n > MAX_BOOLEAN_STATES:
        raise ValueError(
            f"Boolean ray enumeration needs n <= {MAX_BOOLEAN_STATES}, got n={n}")
    if n < 2:
        return None
    total = 2 ** n - 2
    chunk = 1 << 14
    for start in range(1, total + 1, chunk):
        ms = np.arange(start, min(start + chunk, total + 1), dtype=np.int64)
        U = ((ms[:, None] >> np.arange(n)) & 1).astype(float)
        r1 = op.fn(scale * U) - scale * U
        r2 = op.fn(2.0 * scale * U) - 2.0 * scale * U
        gaps = np.abs(r1 - r2).max(axis=1)
        hit = np.nonzero(gaps <= tol)[0]
        if hit.size:
            i = int(hit[0])
            rho = r2[i]
            return BooleanRayWitness(U[i].astype(int), float(rho.min()),
                                     float(rho.max()), scale, float(gaps[i]))
    return None


@dataclass(frozen=True, eq=False)
class PerturbationWitness:
    """Perturbation whose Cesaro mean payoff stabilizes to a nonconstant
    vector, i.e. the mean payoff depends on the initial state."""

    g: np.ndarray
    mean_payoff: np.ndarray
    seminorm: float
    stabilization_gap: float
    horizon: int


@dataclass(frozen=True, eq=False)
class SampleRecord:
    g: np.ndarray
    converged: bool
    reason: str
    iterations: int
    residual: float
    lam: float | None


@dataclass(frozen=True, eq=False)
class ErgodicityReport:
    """Layered verdict with its supporting evidence.

    ``verdict`` is one of ``non-ergodic-witness``, ``ergodic-evidence``, or
    ``inconclusive``.  Only a Boolean-ray witness is certificate-grade (for
    finitely-affine operators); solve-based outcomes are numerical evidence.
    """

    verdict: str
    witness: BooleanRayWitness | PerturbationWitness | None
    samples: tuple[SampleRecord, ...]
    notes: str = ""

    def to_dict(self) -> dict:
        w = None
        if isinstance(self.witness, BooleanRayWitness):
            w = {
                "kind": "boolean-ray",
                "direction": [int(v) for v in self.witness.direction],
                "alpha": self.witness.alpha,
                "beta": self.witness.beta,
                "scale": self.witness.scale,
                "stabilization_gap": self.witness.stabilization_gap,
            }
        elif isinstance(self.witness, PerturbationWitness):
            w = {
                "kind": "perturbation",
                "g": [float(v) for v in self.witness.g],
                "mean_payoff": [float(v) for v in self.witness.mean_payoff],
                "seminorm": self.witness.seminorm,
                "stabilization_gap": self.witness.stabilization_gap,
                "horizon": self.witness.horizon,
            }
        return {
            "verdict": self.verdict,
            "witness": w,
            "samples": [
                {
                    "g": [float(v) for v in s.g],
                    "converged": s.converged,
                    "reason": s.reason,
                    "iterations": s.iterations,
                    "residual": s.residual,
                    "lambda": s.lam,
                }
                for s in self.samples
            ],
            "notes": self.notes,
        }


def ergodicity_verdict(op: ShapleyOperator, num_g_samples: int = 25,
                       cfg: SolveConfig | None = None, g_candidates=(),
                       stab_tol: float = 1e-4,
                       vi_horizon: int = 100_000) -> ErgodicityReport:
    """Three-layer ergodicity test.

    (i) Boolean-ray witness -> non-ergodic (certificate for finite games).
    (ii) Solve the ergodic equation for the supplied ``g_candidates`` and
    then ``num_g_samples`` seeded uniform perturbations in [-1,1]^n; all
    succeeding is ergodic evidence.  Sampling stops at the first failure.
    (iii) At the first failing perturbation, run value iteration to
    ``2*vi_horizon`` stages; a mean payoff that is nonconstant (seminorm
    above ``max(10*cfg.tol, 10*stab_tol)``) and stabilized (estimates at
    ``vi_horizon`` and ``2*vi_horizon`` within ``stab_tol``) is a
    perturbation witness, otherwise the report is inconclusive.  Cesaro
    averages converge like 1/k, so ``stab_tol`` is a separate, coarser knob
    than the solver tolerance.
    """
    cfg = cfg or SolveConfig()
    n = op.n
    notes = []

    if n <= MAX_BOOLEAN_STATES:
        witness = boolean_ray_witness(op)
        if witness is not None:
            return ErgodicityReport("non-ergodic-witness", witness, (),
                                    "boolean ray witness found; certificate-grade "
                                    "for finitely-affine operators")
    else:
        notes.append(f"boolean ray enumeration skipped (n={n} > {MAX_BOOLEAN_STATES})")

    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    gs = [np.asarray(g, dtype=float) for g in g_candidates]
    gs += [rng.uniform(-1.0, 1.0, n) for _ in range(num_g_samples)]

    records = []
    failing = None
    for g in gs:
        sol = solve_ergodic(op, g, cfg)
        if sol.converged:
            records.append(SampleRecord(g, True, "converged", sol.iterations,
                                        sol.residual, sol.lam))
        else:
            records.append(SampleRecord(g, False, sol.reason, sol.iterations,
                                        sol.residual, None))
            failing = g
            break

    if failing is None:
        return ErgodicityReport("ergodic-evidence", None, tuple(records),
                                "; ".join(notes + [
                                    f"all {len(gs)} sampled perturbations solved; "
                                    "numerical evidence, not a proof"]))

    trace = value_iteration(op, failing, 2 * vi_horizon)
    est_k = mean_payoff_estimate(trace, vi_horizon)
    est_2k = mean_payoff_estimate(trace, 2 * vi_horizon)
    gap = float(np.max(np.abs(est_k.estimate - est_2k.estimate)))
    threshold = max(10.0 * cfg.tol, 10.0 * stab_tol)
    if est_2k.seminorm > threshold and gap <= stab_tol:
        witness = PerturbationWitness(failing, est_2k.estimate, est_2k.seminorm,
                                      gap, vi_horizon)
        return ErgodicityReport("non-ergodic-witness", witness, tuple(records),
                                "; ".join(notes + [
                                    "state-dependent stabilized mean payoff; "
                                    "numerical evidence, not a proof"]))
    return ErgodicityReport("inconclusive", None, tuple(records),
                            "; ".join(notes + [
                                f"solve failed at g={failing.tolist()} but mean payoff "
                                f"(seminorm {est_2k.seminorm:.3g}, stabilization gap "
                                f"{gap:.3g}) is not a usable witness"]))


@dataclass(frozen=True, eq=False)
class SliceSearchResult:
    """Outcome of the randomized slice-escape search."""

    max_seminorm: float
    escaped: bool
    witness: np.ndarray | None
    feasible: bool


def slice_escape_search(op: ShapleyOperator, query: SliceQuery, starts: int = 10,
                        radius_cap: float = 1e6, seed: int = 0,
                        max_steps: int = 400) -> SliceSearchResult:
    """Multistart ascent maximizing the Hilbert seminorm inside a slice space.

    Hill climbing with coordinate pushes, random zero-sum moves and
    multiplicative scaling; a move is kept only if the point stays in the
    slice.  Escaping ``radius_cap`` is evidence the slice space is unbounded
    (for the identity operator the search escapes along R*(1,0,...)); for
    ergodic operators the ascent stalls at the slice's actual extent.
    """
    n = op.n
    rng = np.random.default_rng(seed)
    best = 0.0
    witness = None
    feasible = False

    for start in range(starts):
        x = None
        candidates = [np.zeros(n)]
        candidates += [rng.uniform(-r, r, n) for r in (1.0, 2.0, 4.0, 8.0)]
        for c in candidates:
            if slice_membership(op, c, query):
                x = c
                break
        if x is None:
            continue
        feasible = True
        h = 1.0
        cur = hilbert_seminorm(x) if np.any(x != x[0]) else 0.0
        for _ in range(max_steps):
            if cur > best:
                best = cur
                witness = x.copy()
            if cur >= radius_cap:
                return SliceSearchResult(cur, True, x, True)
            moves = []
            hi, lo = int(np.argmax(x)), int(np.argmin(x))
            push = np.zeros(n)
            push[hi] += h
            push[lo] -= h
            moves.append(x + push)
            if cur > 0:
                moves.append(x * 2.0)
            v = rng.standard_normal(n)
            v -= v.mean()
            moves.append(x + h * v)
            accepted = False
            for m in moves:
                mn = hilbert_seminorm(m)
                if mn > cur and slice_membership(op, m, query):
                    x, cur = m, mn
                    h *= 2.0
                    accepted = True
                    break
            if not accepted:
                h *= 0.5
                if h < 1e-9 * (1.0 + cur):
                    break
    return SliceSearchResult(best, False, witness, feasible)
