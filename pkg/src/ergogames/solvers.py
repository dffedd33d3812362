"""Value iteration, mean-payoff estimation, and ergodic-equation solving.

The ergodic equation ``g + T(u) = lambda*1 + u`` is solved as a fixed-point
problem on the quotient of R^n by constant vectors: the damped map
``u -> canonical((1-theta) u + theta (g + T(u)))`` is nonexpansive in the
Hilbert seminorm, and its residual seminorm is nonincreasing along iterates.
Because biases can be enormous (for the built-in log-action game they grow
like exp of the perturbation gap), the plain damped iteration is optionally
augmented with safeguarded finite-difference Newton bursts that are accepted
only when they strictly reduce the residual; correctness never depends on
them, since a solve succeeds only when the independently re-evaluable
residual falls below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .core import QuotientPoint, ShapleyOperator, _canonical_array


@dataclass(frozen=True)
class SolveConfig:
    """Knobs of the ergodic-equation solver.

    ``tol`` bounds the Hilbert seminorm of the residual ``g + T(u) - u``.
    ``damping`` is the averaging weight theta of the damped iteration.
    ``divergence_radius`` bounds the seminorm of iterates; beyond it the
    solve reports divergence (evidence of unsolvability, not a proof).
    ``accelerate`` enables the safeguarded Newton bursts; the pure damped
    scheme is obtained with ``accelerate=False``.
    """

    tol: float = 1e-9
    max_iter: int = 1_000_000
    damping: float = 0.5
    divergence_radius: float = 1e8
    seed: int | None = None
    accelerate: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.divergence_radius > 0:
            raise ValueError("divergence_radius must be positive")


@dataclass(frozen=True, eq=False)
class ValueTrace:
    """Trace ``v^0, ..., v^k`` of the finite-horizon values, ``v^0 = 0``."""

    values: np.ndarray  # shape (k+1, n)
    horizon: int

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass(frozen=True, eq=False)
class MeanPayoffEstimate:
    """Average payoff per stage ``v^k / k`` with its seminorm diagnostic.

    A zero seminorm means the estimate is independent of the initial state.
    """

    estimate: np.ndarray
    seminorm: float
    horizon: int


@dataclass(frozen=True, eq=False)
class ErgodicSolution:
    """Solution of ``g + T(u) = lambda*1 + u`` up to the solver tolerance."""

    lam: float
    bias: QuotientPoint
    residual: float
    iterations: int
    converged = True


@dataclass(frozen=True, eq=False)
class NotConverged:
    """Failed solve: ``diverged`` (iterate seminorm blew past the radius) or
    ``stalled`` (iteration cap hit).  Carries the last iterate for autopsy."""

    reason: str
    last: np.ndarray
    residual: float
    iterations: int
    converged = False


def _check_g(op: ShapleyOperator, g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != (op.n,):
        raise ValueError(f"g has shape {g.shape}, expected ({op.n},)")
    if not np.all(np.isfinite(g)):
        raise ValueError("g has non-finite entries")
    return g


def value_iteration(op: ShapleyOperator, g, k: int) -> ValueTrace:
    """Iterate ``v^l = g + T(v^(l-1))`` from ``v^0 = 0`` for ``k`` stages."""
    g = _check_g(op, g)
    if k < 0:
        raise ValueError("horizon k must be nonnegative")
    values = np.empty((k + 1, op.n))
    v = np.zeros(op.n)
    values[0] = v
    for l in range(1, k + 1):
        v = g + op.fn(v)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError(f"value iteration produced non-finite values at stage {l}")
        values[l] = v
    values.setflags(write=False)
    return ValueTrace(values, k)


def mean_payoff_estimate(trace: ValueTrace, k: int | None = None) -> MeanPayoffEstimate:
    """Average payoff vector ``v^k / k`` of a trace, with seminorm diagnostic."""
    if k is None:
        k = trace.horizon
    if not 1 <= k <= trace.horizon:
        raise ValueError(f"need 1 <= k <= {trace.horizon}, got {k}")
    est = trace.values[k] / k
    return MeanPayoffEstimate(est, float(est.max() - est.min()), k)


def _newton_candidate(fn, g, u, rho, res, n):
    """One safeguarded Newton step on the quotient chart pinning argmin(u).

    Solves the (n-1)-dimensional system ``rho_i(u) - rho_pin(u) = 0`` with a
    central finite-difference Jacobian, then backtracks the step until the
    residual seminorm strictly decreases.  Returns ``(u', rho', res')`` or
    ``None``.  Evaluations stay well conditioned on the canonical chart
    because all free coordinates are nonnegative.  The difference step is
    kept small relative to each coordinate so that it does not straddle
    min/max kinks whose scale is set by coordinate gaps, while staying above
    the roundoff floor of residuals computed from large coordinates.
    """
    pin = int(np.argmin(u))
    free = [j for j in range(n) if j != pin]
    psi0 = rho[free] - rho[pin]

    m = n - 1
    J = np.empty((m, m))
    for col, j in enumerate(free):
        h = max(1e-6, 1e-9 * abs(u[j]))
        up = u.copy()
        up[j] += h
        um = u.copy()
        um[j] -= h
        rp = g + fn(up) - up
        rm = g + fn(um) - um
        J[:, col] = ((rp[free] - rp[pin]) - (rm[free] - rm[pin])) / (2.0 * h)

    try:
        step = np.linalg.solve(J, -psi0)
        if not np.all(np.isfinite(step)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        step, *_ = np.linalg.lstsq(J, -psi0, rcond=None)
        if not np.all(np.isfinite(step)):
            return None

    t = 1.0
    for _ in range(8):
        cand = u.copy()
        cand[free] += t * step
        cand = _canonical_array(cand)
        if np.all(np.isfinite(cand)):
            crho = g + fn(cand) - cand
            cres = float(crho.max() - crho.min())
            if cres < res:
                return cand, crho, cres
        t *= 0.25
    return None


def _anderson_candidate(fn, g, hist_v, hist_f, res, radius):
    """Anderson(m) extrapolation from the recent iterate history.

    Builds secant information for the quotient map from on-trajectory
    differences, which stays well conditioned even when coordinates are so
    large that finite-difference probing drowns in roundoff.  Works on
    mean-centered representatives so the least squares never sees the
    constant direction.  Returns ``(u', rho', res')`` or ``None``.
    """
    k = len(hist_f) - 1
    fk = hist_f[k]
    dF = np.stack([hist_f[j + 1] - hist_f[j] for j in range(k)], axis=1)
    dV = np.stack([hist_v[j + 1] - hist_v[j] for j in range(k)], axis=1)
    try:
        gamma, *_ = np.linalg.lstsq(dF, fk, rcond=1e-12)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(gamma)) or float(np.abs(gamma).max()) > 1e12:
        return None
    cand = hist_v[k] + fk - (dV + dF) @ gamma
    if not np.all(np.isfinite(cand)):
        return None
    cand = _canonical_array(cand)
    if float(cand.max()) > radius:
        return None
    crho = g + fn(cand) - cand
    cres = float(crho.max() - crho.min())
    if cres <= res * (1.0 - 1e-3):
        return cand, crho, cres
    return None


def _ray_candidate(fn, g, u, rho, res, delta, radius):
    """Overrelaxation along a drift direction.

    When the iterate crawls toward a distant bias, the residual seminorm can
    sit on a plateau (extreme residual coordinates locked by active affine
    pieces), so a strict-decrease rule would reject every long jump.  This
    burst scans geometrically longer steps along ``delta`` and keeps the
    longest one whose residual does not get worse and whose seminorm stays
    inside the divergence radius.  Genuinely unsolvable instances ride this
    toward the radius and are then reported as diverged by the main loop.
    ``delta`` is either the damped step ``theta*rho`` or the net displacement
    over the last few iterations; the latter aligns with the flat direction
    of a plateau even when single-step directions do not.
    """
    dspan = float(delta.max() - delta.min())
    if dspan <= 0.0:
        return None
    # Residuals computed from coordinates of size H carry O(eps*H) roundoff,
    # so both the acceptance band and tie-breaking must tolerate that noise.
    noise = 8.0 * np.finfo(float).eps * (1.0 + float(u.max()))
    band = res * (1.0 + 1e-12) + noise
    best = None
    s = 4.0
    for _ in range(16):
        cand = _canonical_array(u + s * delta)
        if not np.all(np.isfinite(cand)):
            break
        crho = g + fn(cand) - cand
        cres = float(crho.max() - crho.min())
        if float(cand.max()) > radius:
            # Residual essentially flat (growth sublinear in the distance
            # travelled) all the way past the search radius: the iterate is
            # running away without progress, which is what the radius is
            # meant to flag.  Signalled as a 4-tuple.
            if cres <= band + 1e-9 * s * dspan:
                return "diverged", cand, crho, cres
            break
        # fallthrough below keeps best as a 3-tuple
        # No early stop on a worsening sample: residual spikes at branch
        # flips can hide better points farther along the ray.  Noise-level
        # wiggles with negligible movement are not acceptable: they would
        # keep resetting the Anderson history without making progress.
        jump = cand - u
        meaningful = cres <= res - noise
        big = float(jump.max() - jump.min()) >= 1e-4 * (1.0 + float(u.max()))
        if cres <= band and (meaningful or big) and (best is None or cres <= best[2] + noise):
            best = (cand, crho, cres)
        s *= 4.0
    return best


def solve_ergodic(op: ShapleyOperator, g, cfg: SolveConfig | None = None,
                  x0=None) -> ErgodicSolution | NotConverged:
    """Solve ``g + T(u) = lambda*1 + u`` on the quotient space.

    The base scheme is the damped iteration
    ``u <- canonical((1-theta) u + theta (g + T(u)))``; with
    ``cfg.accelerate`` (the default) safeguarded Newton bursts are attempted
    every few steps and kept only when they strictly reduce the residual
    seminorm.  On success, ``lambda`` is the midpoint of the extremes of
    ``g + T(u) - u``, which minimizes the sup-norm residual over all
    representatives.  ``x0`` defaults to the zero vector.
    """
    cfg = cfg or SolveConfig()
    g = _check_g(op, g)
    n = op.n
    if x0 is None:
        u = np.zeros(n)
    else:
        u = np.asarray(x0, dtype=float)
        if u.shape != (n,):
            raise ValueError(f"x0 has shape {u.shape}, expected ({n},)")
        if not np.all(np.isfinite(u)):
            raise ValueError("x0 has non-finite entries")
        u = _canonical_array(u)

    fn = op.fn
    theta = cfg.damping
    radius = cfg.divergence_radius
    burst_every = 6
    memory = 5
    cooldown = 0
    aa_cooldown = 0
    ray_settle = 8
    res_at_last_ray = np.inf
    iterations = 0
    hist_v: list[np.ndarray] = []
    hist_f: list[np.ndarray] = []
    anchor = u.copy()

    rho = g + fn(u) - u
    res = float(rho.max() - rho.min())

    def remember(u_cur, rho_cur):
        hist_v.append(u_cur - u_cur.mean())
        hist_f.append(theta * (rho_cur - rho_cur.mean()))
        if len(hist_v) > memory + 1:
            del hist_v[0], hist_f[0]

    remember(u, rho)
    while True:
        if res <= cfg.tol:
            lam = float(rho.max() + rho.min()) / 2.0
            return ErgodicSolution(lam, QuotientPoint(u), res, iterations)
        if iterations >= cfg.max_iter:
            return NotConverged("stalled", u, res, iterations)

        # Canonical iterates have min coordinate 0, so max == Hilbert seminorm.
        if cfg.accelerate and n >= 2:
            if aa_cooldown == 0 and len(hist_f) >= 2:
                got = _anderson_candidate(fn, g, hist_v, hist_f, res, radius)
                if got is not None:
                    u, rho, res = got
                    iterations += 1
                    remember(u, rho)
                    continue
                aa_cooldown = 2
            if cooldown == 0:
                got = _newton_candidate(fn, g, u, rho, res, n)
                if got is not None and float(got[0].max()) <= radius:
                    u, rho, res = got
                    anchor = u.copy()
                    iterations += 1
                    remember(u, rho)
                    continue
                drift = u - anchor
                anchor = u.copy()
                # Ray directions, most informative first: recent net drift,
                # the indicator of the upper coordinate cluster (exact in
                # floating point, so huge jumps preserve small coordinate
                # gaps), and the damped step itself.
                directions = []
                if float(drift.max() - drift.min()) > 0.0:
                    directions.append(drift)
                span = float(u.max())
                if span > 0.0:
                    upper = (u >= 0.5 * span).astype(float)
                    if 0 < int(upper.sum()) < n:
                        directions.append(upper * max(1.0, theta * res))
                directions.append(theta * rho)
                got = None
                for delta in directions:
                    got = _ray_candidate(fn, g, u, rho, res, delta, radius)
                    if got is not None:
                        break
                if got is not None:
                    if len(got) == 4:
                        return NotConverged("diverged", got[1], got[3], iterations + 1)
                    # No residual progress between rays means the drift
                    # direction is polluted by the settling transient; longer
                    # settling halves that dust per step, growing later jumps
                    # exponentially (or exposing divergence to the marker).
                    if got[2] > 0.99 * res_at_last_ray:
                        ray_settle = min(2 * ray_settle, 64)
                    else:
                        ray_settle = 8
                    res_at_last_ray = got[2]
                    jump = got[0] - u
                    relative_jump = float(jump.max() - jump.min()) / (1.0 + float(u.max()))
                    u, rho, res = got
                    anchor = u.copy()
                    iterations += 1
                    cooldown = ray_settle
                    # Secant history survives relatively small jumps; only a
                    # jump that rescales the iterate invalidates it.
                    if relative_jump > 1e-3:
                        hist_v.clear()
                        hist_f.clear()
                    remember(u, rho)
                    continue
                cooldown = burst_every

        u = _canonical_array(u + theta * rho)
        iterations += 1
        if float(u.max()) > radius:
            return NotConverged("diverged", u, res, iterations)
        rho = g + fn(u) - u
        res = float(rho.max() - rho.min())
        remember(u, rho)
        if cooldown:
            cooldown -= 1
        if aa_cooldown:
            aa_cooldown -= 1


def verify_solution(op: ShapleyOperator, g, sol: ErgodicSolution, tol: float) -> float:
    """Independently re-evaluate the residual seminorm of a reported solution."""
    g = _check_g(op, g)
    u = sol.bias.vector
    rho = g + op.evaluate(u) - u - sol.lam
    resid = float(rho.max() - rho.min())
    if resid > tol:
        raise AssertionError(f"solution fails re-verification: residual {resid} > tol {tol}")
    return resid
