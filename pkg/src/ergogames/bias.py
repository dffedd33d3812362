"""Fixed-point set probing, bias-uniqueness verdicts, and perturbation scans.

For a perturbation g, the set of biases of ``g + T`` is probed by solving
the ergodic equation from many seeded starting points, optionally
re-solving from coordinate-perturbed copies of every class found, and
merging results that coincide up to the solver's accuracy.  Multiplicity is
one-sided: a ``multiple`` verdict ships two independently re-verified
biases, while ``unique`` only means no second class was found under the
start budget.  ``scan_plane`` sweeps a two-dimensional grid of
perturbations and reports the geometry of the multiple-verdict cells
(fraction, interior blocks, covering lines).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .core import ShapleyOperator, hilbert_distance, hilbert_seminorm
from .solvers import ErgodicSolution, SolveConfig, solve_ergodic


class LambdaConsistencyError(RuntimeError):
    """Distinct starts converged to incompatible ergodic constants.

    The ergodic constant is unique for a monotone additively homogeneous
    operator, so this indicates the tolerance is too loose for the instance.
    """


@dataclass(frozen=True, eq=False)
class StartRecord:
    origin: str  # "seed" or "explore"
    converged: bool
    reason: str
    iterations: int
    residual: float


@dataclass(frozen=True, eq=False)
class BiasProbe:
    """Classes of biases found at perturbation ``g``, merged at
    ``merge_radius`` in Hilbert distance."""

    op: ShapleyOperator
    g: np.ndarray
    cfg: SolveConfig
    merge_radius: float
    classes: tuple[ErgodicSolution, ...]
    lam: float | None
    log: tuple[StartRecord, ...]

    @property
    def unsolved(self) -> bool:
        return not self.classes


def _merge(classes: list[ErgodicSolution], sol: ErgodicSolution, eps: float) -> None:
    for c in classes:
        if hilbert_distance(sol.bias.vector, c.bias.vector) <= eps:
            return
    classes.append(sol)


def bias_set_probe(op: ShapleyOperator, g, starts: int = 32,
                   cfg: SolveConfig | None = None,
                   explore: bool = True) -> BiasProbe:
    """Multistart probe of the bias set of ``g + T``.

    Runs ``starts`` solves from seeded uniform points in ``[-R, R]^n`` with
    ``R = 10 (1 + max|g|)``; with ``explore``, one more round re-solves from
    ``u +- d e_i`` for every class found, every coordinate i and
    ``d in {0.1, 1}``.  Classes merge at radius ``100 * cfg.tol``.  The
    ergodic constant is taken from the first success and must agree with
    every other success within ``10 * cfg.tol``, else
    ``LambdaConsistencyError`` is raised.
    """
    cfg = cfg or SolveConfig()
    g = np.asarray(g, dtype=float)
    if g.shape != (op.n,):
        raise ValueError(f"g has shape {g.shape}, expected ({op.n},)")
    rng = np.random.default_rng(cfg.seed if cfg.seed is not None else 0)
    R = 10.0 * (1.0 + float(np.max(np.abs(g))))
    eps = 100.0 * cfg.tol

    classes: list[ErgodicSolution] = []
    log: list[StartRecord] = []
    lam: float | None = None

    def digest(sol, origin):
        nonlocal lam
        if sol.converged:
            log.append(StartRecord(origin, True, "converged", sol.iterations, sol.residual))
            if lam is None:
                lam = sol.lam
            elif abs(sol.lam - lam) > 10.0 * cfg.tol:
                raise LambdaConsistencyError(
                    f"ergodic constants disagree: {lam} vs {sol.lam} "
                    f"(gap {abs(sol.lam - lam):.3g} > 10*tol); tol too loose")
            _merge(classes, sol, eps)
        else:
            log.append(StartRecord(origin, False, sol.reason, sol.iterations, sol.residual))

    for _ in range(starts):
        x0 = rng.uniform(-R, R, op.n)
        digest(solve_ergodic(op, g, cfg, x0), "seed")

    if explore:
        for sol in list(classes):
            u = sol.bias.vector
            for i in range(op.n):
                for d in (0.1, 1.0):
                    for sgn in (1.0, -1.0):
                        x0 = u.copy()
                        x0[i] += sgn * d
                        digest(solve_ergodic(op, g, cfg, x0), "explore")

    return BiasProbe(op, g, cfg, eps, tuple(classes), lam, tuple(log))


@dataclass(frozen=True, eq=False)
class UniquenessVerdict:
    """``unique``, ``multiple`` (with a re-verified witness pair), or
    ``unsolved``."""

    kind: str
    witnesses: tuple[ErgodicSolution, ...] = ()


def uniqueness_verdict(probe: BiasProbe, merge_radius: float | None = None) -> UniquenessVerdict:
    """Classify a probe.  ``multiple`` re-verifies the residual of the two
    most distant classes and their pairwise Hilbert distance."""
    eps = probe.merge_radius if merge_radius is None else merge_radius
    if not probe.classes:
        return UniquenessVerdict("unsolved")
    if len(probe.classes) == 1:
        return UniquenessVerdict("unique", probe.classes)
    best, pair = -1.0, None
    for i in range(len(probe.classes)):
        for j in range(i + 1, len(probe.classes)):
            d = probe.classes[i].bias.distance(probe.classes[j].bias)
            if d > best:
                best, pair = d, (probe.classes[i], probe.classes[j])
    if best <= eps:
        raise AssertionError("merged classes closer than the merge radius")
    for sol in pair:
        u = sol.bias.vector
        resid = hilbert_seminorm(probe.g + probe.op.evaluate(u) - u)
        if resid > probe.cfg.tol:
            raise AssertionError(
                f"multiple-verdict witness fails re-verification: {resid} > {probe.cfg.tol}")
    return UniquenessVerdict("multiple", pair)


# ---------------------------------------------------------------------------
# Plane scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CellRecord:
    i: int
    j: int
    g: np.ndarray
    verdict: str
    lam: float | None
    classes: tuple[np.ndarray, ...]
    error: str = ""


@dataclass(frozen=True, eq=False)
class LineFit:
    point: np.ndarray
    direction: np.ndarray
    count: int


@dataclass(frozen=True, eq=False)
class ScanResult:
    """Grid scan of bias uniqueness over a perturbation plane."""

    axis1: int
    axis2: int
    values1: np.ndarray
    values2: np.ndarray
    fixed: dict
    step: float
    cells: tuple[CellRecord, ...]
    starts: int
    explore: bool
    seed: int

    def grid_shape(self) -> tuple[int, int]:
        return len(self.values1), len(self.values2)

    def counts(self) -> dict:
        out = {"unique": 0, "multiple": 0, "unsolved": 0}
        for c in self.cells:
            out[c.verdict] += 1
        return out

    def multiple_fraction(self) -> float:
        return self.counts()["multiple"] / len(self.cells)

    def multiple_points(self) -> np.ndarray:
        pts = [(self.values1[c.i], self.values2[c.j])
               for c in self.cells if c.verdict == "multiple"]
        return np.array(pts) if pts else np.empty((0, 2))

    def has_all_multiple_block(self, size: int = 3) -> bool:
        m1, m2 = self.grid_shape()
        grid = np.zeros((m1, m2), dtype=bool)
        for c in self.cells:
            grid[c.i, c.j] = c.verdict == "multiple"
        for i in range(m1 - size + 1):
            for j in range(m2 - size + 1):
                if grid[i:i + size, j:j + size].all():
                    return True
        return False

    def to_csv(self, fh) -> None:
        n = len(self.cells[0].g)
        writer = csv.writer(fh, lineterminator="\n")
        header = [f"g{k + 1}" for k in range(n)] + ["lambda", "verdict", "num_classes"]
        header += [f"bias_{k}" for k in range(n)]
        writer.writerow(header)
        for c in self.cells:
            row = [repr(float(v)) for v in c.g]
            row.append("" if c.lam is None else repr(float(c.lam)))
            row.append(c.verdict)
            row.append(len(c.classes))
            if c.classes:
                row += [repr(float(v)) for v in c.classes[0]]
            else:
                row += [""] * n
            writer.writerow(row)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def summary(self, max_lines: int = 5, deviation: float | None = None) -> dict:
        pts = self.multiple_points()
        tol = self.step if deviation is None else deviation
        lines, max_dev, uncovered = cover_points_with_lines(pts, max_lines, tol)
        return {
            "grid": {
                "axis1": self.axis1 + 1,
                "axis2": self.axis2 + 1,
                "range1": [float(self.values1[0]), float(self.values1[-1])],
                "range2": [float(self.values2[0]), float(self.values2[-1])],
                "step": self.step,
                "fixed": {str(k + 1): float(v) for k, v in sorted(self.fixed.items())},
                "cells": len(self.cells),
            },
            "counts": self.counts(),
            "multiple_fraction": self.multiple_fraction(),
            "has_all_multiple_block_3x3": self.has_all_multiple_block(3),
            "line_fit": {
                "lines": [
                    {
                        "point": [float(v) for v in ln.point],
                        "direction": [float(v) for v in ln.direction],
                        "count": ln.count,
                    }
                    for ln in lines
                ],
                "max_deviation": max_dev,
                "uncovered": uncovered,
            },
            "seed": self.seed,
            "starts": self.starts,
            "explore": self.explore,
        }


def _point_line_dist(pts: np.ndarray, p0: np.ndarray, d: np.ndarray) -> np.ndarray:
    rel = pts - p0
    return np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0])


def cover_points_with_lines(pts: np.ndarray, max_lines: int,
                            tol: float) -> tuple[list[LineFit], float, int]:
    """Greedy cover of plane points by at most ``max_lines`` straight lines.

    Candidate lines come from all point pairs (deterministically strided to
    at most ~600 base points); each round keeps the line covering the most
    uncovered points within ``tol``.  Groups are then refit by total least
    squares and the worst point-to-assigned-line distance is reported.
    """
    pts = np.asarray(pts, dtype=float)
    if len(pts) == 0:
        return [], 0.0, 0
    if len(pts) == 1:
        return [LineFit(pts[0], np.array([1.0, 0.0]), 1)], 0.0, 0

    base = pts[:: max(1, len(pts) // 600)]
    cands = []
    for i in range(len(base)):
        for j in range(i + 1, len(base)):
            d = base[j] - base[i]
            norm = np.hypot(*d)
            if norm > 1e-12:
                cands.append((base[i], d / norm))
    remaining = np.ones(len(pts), dtype=bool)
    chosen = []
    for _ in range(max_lines):
        if not remaining.any():
            break
        best_cover, best = None, -1
        for p0, d in cands:
            cover = (_point_line_dist(pts, p0, d) <= tol) & remaining
            c = int(cover.sum())
            if c > best:
                best, best_cover, best_line = c, cover, (p0, d)
        if best <= 0:
            break
        chosen.append(best_line)
        remaining &= ~best_cover

    if not chosen:
        return [], float("inf"), int(remaining.sum())

    # assign every point to its nearest chosen line, then refit by TLS
    dists = np.stack([_point_line_dist(pts, p0, d) for p0, d in chosen], axis=1)
    assign = np.argmin(dists, axis=1)
    lines = []
    max_dev = 0.0
    for k, (p0, d) in enumerate(chosen):
        group = pts[assign == k]
        if len(group) == 0:
            continue
        center = group.mean(axis=0)
        if len(group) > 1:
            _, _, vt = np.linalg.svd(group - center)
            d = vt[0]
        dev = float(_point_line_dist(group, center, d).max()) if len(group) else 0.0
        max_dev = max(max_dev, dev)
        lines.append(LineFit(center, d, len(group)))
    return lines, max_dev, int(remaining.sum())


def _axis_values(lo: float, hi: float, step: float) -> np.ndarray:
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


def _cell_seed(seed: int, i: int, j: int) -> int:
    return int(np.random.SeedSequence((seed, i, j)).generate_state(1)[0])


def _scan_cells(op, cells, cfg, starts, explore):
    out = []
    for i, j, g, cell_seed in cells:
        cell_cfg = replace(cfg, seed=cell_seed)
        try:
            probe = bias_set_probe(op, g, starts=starts, cfg=cell_cfg, explore=explore)
            verdict = uniqueness_verdict(probe)
            out.append(CellRecord(i, j, g, verdict.kind, probe.lam,
                                  tuple(s.bias.vector for s in probe.classes)))
        except (LambdaConsistencyError, AssertionError) as exc:
            out.append(CellRecord(i, j, g, "unsolved", None, (), str(exc)))
    return out


def scan_plane(op: ShapleyOperator, axis1: int, axis2: int, range1, range2,
               step: float, fixed: dict | None = None,
               cfg: SolveConfig | None = None, starts: int = 12,
               explore: bool = True, workers: int = 1) -> ScanResult:
    """Probe bias uniqueness over a grid in the (axis1, axis2) perturbation
    plane.

    ``axis1``/``axis2`` are 0-based coordinate indices; remaining
    coordinates take their values from ``fixed`` (default 0).  Every cell
    gets its own seed derived from ``(cfg.seed, i, j)``, so results do not
    depend on ``workers`` or on evaluation order.  Per-cell failures are
    recorded as ``unsolved`` and never abort the scan.
    """
    if op.n < 2:
        raise ValueError("scan_plane needs an operator of dimension >= 2")
    if step <= 0:
        raise ValueError("step must be positive")
    if axis1 == axis2 or not (0 <= axis1 < op.n) or not (0 <= axis2 < op.n):
        raise ValueError(f"axes must be distinct indices in [0, {op.n})")
    cfg = cfg or SolveConfig()
    fixed = dict(fixed or {})
    for k in fixed:
        if k in (axis1, axis2):
            raise ValueError(f"fixed coordinate {k} collides with a scan axis")
    seed = cfg.seed if cfg.seed is not None else 0

    v1 = _axis_values(*range1, step)
    v2 = _axis_values(*range2, step)
    base = np.zeros(op.n)
    for k, val in fixed.items():
        base[k] = val

    cells = []
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            g = base.copy()
            g[axis1] = a
            g[axis2] = b
            cells.append((i, j, g, _cell_seed(seed, i, j)))

    if workers <= 1:
        records = _scan_cells(op, cells, cfg, starts, explore)
    else:
        chunks = [cells[k::workers * 4] for k in range(workers * 4)]
        chunks = [c for c in chunks if c]
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_scan_cells, op, chunk, cfg, starts, explore)
                       for chunk in chunks]
            for fut in futures:
                records.extend(fut.result())
    records.sort(key=lambda c: (c.i, c.j))
    return ScanResult(axis1, axis2, v1, v2, fixed, step, tuple(records),
                      starts, explore, seed)
