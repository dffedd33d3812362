"""Discrete p-Laplacian Dirichlet problems on weighted graphs.

The operator maps a potential v to ``(L_p v)_i = sum_j phi(C_ij (v_i - v_j))``
with ``phi(t) = t |t|^(p-2)``; for p=2 it is the electrical-network
Laplacian with conductances C.  The boundary problem ``L_p(v) = -g`` on
interior vertices with ``v = w`` on the boundary is the Euler-Lagrange
equation of a convex energy, which is minimized here by gradient descent
with a backtracking (Armijo) line search; p=2 short-circuits to a direct
symmetric solve, which also provides the warm start for other exponents.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

BOUNDARY_TOL = 1e-12


class DescentNotConverged(RuntimeError):
    """Energy descent hit its iteration cap; carries the last iterate."""

    def __init__(self, message: str, v: np.ndarray, residual: float, iterations: int):
        super().__init__(message)
        self.v = v
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class PLaplacianProblem:
    """Weighted connected graph with exponent p, boundary data and currents.

    ``vertices`` are labels; ``edges`` are (u, v, c) triples over labels with
    conductance c > 0; ``boundary`` maps labels to prescribed potentials;
    ``current`` maps interior labels to injected current (default 0).
    """

    vertices: tuple[str, ...]
    edges: tuple[tuple[str, str, float], ...]
    p: float
    boundary: dict
    current: dict

    def __post_init__(self):
        names = [str(v) for v in self.vertices]
        if len(names) < 2:
            raise ValueError("graph needs at least two vertices")
        if len(set(names)) != len(names):
            raise ValueError("duplicate vertex labels")
        if not self.p > 1:
            raise ValueError(f"exponent p must exceed 1, got {self.p}")
        index = {v: k for k, v in enumerate(names)}
        eu, ev, ew = [], [], []
        for e, (a, b, c) in enumerate(self.edges):
            a, b = str(a), str(b)
            if a not in index or b not in index:
                raise ValueError(f"edge {e}: unknown vertex in ({a}, {b})")
            if a == b:
                raise ValueError(f"edge {e}: self-loop at {a}")
            c = float(c)
            if not (math.isfinite(c) and c > 0):
                raise ValueError(f"edge {e}: conductance must be positive, got {c}")
            eu.append(index[a])
            ev.append(index[b])
            ew.append(c)
        bnd = {str(k): float(v) for k, v in self.boundary.items()}
        if not bnd:
            raise ValueError("boundary set must be nonempty")
        for k, v in bnd.items():
            if k not in index:
                raise ValueError(f"boundary vertex {k!r} not in graph")
            if not math.isfinite(v):
                raise ValueError(f"boundary value at {k!r} is not finite")
        if len(bnd) == len(names):
            raise ValueError("boundary cannot cover every vertex")
        cur = {str(k): float(v) for k, v in self.current.items()}
        for k, v in cur.items():
            if k not in index:
                raise ValueError(f"current vertex {k!r} not in graph")
            if k in bnd:
                raise ValueError(f"current prescribed on boundary vertex {k!r}")
            if not math.isfinite(v):
                raise ValueError(f"current at {k!r} is not finite")
        n = len(names)
        adj = coo_matrix((np.ones(len(eu)), (eu, ev)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise ValueError(f"graph is not connected ({ncomp} components)")
        object.__setattr__(self, "vertices", tuple(names))
        object.__setattr__(self, "edges", tuple((names[u], names[v], w)
                                                for u, v, w in zip(eu, ev, ew)))
        object.__setattr__(self, "boundary", bnd)
        object.__setattr__(self, "current", cur)

    @cached_property
    def _arrays(self):
        index = {v: k for k, v in enumerate(self.vertices)}
        eu = np.array([index[a] for a, _, _ in self.edges], dtype=np.intp)
        ev = np.array([index[b] for _, b, _ in self.edges], dtype=np.intp)
        ew = np.array([c for _, _, c in self.edges], dtype=float)
        bidx = np.array(sorted(index[k] for k in self.boundary), dtype=np.intp)
        bval = np.array([self.boundary[self.vertices[k]] for k in bidx])
        bset = set(bidx.tolist())
        iidx = np.array([k for k in range(len(self.vertices)) if k not in bset],
                        dtype=np.intp)
        cur = np.array([self.current.get(self.vertices[k], 0.0) for k in iidx])
        return eu, ev, ew, bidx, bval, iidx, cur

    @property
    def n(self) -> int:
        return len(self.vertices)

    def interior_labels(self) -> tuple[str, ...]:
        _, _, _, _, _, iidx, _ = self._arrays
        return tuple(self.vertices[k] for k in iidx)

    def compose(self, x_interior: np.ndarray) -> np.ndarray:
        """Full potential vector from interior values plus boundary data."""
        _, _, _, bidx, bval, iidx, _ = self._arrays
        v = np.empty(self.n)
        v[bidx] = bval
        v[iidx] = x_interior
        return v


def _phi(t: np.ndarray, p: float) -> np.ndarray:
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def apply_plaplacian(problem: PLaplacianProblem, v) -> np.ndarray:
    """Evaluate ``L_p`` at a full potential vector; zero on constants."""
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.n,):
        raise ValueError(f"v has shape {v.shape}, expected ({problem.n},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("v has non-finite entries")
    eu, ev, ew, *_ = problem._arrays
    t = ew * (v[eu] - v[ev])
    f = _phi(t, problem.p)
    out = np.zeros(problem.n)
    np.add.at(out, eu, f)
    np.add.at(out, ev, -f)
    return out


def energy(problem: PLaplacianProblem, v) -> float:
    """Energy whose interior gradient is ``L_p(v) + g``.

    ``v`` must respect the boundary values within 1e-12.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.n,):
        raise ValueError(f"v has shape {v.shape}, expected ({problem.n},)")
    eu, ev, ew, bidx, bval, iidx, cur = problem._arrays
    if np.max(np.abs(v[bidx] - bval)) > BOUNDARY_TOL:
        raise ValueError("v does not match the boundary values")
    t = np.abs(ew * (v[eu] - v[ev]))
    return float(np.sum(t ** problem.p / (problem.p * ew)) + cur @ v[iidx])


def _interior_residual(problem: PLaplacianProblem, x: np.ndarray) -> np.ndarray:
    _, _, _, _, _, iidx, cur = problem._arrays
    v = problem.compose(x)
    return apply_plaplacian(problem, v)[iidx] + cur


def _laplacian_solve(problem: PLaplacianProblem) -> np.ndarray:
    """Direct interior solve of the p=2 (electrical) problem."""
    eu, ev, ew, bidx, bval, iidx, cur = problem._arrays
    n = problem.n
    L = np.zeros((n, n))
    for u, v, c in zip(eu, ev, ew):
        L[u, u] += c
        L[v, v] += c
        L[u, v] -= c
        L[v, u] -= c
    A = L[np.ix_(iidx, iidx)]
    b = -cur - L[np.ix_(iidx, bidx)] @ bval
    return np.linalg.solve(A, b)


def _descent(problem: PLaplacianProblem, x0: np.ndarray, tol: float,
             max_iter: int):
    """Gradient descent on the energy with Armijo backtracking.

    The trial step starts from a Barzilai-Borwein estimate and is halved
    until the Armijo condition (constant 1e-4) holds; convergence is
    declared on the interior residual sup norm, not the step size (for
    p < 2 the gradient is not Lipschitz at equal potentials).
    """
    x = x0.copy()
    grad = _interior_residual(problem, x)
    e = energy(problem, problem.compose(x))
    energies = [e]
    res = float(np.max(np.abs(grad))) if grad.size else 0.0
    t_prev = None
    x_prev = None
    g_prev = None
    it = 0
    while res > tol:
        if it >= max_iter:
            raise DescentNotConverged(
                f"descent hit the {max_iter}-iteration cap at residual {res:.3g}",
                problem.compose(x), res, it)
        d = -grad
        if x_prev is not None:
            dx = x - x_prev
            dg = grad - g_prev
            denom = float(dx @ dg)
            t = float(dx @ dx) / denom if denom > 0 else (t_prev or 1.0) * 2.0
            t = min(max(t, 1e-14), 1e14)
        else:
            t = 1.0 / (1.0 + res)
        gg = float(grad @ grad)
        # Near the minimum the true decrease t*gg falls below the roundoff
        # of the energy itself; the slack keeps the (mathematically strict)
        # descent from stalling on float ties.
        slack = 8.0 * np.finfo(float).eps * max(1.0, abs(e))
        accepted = False
        for _ in range(80):
            x_new = x + t * d
            e_new = energy(problem, problem.compose(x_new))
            if e_new <= e - 1e-4 * t * gg + slack:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            raise DescentNotConverged(
                f"line search failed at residual {res:.3g}",
                problem.compose(x), res, it)
        x_prev, g_prev, t_prev = x, grad, t
        x = x_new
        e = e_new
        energies.append(e)
        grad = _interior_residual(problem, x)
        res = float(np.max(np.abs(grad)))
        it += 1
    return x, res, it, np.array(energies)


def dirichlet_solve(problem: PLaplacianProblem, tol: float = 1e-8,
                    max_iter: int = 100_000, full_output: bool = False):
    """Solve ``(L_p v)_i = -g_i`` on interior vertices with ``v = w`` on the
    boundary.

    Returns the full potential vector; with ``full_output`` also a dict with
    the residual, iteration count, and the (strictly decreasing) energy
    history.  p=2 short-circuits to the direct solve; other exponents run
    energy descent warm-started from the p=2 solution.
    """
    x2 = _laplacian_solve(problem)
    if problem.p == 2.0:
        v = problem.compose(x2)
        res = float(np.max(np.abs(_interior_residual(problem, x2))))
        if full_output:
            return v, {"residual": res, "iterations": 0,
                       "energies": np.array([energy(problem, v)])}
        return v
    x, res, it, energies = _descent(problem, x2, tol, max_iter)
    v = problem.compose(x)
    if full_output:
        return v, {"residual": res, "iterations": it, "energies": energies}
    return v


def sublevel_radius_probe(problem: PLaplacianProblem, alpha: float,
                          budget: int, seed: int = 0) -> float:
    """Largest sup-norm of interior points found with ``|L_p(x|w) + g| <= alpha``.

    Random search over scales; a bounded sublevel set makes the returned
    radius saturate as the budget grows, which is the (numerical) content of
    the surjectivity characterization.
    """
    rng = np.random.default_rng(seed)
    _, _, _, _, _, iidx, _ = problem._arrays
    m = len(iidx)
    best = 0.0
    for _ in range(budget):
        r = 10.0 ** rng.uniform(-2.0, 4.0)
        x = rng.uniform(-r, r, m)
        res = float(np.max(np.abs(_interior_residual(problem, x))))
        if res <= alpha:
            best = max(best, float(np.max(np.abs(x))))
    return best


# ---------------------------------------------------------------------------
# Problem file format
# ---------------------------------------------------------------------------

def problem_to_dict(problem: PLaplacianProblem) -> dict:
    return {
        "vertices": list(problem.vertices),
        "edges": [{"u": a, "v": b, "c": c} for a, b, c in problem.edges],
        "p": problem.p,
        "boundary": dict(problem.boundary),
        "current": dict(problem.current),
    }


def problem_from_dict(data: dict) -> PLaplacianProblem:
    try:
        vertices = data["vertices"]
        edges = data["edges"]
        p = data["p"]
        boundary = data["boundary"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"problem file: missing field {exc}") from exc
    try:
        edge_tuples = tuple((e["u"], e["v"], e["c"]) for e in edges)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"problem file: edge record lacks {exc}") from exc
    return PLaplacianProblem(tuple(str(v) for v in vertices), edge_tuples,
                             float(p), dict(boundary), dict(data.get("current", {})))


def load_problem(path) -> PLaplacianProblem:
    with open(path) as fh:
        return problem_from_dict(json.load(fh))


def save_problem(problem: PLaplacianProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_dict(problem), fh, indent=2)
        fh.write("\n")


def path_graph_problem(k: int = 3, p: float = 2.0, w0: float = 0.0,
                       w1: float = 1.0, current: dict | None = None,
                       conductance: float = 1.0) -> PLaplacianProblem:
    """Path 1-2-...-k with unit conductances and clamped endpoints."""
    names = tuple(str(i) for i in range(1, k + 1))
    edges = tuple((names[i], names[i + 1], conductance) for i in range(k - 1))
    return PLaplacianProblem(names, edges, p, {names[0]: w0, names[-1]: w1},
                             dict(current or {}))
