import json

import numpy as np
import pytest

from ergogames import (DescentNotConverged, PLaplacianProblem,
                       apply_plaplacian, dirichlet_solve, energy, load_problem,
                       path_graph_problem, problem_from_dict, problem_to_dict,
                       save_problem, sublevel_radius_probe)
from ergogames.plaplace import _descent, _interior_residual, _laplacian_solve

from oracles import central_diff_gradient


def random_connected_problem(rng, max_vertices=12, p=2.0):
    n = int(rng.integers(4, max_vertices + 1))
    names = tuple(f"v{i}" for i in range(n))
    edges = [(names[i], names[i + 1], float(rng.uniform(0.5, 2.0)))
             for i in range(n - 1)]  # spanning path keeps it connected
    extra = int(rng.integers(0, n))
    for _ in range(extra):
        i, j = rng.choice(n, size=2, replace=False)
        edges.append((names[i], names[j], float(rng.uniform(0.5, 2.0))))
    # drop accidental duplicates of the same unordered pair
    seen = set()
    dedup = []
    for a, b, c in edges:
        key = frozenset((a, b))
        if key not in seen:
            seen.add(key)
            dedup.append((a, b, c))
    nb = int(rng.integers(1, 3))
    bnd_idx = rng.choice(n, size=nb, replace=False)
    boundary = {names[i]: float(rng.uniform(-1, 1)) for i in bnd_idx}
    interior = [v for v in names if v not in boundary]
    current = {v: float(rng.uniform(-1, 1)) for v in interior}
    return PLaplacianProblem(names, tuple(dedup), p, boundary, current)


class TestApplyPLaplacian:
    def test_path_p2(self):
        prob = path_graph_problem(3, p=2.0)
        out = apply_plaplacian(prob, np.array([0.0, 0.5, 1.0]))
        np.testing.assert_allclose(out, [-0.5, 0.0, 0.5], atol=1e-15)

    def test_constant_vector_zero(self):
        prob = path_graph_problem(4, p=3.0)
        np.testing.assert_array_equal(apply_plaplacian(prob, np.full(4, 2.5)),
                                      np.zeros(4))

    def test_single_edge_p3(self):
        prob = PLaplacianProblem(("a", "b"), (("a", "b", 1.0),), 3.0,
                                 {"a": 0.0}, {})
        out = apply_plaplacian(prob, np.array([0.0, 1.0]))
        np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-15)

    def test_dimension_mismatch(self):
        prob = path_graph_problem(3)
        with pytest.raises(ValueError):
            apply_plaplacian(prob, np.zeros(2))


class TestEnergy:
    def test_single_edge_p2(self):
        prob = PLaplacianProblem(("a", "b"), (("a", "b", 1.0),), 2.0,
                                 {"a": 0.0}, {})
        assert energy(prob, np.array([0.0, 1.0])) == pytest.approx(0.5)

    def test_constant_zero(self):
        prob = path_graph_problem(4, p=2.5, w0=3.0, w1=3.0)
        assert energy(prob, np.full(4, 3.0)) == 0.0

    def test_boundary_mismatch_rejected(self):
        prob = path_graph_problem(3)
        with pytest.raises(ValueError, match="boundary"):
            energy(prob, np.array([0.1, 0.5, 1.0]))

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
    def test_gradient_matches_finite_differences(self, p):
        rng = np.random.default_rng(17)
        for _ in range(5):
            prob = random_connected_problem(rng, p=p)
            _, _, _, _, _, iidx, _ = prob._arrays
            x = rng.uniform(-2.0, 2.0, len(iidx))

            def f(xi):
                return energy(prob, prob.compose(xi))

            analytic = _interior_residual(prob, x)
            fd = central_diff_gradient(f, x, h=1e-6)
            scale = max(1.0, float(np.max(np.abs(analytic))))
            assert np.max(np.abs(analytic - fd)) / scale <= 1e-6


class TestDirichletSolve:
    def test_path_p2_midpoint(self):
        prob = path_graph_problem(3, p=2.0)
        v = dirichlet_solve(prob)
        assert abs(v[1] - 0.5) <= 1e-10
        np.testing.assert_array_equal(v[[0, 2]], [0.0, 1.0])

    def test_path_p4_symmetry(self):
        prob = path_graph_problem(3, p=4.0)
        v = dirichlet_solve(prob, tol=1e-8)
        assert abs(v[1] - 0.5) <= 1e-8

    def test_current_sign_convention(self):
        # interior equation is L_p(v) = -g: unit positive current at the
        # midpoint pushes the potential down (2 v2 - 1 = -1), and the
        # opposite current gives v2 = 1
        prob = path_graph_problem(3, p=2.0, current={"2": 1.0})
        assert abs(dirichlet_solve(prob)[1] - 0.0) <= 1e-12
        prob = path_graph_problem(3, p=2.0, current={"2": -1.0})
        assert abs(dirichlet_solve(prob)[1] - 1.0) <= 1e-12

    def test_energy_strictly_decreases(self):
        rng = np.random.default_rng(23)
        prob = random_connected_problem(rng, p=3.0)
        _, info = dirichlet_solve(prob, tol=1e-8, full_output=True)
        energies = info["energies"]
        diffs = np.diff(energies)
        # strict decrease up to the resolution of the energy evaluation
        slack = 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(energies[:-1]))
        assert np.all(diffs <= slack)
        assert np.all(diffs[np.abs(diffs) > slack] < 0)
        assert np.count_nonzero(diffs < 0) >= 0.9 * diffs.size

    def test_descent_matches_direct_p2(self):
        # energy-difference roundoff floors the descent near |grad| ~ 5e-8,
        # so the residual target sits just above it
        rng = np.random.default_rng(29)
        prob = random_connected_problem(rng, p=2.0)
        x2 = _laplacian_solve(prob)
        x0 = x2 + rng.uniform(-1, 1, x2.size)
        x, res, _, _ = _descent(prob, x0, tol=5e-8, max_iter=100_000)
        assert np.max(np.abs(x - x2)) <= 1e-6

    def test_maximum_principle(self):
        rng = np.random.default_rng(31)
        for p in (1.5, 2.0, 3.0):
            prob_raw = random_connected_problem(rng, p=p)
            prob = PLaplacianProblem(prob_raw.vertices, prob_raw.edges, p,
                                     prob_raw.boundary, {})
            v = dirichlet_solve(prob, tol=1e-9)
            lo, hi = min(prob.boundary.values()), max(prob.boundary.values())
            assert np.all(v >= lo - 1e-7) and np.all(v <= hi + 1e-7)

    def test_surjectivity_random_instances(self):
        """Every right-hand side is attained: 50 random (graph, g, p) solve
        to the requested residual."""
        rng = np.random.default_rng(37)
        ps = [1.5, 2.0, 3.0]
        for k in range(50):
            prob = random_connected_problem(rng, p=ps[k % 3])
            v = dirichlet_solve(prob, tol=1e-8)
            res = np.max(np.abs(_interior_residual(
                prob, v[prob._arrays[5]])))
            assert res <= 1e-8

    def test_iteration_cap_raises(self):
        prob = path_graph_problem(5, p=3.0, current={"3": 2.0})
        with pytest.raises(DescentNotConverged) as err:
            dirichlet_solve(prob, tol=1e-14, max_iter=3)
        assert err.value.v.shape == (5,)
        assert err.value.residual > 0


class TestAccretivityAndSublevels:
    def test_euclidean_monotonicity(self):
        """<A(x) - A(y), x - y> >= 0 on 1000 random pairs (the operator is a
        convex-energy gradient)."""
        rng = np.random.default_rng(41)
        prob = random_connected_problem(rng, p=3.0)
        m = len(prob._arrays[5])
        for _ in range(1000):
            x = rng.uniform(-3, 3, m)
            y = rng.uniform(-3, 3, m)
            ax = _interior_residual(prob, x) - prob._arrays[6]
            ay = _interior_residual(prob, y) - prob._arrays[6]
            assert (ax - ay) @ (x - y) >= -1e-9

    def test_sublevel_radius_saturates(self):
        """Points with small operator norm stay in a bounded region: the
        best radius found must not grow materially with a 10x budget."""
        prob = path_graph_problem(5, p=2.0, current={"3": 0.5})
        r1 = sublevel_radius_probe(prob, alpha=2.0, budget=1000, seed=0)
        r10 = sublevel_radius_probe(prob, alpha=2.0, budget=10_000, seed=0)
        assert r1 > 0
        assert r10 <= 1.2 * r1 + 0.5


class TestProblemValidation:
    def test_disconnected_rejected(self):
        with pytest.raises(ValueError, match="connected"):
            PLaplacianProblem(("a", "b", "c", "d"),
                              (("a", "b", 1.0), ("c", "d", 1.0)),
                              2.0, {"a": 0.0}, {})

    def test_bad_exponent(self):
        with pytest.raises(ValueError, match="p must exceed 1"):
            path_graph_problem(3, p=1.0)

    def test_nonpositive_conductance(self):
        with pytest.raises(ValueError, match="conductance"):
            PLaplacianProblem(("a", "b"), (("a", "b", 0.0),), 2.0, {"a": 0.0}, {})

    def test_boundary_required_and_proper(self):
        with pytest.raises(ValueError, match="nonempty"):
            PLaplacianProblem(("a", "b"), (("a", "b", 1.0),), 2.0, {}, {})
        with pytest.raises(ValueError, match="every vertex"):
            PLaplacianProblem(("a", "b"), (("a", "b", 1.0),), 2.0,
                              {"a": 0.0, "b": 1.0}, {})

    def test_current_on_boundary_rejected(self):
        with pytest.raises(ValueError, match="boundary vertex"):
            path_graph_problem(3, current={"1": 1.0})

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            PLaplacianProblem(("a", "b"), (("a", "a", 1.0), ("a", "b", 1.0)),
                              2.0, {"a": 0.0}, {})


class TestProblemFiles:
    def test_round_trip(self, tmp_path):
        prob = path_graph_problem(4, p=2.5, current={"2": 0.3, "3": -0.1})
        path = tmp_path / "problem.json"
        save_problem(prob, path)
        loaded = load_problem(path)
        np.testing.assert_allclose(dirichlet_solve(loaded, tol=1e-9),
                                   dirichlet_solve(prob, tol=1e-9), atol=1e-9)

    def test_schema(self):
        data = problem_to_dict(path_graph_problem(3, p=2.0))
        assert set(data.keys()) == {"vertices", "edges", "p", "boundary", "current"}
        assert set(data["edges"][0].keys()) == {"u", "v", "c"}

    def test_missing_field_named(self):
        with pytest.raises(ValueError, match="missing field"):
            problem_from_dict({"vertices": ["a", "b"]})
