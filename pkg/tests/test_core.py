import json
import math

import numpy as np
import pytest

from ergogames import (GameSpec, MaxOption, MinAction, QuotientPoint,
                       builtin_operator, canonical_rep, game_from_dict,
                       game_to_dict, hilbert_seminorm, identity_operator,
                       load_game, markov_chain_operator, operator_axiom_gaps,
                       operator_from_game, polyhedral_example_game, save_game)

from conftest import make_absorbing_chain, random_small_game
from oracles import brute_force_game_eval, grid_log_action


class TestHilbertSeminorm:
    def test_examples(self):
        assert hilbert_seminorm([1, 2, 3]) == 2
        assert hilbert_seminorm([7.5, 7.5, 7.5]) == 0
        assert hilbert_seminorm([5, -1]) == 6

    def test_zero_iff_constant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.uniform(-10, 10, 4)
            assert (hilbert_seminorm(x) == 0) == bool(np.all(x == x[0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            hilbert_seminorm([])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            hilbert_seminorm([1.0, np.nan])


class TestCanonicalRep:
    def test_examples(self):
        assert np.array_equal(canonical_rep([3, 5, 4]).vector, [0, 2, 1])
        assert np.array_equal(canonical_rep([7, 7]).vector, [0, 0])

    def test_min_is_exactly_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            q = canonical_rep(rng.uniform(-100, 100, 5))
            assert q.vector.min() == 0.0

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q = canonical_rep(rng.uniform(-100, 100, 4))
            assert np.array_equal(canonical_rep(q.vector).vector, q.vector)

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(-10, 10, 4)
            c = rng.uniform(-100, 100)
            a = canonical_rep(x).vector
            b = canonical_rep(x + c).vector
            assert np.max(np.abs(a - b)) <= 1e-12 * (1 + abs(c))

    def test_preserves_seminorm(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.uniform(-10, 10, 4)
            assert hilbert_seminorm(canonical_rep(x).vector) == hilbert_seminorm(x)

    def test_quotient_point_rejects_bad_input(self):
        with pytest.raises(ValueError):
            QuotientPoint(np.array([np.inf, 0.0]))


class TestLogActionOperator:
    def test_zero_fixed_point(self, example1):
        np.testing.assert_allclose(example1.evaluate(np.zeros(3)),
                                   grid_log_action([0, 0, 0]), atol=1e-4)
        np.testing.assert_array_equal(example1.evaluate(np.zeros(3)), np.zeros(3))

    def test_printed_point(self, example1):
        got = example1.evaluate(np.array([0.0, 5.0, 0.0]))
        oracle = grid_log_action([0.0, 5.0, 0.0])
        np.testing.assert_allclose(got, oracle, atol=1e-4)
        expected = np.array([4 - math.log(5), 1 + math.log(5), 0.0])
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_grid_oracle_100_points(self, example1):
        rng = np.random.default_rng(20260401)
        X = rng.uniform(-10, 10, (100, 3))
        got = example1.evaluate(X)
        for x, row in zip(X, got):
            np.testing.assert_allclose(row, grid_log_action(x), atol=1e-4)

    def test_scalar_batch_agree(self, example1):
        rng = np.random.default_rng(5)
        X = rng.uniform(-20, 20, (40, 3))
        batch = example1.evaluate(X)
        single = np.stack([example1.evaluate(x) for x in X])
        np.testing.assert_array_equal(batch, single)


class TestPolyhedralOperator:
    def test_printed_point(self, example2):
        np.testing.assert_array_equal(example2.evaluate(np.zeros(3)), [0, 1, 3])

    def test_shifted_point(self, example2):
        np.testing.assert_allclose(example2.evaluate(np.ones(3)), [1, 2, 4],
                                   atol=1e-12)

    def test_is_a_game(self, example2):
        assert example2.game is not None
        assert example2.provenance == "builtin-example"
        got = example2.evaluate(np.array([0.3, -1.2, 2.0]))
        oracle = brute_force_game_eval(example2.game, [0.3, -1.2, 2.0])
        np.testing.assert_array_equal(got, oracle)


class TestBuiltinOperators:
    def test_identity(self):
        op = builtin_operator("identity", n=2)
        np.testing.assert_array_equal(op.evaluate(np.array([1.0, 0.0])), [1, 0])

    def test_markov_chain_single_state(self):
        op = builtin_operator("markov-chain", P=[[1.0]], r=[3.0])
        np.testing.assert_array_equal(op.evaluate(np.array([2.0])), [5.0])

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown builtin"):
            builtin_operator("example3")

    def test_identity_needs_n(self):
        with pytest.raises(ValueError):
            builtin_operator("identity")

    def test_chain_rejects_nonstochastic_rows(self):
        with pytest.raises(ValueError, match="sums to"):
            builtin_operator("markov-chain", P=[[0.5, 0.4], [0.5, 0.5]], r=[0, 0])

    def test_dimension_mismatch(self, example2):
        with pytest.raises(ValueError, match="length 3"):
            example2.evaluate(np.zeros(2))

    def test_nonfinite_input(self, example2):
        with pytest.raises(ValueError, match="non-finite"):
            example2.evaluate(np.array([0.0, np.inf, 0.0]))


class TestOperatorAxioms:
    """Monotonicity, additive homogeneity, nonexpansiveness (sup and Hilbert)
    on 1000 samples per built-in operator, tolerance 1e-9."""

    @pytest.mark.parametrize("name", ["example1", "example2", "identity", "chain"])
    def test_axioms(self, name):
        if name == "identity":
            op = identity_operator(3)
        elif name == "chain":
            op = make_absorbing_chain()
        else:
            op = builtin_operator(name)
        gaps = operator_axiom_gaps(op, samples=1000, seed=99)
        assert gaps.monotonicity <= 1e-9
        assert gaps.additive_homogeneity <= 1e-9
        assert gaps.sup_nonexpansive <= 1e-9
        assert gaps.hilbert_nonexpansive <= 1e-9


class TestGameSpec:
    def test_brute_force_equality_random_games(self):
        rng = np.random.default_rng(77)
        for _ in range(25):
            game = random_small_game(rng)
            op = operator_from_game(game)
            for _ in range(8):
                x = rng.uniform(-10, 10, game.n)
                np.testing.assert_array_equal(op.evaluate(x),
                                              brute_force_game_eval(game, x))

    @staticmethod
    def _two_state_game(first_row):
        s1 = (MinAction((MaxOption(0.0, first_row),)),)
        s2 = (MinAction((MaxOption(0.0, np.array([0.0, 1.0])),)),)
        return GameSpec(2, (s1, s2))

    def test_row_sum_hard_error(self):
        with pytest.raises(ValueError, match="renormalization is refused"):
            self._two_state_game(np.array([0.5, 0.5 - 1e-9]))

    def test_negative_probability(self):
        with pytest.raises(ValueError, match="negative"):
            self._two_state_game(np.array([-0.1, 1.1]))

    def test_nonfinite_payment(self):
        with pytest.raises(ValueError, match="payment"):
            GameSpec(1, ((MinAction((MaxOption(np.inf, np.array([1.0])),)),),))

    def test_empty_action_list(self):
        with pytest.raises(ValueError, match="MIN action"):
            GameSpec(1, ((),))

    def test_empty_option_list(self):
        with pytest.raises(ValueError, match="MAX option"):
            GameSpec(1, ((MinAction(()),),))

    def test_immutable_rows(self, example2):
        opt = example2.game.states[0][0].options[0]
        with pytest.raises(ValueError):
            opt.row[0] = 0.7


class TestGameFiles:
    def test_round_trip(self, tmp_path):
        game = polyhedral_example_game()
        path = tmp_path / "game.json"
        save_game(game, path)
        loaded = load_game(path)
        rng = np.random.default_rng(6)
        for _ in range(5):
            x = rng.uniform(-5, 5, 3)
            np.testing.assert_array_equal(operator_from_game(game).evaluate(x),
                                          operator_from_game(loaded).evaluate(x))

    def test_schema_fields(self):
        data = game_to_dict(polyhedral_example_game())
        assert data["n"] == 3
        state = data["states"][1]
        action = state["min_actions"][1]
        assert set(action.keys()) == {"label", "options"}
        opt = action["options"][1]
        assert set(opt.keys()) == {"label", "payment", "row"}
        assert opt["payment"] == -2.0

    def test_missing_field_named(self):
        with pytest.raises(ValueError, match="min_actions"):
            game_from_dict({"n": 1, "states": [{}]})

    def test_state_count_mismatch(self):
        with pytest.raises(ValueError, match="states listed"):
            game_from_dict({"n": 2, "states": []})

    def test_bad_row_in_file_named(self, tmp_path):
        data = game_to_dict(polyhedral_example_game())
        data["states"][0]["min_actions"][0]["options"][0]["row"] = [0.5, 0.5, 0.5]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ValueError, match="state 0 action 0 option 0"):
            load_game(path)
