import json

import numpy as np
import pytest

from riskderiv import ScenarioError, ScenarioMatrix, load_scenarios, portfolio_loss, save_scenarios


def test_csv_uniform_default(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2\n3,4\n")
    S = load_scenarios(f)
    assert S.n == 2 and S.d == 2
    np.testing.assert_array_equal(S.probs, [0.5, 0.5])
    np.testing.assert_array_equal(S.losses, [[1, 2], [3, 4]])


def test_csv_prob_column_by_flag(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2,0.25\n3,4,0.75\n")
    S = load_scenarios(f, prob_column=True)
    np.testing.assert_array_equal(S.probs, [0.25, 0.75])
    np.testing.assert_array_equal(S.losses, [[1, 2], [3, 4]])


def test_csv_prob_column_by_header(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,b,prob\n1,2,0.25\n3,4,0.75\n")
    S = load_scenarios(f)
    assert S.d == 2
    np.testing.assert_array_equal(S.probs, [0.25, 0.75])


def test_csv_header_without_prob(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("a,b,c\n1,2,0.25\n3,4,0.75\n")
    assert load_scenarios(f).d == 3


def test_probability_sum_error(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2,0.25\n3,4,0.65\n")
    with pytest.raises(ScenarioError, match="probability sum"):
        load_scenarios(f, prob_column=True)


def test_small_probability_drift_is_renormalised():
    S = ScenarioMatrix([[1.0], [2.0]], [0.5, 0.5 + 5e-10])
    assert abs(S.probs.sum() - 1.0) <= 1e-12


@pytest.mark.parametrize(
    "losses, probs, match",
    [
        ([[1.0, np.nan]], None, "NaN|finite|infinity"),
        ([[1.0], [2.0]], [-0.5, 1.5], "negative"),
        ([[1.0], [2.0]], [1.0], "length|probs"),
    ],
)
def test_invalid_matrices(losses, probs, match):
    with pytest.raises(ValueError, match=match):
        ScenarioMatrix(losses, probs)


def test_parse_failures(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("1,2\n3,x\n")
    with pytest.raises(ScenarioError):
        load_scenarios(f)
    f.write_text("1,2\n3\n")
    with pytest.raises(ScenarioError):
        load_scenarios(f)
    g = tmp_path / "a.json"
    g.write_text("{not json")
    with pytest.raises(ScenarioError, match="JSON"):
        load_scenarios(g)
    g.write_text(json.dumps({"losses": [[1, 2]], "weights": [1]}))
    with pytest.raises(ScenarioError, match="unexpected"):
        load_scenarios(g)
    with pytest.raises(ScenarioError):
        load_scenarios(tmp_path / "missing.csv")


def test_json_load(tmp_path):
    g = tmp_path / "a.json"
    g.write_text(json.dumps({"losses": [[1, 2], [3, 4]], "probs": [0.25, 0.75]}))
    S = load_scenarios(g)
    np.testing.assert_array_equal(S.probs, [0.25, 0.75])


@pytest.mark.parametrize("suffix", ["csv", "json"])
def test_round_trip(tmp_path, rng, suffix):
    S = ScenarioMatrix(rng.standard_normal((17, 3)) * 1e3, rng.dirichlet(np.ones(17)))
    f = tmp_path / f"s.{suffix}"
    save_scenarios(S, f)
    T = load_scenarios(f)
    save_scenarios(T, f)
    U = load_scenarios(f)
    np.testing.assert_allclose(U.losses, S.losses, rtol=0, atol=1e-15 * np.abs(S.losses).max())
    np.testing.assert_allclose(U.probs, S.probs, rtol=0, atol=1e-15)


def test_portfolio_loss_examples():
    S = ScenarioMatrix([[1, 2], [3, 1]])
    np.testing.assert_array_equal(portfolio_loss(S, [1, 1]), [3, 4])
    np.testing.assert_array_equal(portfolio_loss(S, [2, 0]), [2, 6])
    with pytest.raises(ScenarioError, match="zero"):
        portfolio_loss(S, [0, 0])
    with pytest.raises(ScenarioError, match="length"):
        portfolio_loss(S, [1, 1, 1])


def test_immutable(rng):
    S = ScenarioMatrix(rng.standard_normal((5, 2)))
    with pytest.raises(ValueError):
        S.losses[0, 0] = 1.0
    with pytest.raises(AttributeError):
        S.n = 3


def test_one_dimensional_input_is_a_column():
    S = ScenarioMatrix([1.0, 2.0, 3.0])
    assert S.d == 1 and S.n == 3
