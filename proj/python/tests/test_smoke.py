import math

import numpy as np
import pytest

import omgrl


def test_rp_reward_matches_sigmoid_form():
    x = np.linspace(0.0, 200.0, 101)
    expected = 2 / (1 + np.exp(-(x - 60))) - 2 / (1 + np.exp(-(x - 100))) - 1
    np.testing.assert_allclose(omgrl.rp_reward(x), expected, atol=1e-12)
    assert omgrl.rp_reward(80.0) == pytest.approx(2 * math.tanh(10) - 1, abs=1e-12)


def test_spearman_ties():
    assert omgrl.spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9486832980505138, abs=1e-12)


def test_generate_dataset_shapes_and_rewards():
    d = omgrl.generate_dataset(5, seed=3)
    n = d["states"].shape[0]
    assert d["states"].shape == (n, 16)
    assert d["next_states"].shape == (n, 16)
    assert set(np.unique(d["actions"])) <= set(range(6))
    np.testing.assert_allclose(d["rewards"], omgrl.rp_reward(d["next_aptt"]), atol=1e-15)
    assert len(omgrl.feature_names()) == 16


def test_generate_dataset_is_seeded():
    a = omgrl.generate_dataset(3, seed=9)
    b = omgrl.generate_dataset(3, seed=9)
    np.testing.assert_array_equal(a["states"], b["states"])


def test_cli_round_trip(tmp_path):
    out = str(tmp_path / "run")
    code, _, err = omgrl.run(["gen-data", "--out", out, "--set", "synth.n_patients=4"])
    assert code == 0, err
    assert (tmp_path / "run" / "data.csv").exists()
    code, _, _ = omgrl.run(["no-such-verb"])
    assert code == 1


def test_argument_errors_raise():
    with pytest.raises(ValueError):
        omgrl.generate_dataset(0)
