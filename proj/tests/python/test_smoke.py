import numpy as np
import pytest

import roadtopics as rt


@pytest.fixture(scope="module")
def trips():
    cfg = rt.WorldConfig()
    cfg.grid_w = cfg.grid_h = 4
    cfg.n_sources = 2
    cfg.n_destinations = 3
    return rt.synthetic_trips(cfg, 30, 11)


def test_hmm_fit_and_predict(trips):
    model, objective = rt.fit_hmm(trips)
    assert len(objective) >= 1
    assert all(b >= a - 1e-9 * abs(a) for a, b in zip(objective, objective[1:]))
    path, ll = rt.viterbi(model, trips[0])
    assert len(path) == len(trips[0])
    assert np.isfinite(ll)
    dests, a, residual = rt.absorption(model)
    assert a.shape == (model.num_states, len(dests))
    np.testing.assert_allclose(a.sum(axis=1) + residual, 1.0, atol=1e-8)


def test_augmented_model_is_larger(trips):
    plain, _ = rt.fit_hmm(trips)
    aug, _ = rt.fit_hmm(trips, augmented=True)
    assert aug.augmented and not plain.augmented
    assert aug.num_states >= plain.num_states


def test_dp_means_separates_clusters():
    x = np.array([[0.0], [0.1], [10.0], [10.2]])
    centers, assignment = rt.dp_means(x, 1.0)
    assert centers.shape[0] == 2
    assert assignment[0] == assignment[1] != assignment[2] == assignment[3]


def test_hdp_runs_and_is_deterministic():
    docs = [[0, 1, 0, 1], [2, 3, 2], [0, 0, 1], [3, 3, 2, 2]]
    a = rt.run_hdp(docs, 4, iterations=20, seed=3)
    b = rt.run_hdp(docs, 4, iterations=20, seed=3)
    assert a == b
    assert len(a[2]) == 20


def test_missing_artifact_is_reported(tmp_path):
    with pytest.raises(rt.MissingArtifactError, match="train-hmm"):
        rt.run_stage("predict-route", out=str(tmp_path))
