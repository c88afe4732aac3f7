import numpy as np
import pytest

from zshash.dataset import generate_synthetic
from zshash.errors import ConfigError
from zshash.evaluation import format_rows
from zshash.pipeline import (
    ExperimentConfig, TrainedModel, config_to_text, default_config_path, extend, hash_seen_instances,
    hash_unseen_instances, load_config, load_split, parse_config, run_experiment, train,
)
from zshash.zsl import ZslHyperparams


@pytest.fixture(scope="module")
def split():
    return generate_synthetic(8, 2, 50, 32, 16, 0.1, seed=1)


def _cfg(**kw):
    return ExperimentConfig(zsl=ZslHyperparams.preset("sun"), **kw)


def test_train_shapes(split):
    model = train(split.seen, _cfg())
    assert model.anchors.n_anchors == 8
    assert model.embedding.M.shape == (8, 8)
    assert model.zsl.V.shape == (32, 16)


def test_train_bit_bound_checked_first(split, monkeypatch):
    from zshash import pipeline
    monkeypatch.setattr(pipeline, "penalized_kmeans", lambda *a, **k: pytest.fail("compute started"))
    with pytest.raises(ConfigError, match="b <= n_s"):
        train(split.seen, _cfg(code_length=9))


def test_model_round_trip_and_determinism(split, tmp_path):
    a = train(split.seen, _cfg(code_length=4))
    b = train(split.seen, _cfg(code_length=4))
    a.save(tmp_path / "a")
    b.save(tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
    back = TrainedModel.load(tmp_path / "a")
    assert hash_seen_instances(back, split.seen.X) == hash_seen_instances(a, split.seen.X)
    ext_a, ext_b = extend(a, split.unseen.S), extend(back, split.unseen.S)
    assert hash_unseen_instances(a, ext_a, split.unseen.S, split.unseen.X) == \
        hash_unseen_instances(back, ext_b, split.unseen.S, split.unseen.X)


def test_run_rows(split):
    rows = run_experiment(split, _cfg(n_trials=3))
    assert [r["trial"] for r in rows] == [0, 1, 2, "mean"]
    for key in ("precision", "recall", "f1", "map", "accuracy_train", "accuracy_test"):
        assert rows[-1][key] == pytest.approx(np.mean([r[key] for r in rows[:3]]))


def test_single_trial_mean_equals_trial(split):
    rows = run_experiment(split, _cfg())
    assert len(rows) == 2
    assert {k: v for k, v in rows[1].items() if k != "trial"} == {k: v for k, v in rows[0].items() if k != "trial"}


def test_sweep_groups(split):
    rows = run_experiment(split, _cfg(code_length=2, sweep_code_lengths=(2, 4, 6)))
    assert [r["code_length"] for r in rows] == [2, 2, 4, 4, 6, 6]


def test_redraw_mode_recorded(split):
    rows = run_experiment(split, _cfg(n_trials=2, split_mode="redraw", code_length=4))
    assert {r["split_mode"] for r in rows} == {"redraw"}


def test_run_deterministic(split):
    cfg = _cfg(n_trials=2)
    assert format_rows(run_experiment(split, cfg)) == format_rows(run_experiment(split, cfg))


def test_config_round_trip():
    cfg = load_config(default_config_path())
    again = parse_config(config_to_text(cfg))
    assert again == cfg


def test_shipped_config_values():
    cfg = load_config(default_config_path())
    assert cfg.kmeans.beta == 0.9
    assert cfg.hash.s == 5 and cfg.hash.omega == 5.0
    assert cfg.eval.radius == 2 and cfg.eval.query_fraction == 0.25
    assert (cfg.zsl.gamma, cfg.zsl.lam) == (0.01, 1.0)
    assert load_split(cfg).n_seen == 8


@pytest.mark.parametrize("text", ["[bogus]\nx = 1\n", "[hashing]\nomg = 5\n", "[hashing]\ns = five\n",
                                  "[experiment]\nsplit_mode = sometimes\n", "[eval]\nretrieval_set = some\n"])
def test_bad_config(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_data_section(tmp_path, split):
    from zshash.dataset import write_dataset
    write_dataset(split.merged(), tmp_path)
    text = "[data]\nfeatures = features.csv\nlabels = labels.csv\nsignatures = signatures.csv\nunseen_classes = 8,9\n"
    (tmp_path / "e.cfg").write_text(text)
    loaded = load_split(load_config(tmp_path / "e.cfg"))
    np.testing.assert_array_equal(loaded.unseen.X, split.unseen.X)
    np.testing.assert_array_equal(loaded.seen.S, split.seen.S)
