import csv
import dataclasses
import json

import numpy as np
import pytest
import yaml

from glds.experiment import (ClassifierConfig, ConfigError, EvaluationReport, ExperimentConfig,
                             ExperimentError, FeatureCache, ProtocolConfig, emit_report,
                             load_config, prepare, report_digest, run_experiment, save_config,
                             sweep_dimension)


def test_config_roundtrip(tmp_path):
    config = ExperimentConfig(manifest="m.json", representation="3SM",
                              classifier=ClassifierConfig(kind="nn"),
                              protocol=ProtocolConfig(name="loocv"))
    path = tmp_path / "c.yaml"
    save_config(config, path)
    assert load_config(path, env={}) == config


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"manifest": "x", "colour": "blue"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"dimension": 3}})


@pytest.mark.parametrize("change", [
    {"representation": "5D"},
    {"model": {"d": 0}},
    {"model": {"method": "hmm"}},
    {"classifier": {"kind": "svm"}},
    {"protocol": {"name": "subset_AS"}},
    {"threads": 0},
])
def test_config_validation(change):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"manifest": "x", **change}).validate()


def test_invalid_representation_fails_before_io(tmp_path):
    config = ExperimentConfig(manifest=str(tmp_path / "missing.json"), representation="5D")
    with pytest.raises(ConfigError):
        run_experiment(config)


def test_missing_manifest_is_stage_error(tmp_path):
    config = ExperimentConfig(manifest=str(tmp_path / "missing.json"))
    with pytest.raises(ExperimentError) as info:
        run_experiment(config)
    assert info.value.stage == "load"


def test_env_overrides(tmp_path):
    path = tmp_path / "c.yaml"
    save_config(ExperimentConfig(manifest="m.json"), path)
    config = load_config(path, env={"GLDS_OUTPUT_DIR": "/tmp/out", "GLDS_THREADS": "3"})
    assert config.output_dir == "/tmp/out"
    assert config.threads == 3


def test_synthetic_perfect_accuracy(synthetic_config):
    report = run_experiment(synthetic_config)
    assert report.accuracy == 1.0
    assert report.confusion == [[4, 0], [0, 4]]
    assert report.classes == [1, 2]
    assert report.per_class_accuracy == {"1": 1.0, "2": 1.0}
    assert report.load_errors == []


def test_memorization_when_train_equals_test(synthetic_config):
    cache = FeatureCache()
    manifest, records, subspaces, _, _ = prepare(synthetic_config, cache)
    from glds.estimators import GrassmannSRC
    x = np.stack([subspaces[r.id] for r in records])
    y = [r.action for r in records]
    assert list(GrassmannSRC(lam=1e-4).fit(x, y).predict(x)) == y


def test_run_is_deterministic(synthetic_config):
    a = run_experiment(synthetic_config).to_dict()
    b = run_experiment(synthetic_config).to_dict()
    assert a["digest"] == b["digest"]
    assert report_digest(a) == a["digest"]


def test_cache_skips_recomputation(synthetic_config):
    cache = FeatureCache()
    run_experiment(synthetic_config, cache=cache)
    nn = dataclasses.replace(synthetic_config, classifier=ClassifierConfig(kind="nn"))
    report = run_experiment(nn, cache=cache)
    assert dict(cache.misses) == {"features": 1, "subspaces": 1}
    assert report.accuracy == 1.0
    run_experiment(dataclasses.replace(synthetic_config,
                                       model=dataclasses.replace(synthetic_config.model, d=3)),
                   cache=cache)
    assert dict(cache.misses) == {"features": 1, "subspaces": 2}


def test_disk_cache(synthetic_config, tmp_path):
    synthetic_config.cache_dir = str(tmp_path / "cache")
    first = run_experiment(synthetic_config)
    cache = FeatureCache(synthetic_config.cache_dir)
    second = run_experiment(synthetic_config, cache=cache)
    assert cache.misses == {}
    assert first.to_dict()["digest"] == second.to_dict()["digest"]


def test_sweep_rows_and_consistency(synthetic_config, tmp_path):
    csv_path = tmp_path / "sweep.csv"
    rows = sweep_dimension(synthetic_config, [2, 4, 500], csv_path=csv_path)
    assert [r["d"] for r in rows] == [2, 4, 500]
    assert rows[2]["status"].startswith("error")
    single = run_experiment(synthetic_config)
    assert rows[1]["accuracy"] == single.accuracy
    with open(csv_path) as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_emit_report_roundtrip(synthetic_config, tmp_path):
    report = run_experiment(synthetic_config)
    paths = emit_report(report, tmp_path / "out")
    payload = json.loads(paths["report.json"].read_text())
    back = EvaluationReport.from_dict(payload)
    assert back.to_dict()["digest"] == payload["digest"]
    with open(paths["confusion.csv"]) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == len(report.classes) + 1
    assert all(len(r) == len(report.classes) + 1 for r in rows)
    assert yaml.safe_load(paths["config.yaml"].read_text()) == report.config
    split = json.loads(paths["split.json"].read_text())
    assert list(split) == ["protocol", "seed", "subset", "folds"]


def test_report_invariants():
    base = dict(classes=[1, 2], confusion=[[2, 0], [1, 1]], fold_accuracy=[0.75],
                accuracy=0.75, per_class_accuracy={}, class_counts={"1": 2, "2": 2},
                n_folds=1, dataset_hash="h", config={})
    EvaluationReport(**base)
    with pytest.raises(ValueError):
        EvaluationReport(**{**base, "accuracy": 0.5})
    with pytest.raises(ValueError):
        EvaluationReport(**{**base, "class_counts": {"1": 3, "2": 1}})


@pytest.mark.parametrize("representation", ["2JP", "2RB", "3JP", "3SM"])
def test_other_representations_run(synthetic_config, representation):
    config = dataclasses.replace(synthetic_config, representation=representation)
    report = run_experiment(config)
    assert report.n_folds == 1
    assert sum(report.class_counts.values()) == 8


def test_lds_method_runs(synthetic_config):
    config = dataclasses.replace(
        synthetic_config, representation="2RB",
        model=dataclasses.replace(synthetic_config.model, method="lds"))
    assert run_experiment(config).accuracy == 1.0
