import json

import numpy as np
import pytest

from rmtlab.ensembles import EnsembleConfig
from rmtlab.errors import ConfigurationError
from rmtlab.harness.acceptance import CRITERIA, CriterionResult, run_criterion
from rmtlab.harness.config import KINDS, ExperimentSpec
from rmtlab.harness.parallel import parallel_map
from rmtlab.harness.runner import ExperimentError, run_experiment

GOE = EnsembleConfig.gaussian(1, 40, seed=3)

SMALL = {
    "local-law": ({"E": 0.0, "eta": [0.1, 0.3]}, 4),
    "delocalization": ({}, 3),
    "repulsion": ({"epsilon": [0.3, 0.6], "n": 1, "delta": 0.5}, 6),
    "gaps": ({}, 5),
    "correlation": ({"k": 2, "delta": 0.3, "bins": [0, 0.5, 1, 2]}, 5),
    "dbm-invariance": ({"t": 0.01}, 3),
    "ou-oracle": ({"t": 0.01}, 3),
    "relaxation": ({"eta": 0.1, "times": [0.0, 0.01]}, 3),
    "universality": ({"t_flow": 0.1}, 4),
    "entropy-decay": ({"eta": 0.3, "t_max": 0.05}, 1),
}


def test_every_kind_has_a_smoke_case():
    assert set(SMALL) == set(KINDS)


@pytest.mark.parametrize("kind", KINDS)
def test_each_kind_runs_and_writes(kind, tmp_path):
    params, n = SMALL[kind]
    spec = ExperimentSpec(kind, GOE, params, n)
    rec = run_experiment(spec, tmp_path)
    assert rec.metrics
    metrics = tmp_path / f"{kind}-{spec.spec_hash}-metrics.tsv"
    head = metrics.read_text().splitlines()
    assert f"spec_hash={spec.spec_hash}" in head[0]
    assert f"n_samples={n}" in head[1]
    assert head[2].startswith("# units")
    for p in rec.paths:
        assert p.exists()
    saved = json.loads((tmp_path / f"{kind}-{spec.spec_hash}-spec.json").read_text())
    assert ExperimentSpec.from_dict(saved).spec_hash == spec.spec_hash


def test_validation():
    with pytest.raises(ConfigurationError):
        ExperimentSpec("gaps", GOE, {}, n_samples=0)
    with pytest.raises(ConfigurationError):
        ExperimentSpec("local-law", GOE, {"E": 0.0})
    with pytest.raises(ConfigurationError):
        ExperimentSpec("gaps", GOE, {"colour": 1})
    with pytest.raises(ConfigurationError):
        ExperimentSpec("teleport", GOE, {})
    with pytest.raises(ConfigurationError):
        ExperimentSpec("gaps", GOE, {}, workers=0)
    with pytest.raises(ConfigurationError):
        ExperimentSpec.from_dict({"schema_version": 99})


def test_hash_ignores_runtime_fields_only():
    a = ExperimentSpec("gaps", GOE, {}, 10)
    assert a.spec_hash == ExperimentSpec("gaps", GOE, {}, 10, workers=3, output="x").spec_hash
    assert a.spec_hash != ExperimentSpec("gaps", GOE, {}, 11).spec_hash
    assert a.spec_hash != ExperimentSpec("gaps", GOE.with_(seed=4), {}, 10).spec_hash


def test_spec_json_round_trip(tmp_path):
    spec = ExperimentSpec("repulsion", GOE, {"epsilon": [0.2], "n": 2}, 7, workers=2)
    spec.dump(tmp_path / "s.json")
    back = ExperimentSpec.load(tmp_path / "s.json")
    assert back == spec


def test_bad_json_is_a_configuration_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentSpec.load(p)


@pytest.mark.parametrize("kind", ["gaps", "dbm-invariance", "universality"])
def test_results_do_not_depend_on_worker_count(kind):
    params, n = SMALL[kind]
    one = run_experiment(ExperimentSpec(kind, GOE, params, n + 1, workers=1))
    four = run_experiment(ExperimentSpec(kind, GOE, params, n + 1, workers=4))
    assert one.spec_hash == four.spec_hash
    assert [m.value for m in one.metrics] == [m.value for m in four.metrics]


def test_reruns_are_identical():
    # flowed spectra are not cached, so this recomputes everything
    spec = ExperimentSpec("universality", GOE, SMALL["universality"][0], 5)
    a, b = run_experiment(spec), run_experiment(spec)
    np.testing.assert_array_equal([m.value for m in a.metrics], [m.value for m in b.metrics])
    assert a.tables[0].rows == b.tables[0].rows


def test_estimator_failure_carries_the_hash():
    spec = ExperimentSpec("local-law", GOE, {"E": 1.99, "eta": [0.2]}, 2)
    with pytest.raises(ExperimentError) as err:
        run_experiment(spec)
    assert err.value.spec_hash == spec.spec_hash


def test_parallel_map_preserves_order():
    assert parallel_map(abs, list(range(-20, 0)), workers=3) == list(range(20, 0, -1))


def test_criteria_table():
    assert [c[0] for c in CRITERIA] == list(range(1, 11))
    line = CriterionResult(4, "x", True, "ok", 1.0, 10.0).line()
    assert line.startswith("[PASS] criterion  4")


def test_unknown_criterion_and_tier():
    with pytest.raises(ConfigurationError):
        run_criterion(11)
    with pytest.raises(ConfigurationError):
        run_criterion(1, "medium")
