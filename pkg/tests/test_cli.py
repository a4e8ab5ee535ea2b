import json

import pytest

from rmtlab.ensembles import EnsembleConfig
from rmtlab.harness.cli import EXIT_OK, EXIT_USAGE, main
from rmtlab.harness.config import ExperimentSpec


def test_sample_to_stdout(capsys):
    assert main(["sample", "--beta", "2", "--N", "3", "--seed", "4"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("# rmtlab matrix")
    assert out[1] == "row\tcol\treal\timag"
    assert len(out) == 2 + 9


def test_spectrum_file(tmp_path):
    path = tmp_path / "s.tsv"
    assert main(["spectrum", "--N", "6", "--vectors", "-o", str(path)]) == EXIT_OK
    assert path.exists() and path.with_suffix(".vec.bin").exists()


def test_config_file_is_honoured(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    EnsembleConfig(1, 4, "uniform", 9).dump(cfg)
    assert main(["spectrum", "--config", str(cfg)]) == EXIT_OK
    assert "N=4" in capsys.readouterr().out


def test_experiment_run(tmp_path, capsys):
    spec = ExperimentSpec("gaps", EnsembleConfig.gaussian(1, 30, 1), {}, 3)
    spec.dump(tmp_path / "spec.json")
    assert main(["experiment", "run", str(tmp_path / "spec.json"), "-o", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / f"gaps-{spec.spec_hash}-metrics.tsv").exists()
    assert spec.spec_hash in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path):
    assert main([]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["sample", "--beta", "3"])
    assert e.value.code == EXIT_USAGE
    assert main(["experiment", "run", str(tmp_path / "missing.json")]) == EXIT_USAGE
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "kind": "gaps",
                               "ensemble": EnsembleConfig.gaussian(1, 5).to_dict(),
                               "n_samples": 0}))
    assert main(["experiment", "run", str(bad)]) == EXIT_USAGE
    assert main(["accept", "medium"]) == EXIT_USAGE
    assert main(["accept", "quick", "--only", "x"]) == EXIT_USAGE


def test_estimator_domain_error_exit_2(tmp_path):
    spec = ExperimentSpec("local-law", EnsembleConfig.gaussian(1, 20), {"E": 1.99, "eta": [0.2]}, 2)
    spec.dump(tmp_path / "s.json")
    assert main(["experiment", "run", str(tmp_path / "s.json")]) == EXIT_USAGE


def test_accept_single_quick_criterion(capsys):
    assert main(["accept", "quick", "--only", "8"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "[PASS] criterion  8" in out
