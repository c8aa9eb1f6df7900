import csv
import math

import pytest

from skwave import __version__
from skwave.cli import (SWEEP_COLUMNS, ConfigError, dump_config, emit_report, load_yaml, main,
                        parse_config, sweep_rows, to_json)
from skwave.experiments import ConvergenceReport, MuLevel

MINIMAL = "domain: {dimension: 1, side_lengths: [3.141592653589793]}\n"
SWEEP = """
domain: {dimension: 1, side_lengths: [3.141592653589793], truncation: 8}
time: {n_steps: 64}
coefficients:
  drift: {kind: sine}
  diffusion: {kind: bounded_diffusion}
initial: {u: [1.0, 0.5]}
mu: 0.01
experiment: {mu_grid: [1e-1, 1e-2, 1e-3], n_paths: 16, chunk_size: 4}
analysis: {alpha: 0.1, p_moment: 12, n_paths: 16}
"""


def test_minimal_config_defaults():
    p = parse_config(MINIMAL)
    assert p.sim.domain.truncation == 32
    assert p.experiment.n_paths == 64
    assert p.sim.t_final == 1.0 and p.sim.dt == 1 / 256
    assert p.analysis is None


@pytest.mark.parametrize("text,match", [
    (MINIMAL + "seeed: 3\n", "unknown"),
    ("domain: {dimension: 1, side_lengths: [1.0], truncaton: 4}\n", "unknown"),
    ("domain: {dimension: 1}\n", "missing"),
    ("domain: {dimension: 3, side_lengths: [1.0], truncation: 8}\ncovariance: {kind: constant, value: 1}\n",
     "admissible"),
    (MINIMAL + "experiment: {mu_grid: [0.1, 0.1]}\n", "strictly decreasing"),
    (MINIMAL + "analysis: {alpha: 0.3}\n", "alpha"),
    (MINIMAL + "time: {dt: 0.3}\n", "divide"),
    ("[1, 2]\n", "mapping"),
    ("domain: {dimension: 1, side_lengths: [1.0]\n", "YAML"),
])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_round_trip_of_resolved_config():
    p = parse_config(SWEEP)
    q = parse_config(dump_config(p.resolved))
    assert q.resolved == p.resolved
    assert q.sim.describe() == p.sim.describe()


def test_exponent_floats_parse_as_numbers():
    assert load_yaml("a: 1e-3\nb: -2E+1\n") == {"a": 0.001, "b": -20.0}


def test_json_float_format():
    assert to_json({"b": 0.1, "a": [1, True, None, math.nan]}) == '{"a": [1, true, null, NaN], "b": 0.10000000000000001}'


def test_emit_empty_and_single_level(tmp_path):
    emit_report([], SWEEP_COLUMNS, [], tmp_path, "empty")
    assert (tmp_path / "empty.csv").read_text() == ",".join(SWEEP_COLUMNS) + "\n"
    level = MuLevel(0.1, 1.0, 0.1, [1.0] * 5, 10, 0, 0.0, True)
    rep = ConvergenceReport([level], math.nan, True)
    emit_report(sweep_rows(rep), SWEEP_COLUMNS, [], tmp_path, "one")
    rows = list(csv.reader(open(tmp_path / "one.csv")))
    assert len(rows) == 2 and len(rows[1]) == 11


def test_unwritable_output_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ConfigError):
        emit_report([], ["a"], [], blocker / "sub", "x")


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(SWEEP)
    return path


def test_sk_sweep_is_byte_reproducible(cfg_file, tmp_path):
    assert main(["sk-sweep", "--config", str(cfg_file), "--out", str(tmp_path / "a")]) == 0
    assert main(["sk-sweep", "--config", str(cfg_file), "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    for name in ("sk_sweep.csv", "sk_sweep.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "sk_sweep.jsonl").read_text().splitlines()[0]
    assert __version__ in header and '"mu_grid"' in header


def test_other_commands(cfg_file, tmp_path):
    out = str(tmp_path / "o")
    assert main(["verify-bounds", "--config", str(cfg_file), "--out", out]) == 0
    assert main(["gamma-gap", "--config", str(cfg_file), "--out", out]) == 0
    assert main(["simulate", "--config", str(cfg_file), "--equation", "wave", "--paths", "2", "--out", out]) == 0
    assert main(["verify-semigroup", "--mu-grid", "0.1", "0.001", "--k-max", "16", "--n-t", "50", "--out", out]) == 0
    assert (tmp_path / "o" / "verify_semigroup.csv").exists()


def test_output_dir_from_environment(cfg_file, tmp_path, monkeypatch):
    monkeypatch.setenv("SKWAVE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(cfg_file), "--paths", "2"]) == 0
    assert (tmp_path / "env" / "simulate_heat.csv").exists()


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(MINIMAL + "typo: 1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
    strict = tmp_path / "strict.yaml"
    strict.write_text(SWEEP.replace("chunk_size: 4}", "chunk_size: 4, final_fraction: 1.0e-12}"))
    assert main(["sk-sweep", "--config", str(strict), "--out", str(tmp_path)]) == 1
    boom = tmp_path / "boom.yaml"
    boom.write_text(MINIMAL + "coefficients: {drift: {kind: linear, slope: 1.0e+200}}\ninitial: {u: [1.0]}\n")
    with pytest.warns(RuntimeWarning):
        assert main(["simulate", "--config", str(boom), "--out", str(tmp_path)]) == 3
