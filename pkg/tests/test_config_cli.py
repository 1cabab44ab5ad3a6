import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ladderlab.cli import EXIT_INCOMPLETE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, exit_code_for, main
from ladderlab.config import (
    RunConfig,
    SpectrumCache,
    atomic_write,
    canonical_json,
    parse_float_list,
    parse_mass_range,
    sha256_hex,
)
from ladderlab.errors import CacheError, IncompletenessError, LadderLabError, ValidationError
from ladderlab.spectra import SpectrumSlice

TWO_PI = 2 * math.pi
T2 = {
    "n": 3,
    "surface": {"kind": "flat_torus", "lengths": [TWO_PI, TWO_PI]},
    "lapse": {"kind": "constant", "value": 1.0},
    "shift": {"kind": "zero"},
    "h": {"kind": "identity"},
}


@pytest.fixture
def metric_file(tmp_path):
    p = tmp_path / "t2.json"
    p.write_text(json.dumps(T2))
    return p


@pytest.fixture(autouse=True)
def no_env_cache(monkeypatch):
    monkeypatch.delenv("LADDERLAB_CACHE", raising=False)


def run(tmp_path, *args):
    return main([*args, "--cache-dir", str(tmp_path / "cache"), "--out-dir", str(tmp_path / "out")])


class TestParsing:
    def test_mass_range(self):
        assert parse_mass_range("1:5:1") == [1, 2, 3, 4, 5]
        assert parse_mass_range("50:200:50") == [50, 100, 150, 200]
        assert parse_mass_range("3,1,2") == [3, 1, 2]
        assert parse_mass_range("0:2") == [0, 1, 2]

    @pytest.mark.parametrize("bad", ["5:1:1", "1:5:0", "a:b:c", "-1:3:1", "", " , "])
    def test_mass_range_invalid(self, bad):
        with pytest.raises(ValidationError):
            parse_mass_range(bad)

    def test_float_list(self):
        assert parse_float_list("0.1, 0.05,0.02") == [0.1, 0.05, 0.02]
        with pytest.raises(ValidationError):
            parse_float_list("0.1,x")

    @given(st.dictionaries(st.text(max_size=5), st.floats(allow_nan=False) | st.integers() | st.text(max_size=5), max_size=6))
    def test_canonical_json_order_free(self, d):
        rev = dict(reversed(list(d.items())))
        assert canonical_json(d) == canonical_json(rev)

    def test_nan_is_null(self):
        assert json.loads(canonical_json({"a": math.nan}))["a"] is None


class TestRunConfig:
    def test_round_trip(self):
        cfg = RunConfig(metric=T2, nu=[math.sqrt(2)])
        back = RunConfig.from_dict(cfg.to_dict())
        assert back.digest() == cfg.digest()

    def test_digest_ignores_paths(self):
        a = RunConfig(metric=T2, nu=[1.5], cache_dir="/a", out_dir="/b")
        b = RunConfig(metric=T2, nu=[1.5], cache_dir="/c", out_dir="/d")
        assert a.digest() == b.digest()
        assert a.digest() != RunConfig(metric=T2, nu=[1.6]).digest()

    def test_unknown_key(self):
        d = RunConfig(metric=T2, nu=[1.5]).to_dict()
        d["colour"] = "blue"
        with pytest.raises(ValidationError):
            RunConfig.from_dict(d)

    def test_wrong_version(self):
        d = RunConfig(metric=T2, nu=[1.5]).to_dict()
        d["schema_version"] = 99
        with pytest.raises(ValidationError):
            RunConfig.from_dict(d)

    def test_env_cache(self, monkeypatch, tmp_path):
        monkeypatch.setenv("LADDERLAB_CACHE", str(tmp_path / "env"))
        assert RunConfig(metric=T2, nu=[1.5], cache_dir="/x").resolved_cache_dir() == tmp_path / "env"


class TestCache:
    def test_put_get(self, tmp_path):
        c = SpectrumCache(tmp_path, {"a": 1})
        sl = SpectrumSlice(2, [-3.0, 3.0], [2, 2], 0.0, 5.0, 0)
        c.put(sl)
        got = SpectrumCache(tmp_path, {"a": 1}).get(2)
        assert got.lam.tolist() == [-3.0, 3.0] and got.complete_hi == 5.0
        assert SpectrumCache(tmp_path, {"a": 2}).get(2) is None

    def test_tamper(self, tmp_path):
        c = SpectrumCache(tmp_path, {"a": 1})
        path = c.put(SpectrumSlice(2, [-3.0, 3.0], [2, 2], 0.0, 5.0, 0))
        path.write_text(path.read_text().replace("3", "4"))
        with pytest.raises(CacheError, match="delete"):
            c.get(2)

    def test_atomic_write(self, tmp_path):
        p = tmp_path / "sub" / "f.txt"
        atomic_write(p, "hello")
        atomic_write(p, "world")
        assert p.read_text() == "world"
        assert [q.name for q in p.parent.iterdir()] == ["f.txt"]


class TestExitCodes:
    def test_mapping(self):
        assert exit_code_for(ValidationError("x")) == EXIT_VALIDATION
        assert exit_code_for(CacheError("x")) == EXIT_VALIDATION
        assert exit_code_for(IncompletenessError("x")) == EXIT_INCOMPLETE
        assert exit_code_for(LadderLabError("x")) == EXIT_NUMERICAL


class TestCommands:
    def test_spectrum_deterministic_and_cached(self, tmp_path, metric_file, caplog):
        args = ["spectrum", "--metric", str(metric_file), "--nu", str(math.sqrt(2)), "--mass-range", "1:5:1"]
        assert run(tmp_path, *args) == EXIT_OK
        key_dirs = list((tmp_path / "cache" / "spectra").iterdir())
        assert len(key_dirs) == 1
        csvs = sorted(key_dirs[0].glob("m_*.csv"))
        assert len(csvs) == 5
        first = {p.name: p.read_bytes() for p in csvs}
        summary1 = (tmp_path / "out" / "spectrum_summary.json").read_bytes()
        with caplog.at_level("INFO", logger="ladderlab"):
            assert run(tmp_path, *args, "-v") == EXIT_OK
        assert sum("cache hit" in r.getMessage() for r in caplog.records) == 5
        assert {p.name: p.read_bytes() for p in csvs} == first
        assert (tmp_path / "out" / "spectrum_summary.json").read_bytes() == summary1

    def test_fresh_cache_same_bytes(self, tmp_path, metric_file):
        args = ["spectrum", "--metric", str(metric_file), "--nu", "1.5", "--mass-range", "1:3:1"]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(a, *args) == EXIT_OK and run(b, *args) == EXIT_OK
        fa = sorted((a / "cache").rglob("*.csv"))
        fb = sorted((b / "cache").rglob("*.csv"))
        assert [p.read_bytes() for p in fa] == [p.read_bytes() for p in fb]

    def test_tampered_cache_exit(self, tmp_path, metric_file):
        args = ["spectrum", "--metric", str(metric_file), "--nu", "1.5", "--mass-range", "1:2:1"]
        assert run(tmp_path, *args) == EXIT_OK
        f = next((tmp_path / "cache").rglob("m_1.csv"))
        f.write_text(f.read_text() + "9,9\n")
        assert run(tmp_path, *args) == EXIT_VALIDATION

    def test_invariant_gate(self, tmp_path):
        bad = dict(T2, shift={"kind": "constant", "value": [1.2, 0.0]})
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(bad))
        assert run(tmp_path, "spectrum", "--metric", str(p), "--nu", "1.5", "--mass-range", "1:2:1") == EXIT_VALIDATION
        assert not (tmp_path / "cache").exists()

    def test_empty_ladder(self, tmp_path, metric_file):
        code = run(tmp_path, "verify-weyl", "--metric", str(metric_file), "--nu", "0.9", "--mass-range", "10:50:10")
        assert code == EXIT_VALIDATION

    def test_missing_metric(self, tmp_path):
        assert run(tmp_path, "spectrum", "--nu", "1.5") == EXIT_VALIDATION

    def test_verify_weyl_pass(self, tmp_path, metric_file):
        code = run(tmp_path, "verify-weyl", "--metric", str(metric_file), "--nu", str(math.sqrt(2)), "--window", "0.5",
                   "--mass-range", "50:200:10")
        assert code == EXIT_OK
        rep = json.loads((tmp_path / "out" / "weyl_report_nu0.json").read_text())
        assert rep["verdict"] == "PASS"
        assert abs(rep["fitted_coefficient"] - TWO_PI * math.sqrt(2)) / (TWO_PI * math.sqrt(2)) < 0.05

    def test_volume_and_admissible(self, tmp_path, metric_file):
        assert run(tmp_path, "volume", "--metric", str(metric_file), "--nu", str(math.sqrt(2)), "--samples", "20000") == EXIT_OK
        vol = json.loads((tmp_path / "out" / "volume_nu0.json").read_text())
        assert json.dumps(vol)
        assert run(tmp_path, "admissible", "--metric", str(metric_file), "--nu", "1.0", "--nu", "1.5") == EXIT_OK
        adm = json.loads((tmp_path / "out" / "admissibility.json").read_text())
        assert json.dumps(adm)

    def test_flow(self, tmp_path, metric_file):
        code = run(tmp_path, "flow", "--metric", str(metric_file), "--nu", "1.5", "--duration", "1.0", "--x0", "0,0",
                   "--direction", "1,0")
        assert code == EXIT_OK
        lines = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
        assert lines[0].startswith("s,t,")

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "ladderlab.cli", "--version"], capture_output=True, text=True)
        assert out.returncode == 0 and "kernels" in out.stdout
