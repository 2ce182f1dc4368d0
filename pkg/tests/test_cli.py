import json
import subprocess
import sys

import numpy as np
import pytest

from msalab import cli
from msalab.seeding import MASK64, derive_seed, map_trials


def _mix_ref(z):
    # reference SplitMix64 step written independently of msalab
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def test_seed_vector():
    assert derive_seed(0, 0) == 0xE220A8397B1DCDAF == _mix_ref(0)


def test_seed_stream_is_splitmix_from_zero():
    # base 0 mixes to state 0, so indices walk the plain SplitMix64 stream
    state, out = 0, []
    for _ in range(5):
        out.append(_mix_ref(state))
        state = (state + 0x9E3779B97F4A7C15) & MASK64
    assert [derive_seed(0, i) for i in range(5)] == out


def test_seed_no_collisions():
    seeds = np.fromiter((derive_seed(12345, i) for i in range(10 ** 6)), dtype=np.uint64, count=10 ** 6)
    assert len(np.unique(seeds)) == 10 ** 6


def test_seed_bases_differ():
    assert {derive_seed(b, 0) for b in range(1000)}.__len__() == 1000


def _trial(i, seed):
    return (i, seed % 97)


def test_map_trials_parallel_order():
    assert map_trials(_trial, 50, 3, workers=1) == map_trials(_trial, 50, 3, workers=3)


def test_resolve_threads(monkeypatch):
    monkeypatch.delenv("THREADS", raising=False)
    assert cli.resolve_threads(None) == 1
    monkeypatch.setenv("THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv("THREADS", "many")
    with pytest.raises(Exception):
        cli.resolve_threads(None)


def _run(tmp_path, cfg, name="cfg.json", extra=()):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return cli.main([*extra, "run", "--config", str(path), "--out", str(tmp_path)])


def test_config_errors_exit_3(tmp_path):
    assert _run(tmp_path, {"kind": "classify", "bogus": 1}) == 3
    assert _run(tmp_path, {"kind": "nope"}) == 3
    assert _run(tmp_path, {"kind": "classify", "params": {"preset": "section2", "alpha": 2.5}}) == 3
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["run", "--config", str(tmp_path / "bad.json")]) == 3


def test_missing_config_exit_4(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "absent.json")]) == 4


def test_unwritable_output_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.run({"kind": "verify", "suite": "schedules", "trials": 0}, out_dir=blocker / "sub") == 4


def test_verify_kind_zero_trials(tmp_path):
    cfg = {"kind": "verify", "suite": "all", "trials": 0, "output": {"prefix": "v"}}
    assert _run(tmp_path, cfg) == 0
    summary = json.loads((tmp_path / "v.json").read_text())
    assert summary["schema_version"] == "1"
    assert all(s["failed"] == 0 for s in summary["result"]["suites"])


def test_config_echo_expands_preset(tmp_path):
    cfg = {"kind": "classify", "trials": 2, "scale": 4, "energy": 3.0, "output": {"prefix": "c"}}
    assert _run(tmp_path, cfg) == 0
    summary = json.loads((tmp_path / "c.json").read_text())
    assert summary["config"]["params"]["alpha"] == 1.5 and summary["config"]["params"]["preset"] == "section2"
    assert summary["rows"] == 2
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "trial,seed,scale,E,resonant,singular,m_localized"


CONFIGS = [
    {"kind": "classify", "trials": 3, "scale": 6, "energies": [1.0, 5.0], "ensemble": {"coupling": 8.0}},
    {"kind": "estimate", "quantity": "P_k", "trials": 5, "scale": 6, "energy": 5.0, "ensemble": {"coupling": 8.0}},
    {"kind": "estimate", "quantity": "Q_k", "trials": 5, "scale": 6, "energy": 5.0},
    {"kind": "estimate", "quantity": "wegner", "trials": 50, "graph": {"side": 16}, "energy": 2.0},
    {"kind": "estimate", "quantity": "continuity", "trials": 200, "ensemble": {"kind": "gaussian01"}},
    {"kind": "estimate", "quantity": "disjoint_tail", "trials": 2, "scale": 4, "energy": 5.0,
     "params": {"preset": "section8"}},
    {"kind": "induction", "trials": 2, "scales": [4, 12], "energy": 5.0, "ensemble": {"coupling": 8.0}},
    {"kind": "coverage", "trials": 3, "scale": 6, "interval": [2.0, 3.0], "ensemble": {"coupling": 5.0}},
    {"kind": "two_volume", "trials": 3, "scale": 4, "interval": [2.0, 2.5], "schedule": {"framework": "fmm", "m": 1.0}},
    {"kind": "dynamics", "trials": 4, "graph": {"side": 40}, "distances": [2, 4, 6], "ensemble": {"coupling": 10.0}},
    {"kind": "dynamics", "observable": "gk_audit", "trials": 2, "graph": {"side": 60}, "scale": 8,
     "interval": [4.5, 5.5], "ensemble": {"coupling": 10.0}},
]


@pytest.mark.parametrize("cfg", CONFIGS, ids=lambda c: c["kind"] + "-" + c.get("quantity", c.get("observable", "")))
def test_every_kind_byte_identical(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.run(cfg, out_dir=a) == 0
    assert cli.run(cfg, out_dir=b) == 0
    assert (a / "run.csv").read_bytes() == (b / "run.csv").read_bytes()
    ja, jb = json.loads((a / "run.json").read_text()), json.loads((b / "run.json").read_text())
    ja.pop("metadata"), jb.pop("metadata")
    assert ja == jb


def test_parallel_csv_identical(tmp_path):
    cfg = {"kind": "estimate", "quantity": "P_k", "trials": 12, "scale": 6, "energy": 5.0,
           "ensemble": {"coupling": 8.0}}
    assert cli.run(cfg, workers=1, out_dir=tmp_path / "s") == 0
    assert cli.run(cfg, workers=3, out_dir=tmp_path / "p") == 0
    assert (tmp_path / "s" / "run.csv").read_bytes() == (tmp_path / "p" / "run.csv").read_bytes()


def test_verify_command(capsys):
    assert cli.main(["verify", "--suite", "lemmas"]) == 0
    assert "lemmas: 6 passed, 0 failed" in capsys.readouterr().out
    assert cli.main(["verify", "--suite", "schedules", "--fault", "q>1"]) == 2
    assert "FAILED descent contraction" in capsys.readouterr().out


def test_verify_all_suites():
    res = cli.verify("all")
    assert [r.suite for r in res] == ["operators", "lemmas", "schedules"]
    assert all(r.failed == 0 for r in res)


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "msalab.cli", "verify", "--suite", "schedules"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "schedules: 6 passed" in out.stdout


def test_rows_to_csv_floats_repr():
    text = cli.rows_to_csv([{"a": 0.1, "b": True, "c": (1, 2.5)}, {"a": 1 / 3, "d": "x"}])
    lines = text.splitlines()
    assert lines[0] == "a,b,c,d"
    assert lines[1] == '0.1,1,"[1, 2.5]",'
    assert lines[2] == "0.3333333333333333,,,x"


def test_shipped_configs_validate():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for path in paths:
        cfg = cli.resolve_config(cli.load_config(path))
        assert cfg["output"]["prefix"] == path.stem
