import csv
import json
import subprocess
import sys

import pytest

from patrolsynth import fixtures as F
from patrolsynth import graph as graphs
from patrolsynth import strategy as strategies
from patrolsynth.cli import main, parse_memory


@pytest.fixture
def hub_files(tmp_path):
    g = F.hub_with_two_targets()
    gp, bp, cp = tmp_path / "hub.json", tmp_path / "b.json", tmp_path / "c.json"
    graphs.save(g, gp)
    strategies.save(F.hub_memoryless(g), bp)
    strategies.save(F.hub_with_memory(g), cp)
    return gp, bp, cp


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_grid(tmp_path):
    out = tmp_path / "g.json"
    assert main(["gen", "grid", "--n", "10", "--seed", "1", "--out", str(out)]) == 0
    g = graphs.load(out)
    assert len(g.vertices) == 10 and graphs.validate(g).ok


def test_gen_airport(tmp_path):
    out = tmp_path / "a.json"
    assert main(["gen", "airport", "--gates", "4,2,6", "--out", str(out)]) == 0
    assert len(graphs.load(out).vertices) == 19


def test_gen_airport_odd_gates(capsys):
    assert main(["gen", "airport", "--gates", "3"]) == 2
    assert "gate counts must be even" in capsys.readouterr().err


def test_gen_to_stdout(capsys):
    assert main(["gen", "airport", "--total-gates", "6", "--seed", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert "C" in data["vertices"]


def test_parse_memory_roles():
    g = graphs.gen_airport([2, 2])
    mem = parse_memory("default=4,targets=1,C=2", g)
    assert mem["C"] == 2 and mem["T0H0"] == 4
    assert all(mem[t] == 1 for t in g.targets)
    with pytest.raises(ValueError):
        parse_memory("nowhere=3", g)
    with pytest.raises(ValueError):
        parse_memory("default=0", g)


def test_eval_memory_strategy(hub_files, tmp_path):
    gp, _, cp = hub_files
    out = tmp_path / "r.json"
    assert main(["eval", str(gp), str(cp), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["value"] == pytest.approx(6.0, abs=1e-9)
    assert data["unambiguous"] is True


def test_eval_memoryless(hub_files, tmp_path):
    gp, bp, _ = hub_files
    out = tmp_path / "r.json"
    assert main(["eval", str(gp), str(bp), "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["value"] == pytest.approx(F.hub_memoryless_value(), abs=1e-9)
    # at the optimal p both targets are equally exposed; t2 is among the optimal attacks
    assert "t2" in {t["target"] for t in data["witness"][0]["ties"]}


def test_eval_illegal_strategy(hub_files, tmp_path, capsys):
    gp, _, cp = hub_files
    data = json.loads(cp.read_text())
    data["rows"].append({"from": ["t1", 1], "to": ["t2", 1], "p": 0.5})
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(data))
    assert main(["eval", str(gp), str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_file(tmp_path):
    assert main(["eval", str(tmp_path / "none.json"), str(tmp_path / "s.json")]) == 2


def test_synth_outputs(tmp_path):
    gp = tmp_path / "g.json"
    main(["gen", "grid", "--n", "10", "--seed", "1", "--out", str(gp)])
    out = tmp_path / "run"
    rc = main(["synth", str(gp), "--mem", "default=2", "--trials", "3", "--steps", "10",
               "--out", str(out)])
    assert rc == 0
    for i in range(3):
        rows = read_csv(out / f"trace_{i:03d}.csv")
        assert rows[0] == ["step", "loss", "hard_max", "eval_value", "unambiguous"]
        assert len(rows) == 11
    summary = read_csv(out / "summary.csv")
    assert summary[0] == ["trial", "best_value", "best_step", "mean_step_seconds"]
    assert len(summary) == 4
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1, 2]
    for name in manifest["files"]:
        assert (out / name).exists()
    g = graphs.load(gp)
    strategies.load(g, out / "best_strategy.json")


def test_synth_zero_steps_and_baseline(tmp_path):
    gp = tmp_path / "a.json"
    main(["gen", "airport", "--gates", "2,2,2", "--out", str(gp)])
    out = tmp_path / "run"
    rc = main(["synth", str(gp), "--mem", "default=1", "--steps", "0", "--baseline", "airport",
               "--dump-loss", "--out", str(out)])
    assert rc == 0
    summary = read_csv(out / "summary.csv")
    assert summary[0][-1] == "normalized_value"
    assert len(read_csv(out / "trace_000.csv")) == 2
    assert "hard_max" in json.loads((out / "loss_000.json").read_text())


def test_manifest_replay_is_identical(hub_files, tmp_path):
    gp, _, _ = hub_files
    first, second = tmp_path / "one", tmp_path / "two"
    main(["synth", str(gp), "--mem", "v=2", "--seeds", "4,7", "--steps", "20", "--out", str(first)])
    assert main(["synth", "--manifest", str(first / "manifest.json"), "--out", str(second)]) == 0
    for name in ("trace_000.csv", "trace_001.csv", "best_strategy.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_parallel_trials_match_serial(hub_files, tmp_path):
    gp, _, _ = hub_files
    a, b = tmp_path / "a", tmp_path / "b"
    main(["synth", str(gp), "--mem", "v=2", "--trials", "2", "--steps", "5", "--out", str(a)])
    main(["synth", str(gp), "--mem", "v=2", "--trials", "2", "--steps", "5", "--jobs", "2", "--out", str(b)])
    assert (a / "trace_001.csv").read_bytes() == (b / "trace_001.csv").read_bytes()


def test_oracle_command(hub_files, tmp_path):
    gp, _, cp = hub_files
    out = tmp_path / "o.json"
    rc = main(["oracle", str(gp), str(cp), "--samples", "20000", "--enumerate", "--synth-steps", "200",
               "--synth-trials", "2", "--out", str(out)])
    data = json.loads(out.read_text())
    assert rc == 0 and data["ok"]
    assert data["value_iteration_max_diff"] <= 1e-8
    assert data["deterministic_best"] == 8.0
    assert data["deterministic_not_better"]


def test_oracle_lazy_strategy(tmp_path):
    g = F.two_targets_with_loops()
    gp, sp = tmp_path / "g.json", tmp_path / "s.json"
    graphs.save(g, gp)
    strategies.save(F.lazy_switching(g), sp)
    out = tmp_path / "o.json"
    assert main(["oracle", str(gp), str(sp), "--out", str(out)]) == 0
    mc = json.loads(out.read_text())["monte_carlo"][0]
    assert mc["evaluator"] == pytest.approx(101.0, abs=1e-9)
    assert mc["within_3se"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "patrolsynth", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth" in proc.stdout
