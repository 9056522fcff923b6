from __future__ import annotations

import csv
import json

import pytest
import yaml

from hpss.cli import EXIT_BACKEND, EXIT_CONFIG, EXIT_INTEGRITY, EXIT_OK, EXIT_REFUSED, main

TOY = {"id": "toy23", "factors": [{"id": "a", "values": ["x", "y"]}, {"id": "b", "values": ["p", "q", "r"]}],
       "baseline": {"a": "x", "b": "p"}}
# hand-computed: a=y (0.3) plus b=q (0.2) plus the (a=y, b=p) coupling 0.4 beats everything:
# (y,p) = 0.3 + 0.0 + 0.4 = 0.7, (y,q) = 0.5, (y,r) = 0.4, (x,*) <= 0.3
TOY_LAND = {"weights": [[0.1, 0.3], [0.0, 0.2, 0.1]], "interactions": [[[0, 1], [1, 0], 0.4]], "sigma": 0.0}


@pytest.fixture
def toy(tmp_path):
    (tmp_path / "toy.yaml").write_text(yaml.safe_dump(TOY))
    (tmp_path / "land.json").write_text(json.dumps(TOY_LAND))
    return tmp_path


def search(tmp_path, name, *extra):
    return main(["search", "--space", "pointwise_v1", "--backend", "synth", "--algo", "hpss", "--budget", "71",
                 "--seed", "0", "--run-dir", str(tmp_path / name), *extra])


def test_search_and_report(tmp_path, capsys):
    assert search(tmp_path, "a") == EXIT_OK
    out = capsys.readouterr().out
    assert "evaluations: 71" in out
    rep = json.loads((tmp_path / "a/report/report.json").read_text())
    assert rep["evaluations"] <= 71 and rep["zero_mean"]
    rows = list(csv.DictReader(open(tmp_path / "a/report/curve.csv")))
    assert len(rows) <= 71
    sums = {}
    for r in csv.DictReader(open(tmp_path / "a/report/advantages.csv")):
        sums[r["factor"]] = sums.get(r["factor"], 0.0) + float(r["advantage"])
    assert len(sums) == 8 and all(abs(v) < 1e-9 for v in sums.values())
    assert (tmp_path / "a/report/convergence.png").stat().st_size > 0
    best = json.loads((tmp_path / "a/report/best_strategy.json").read_text())
    assert best == rep["best_strategy"]


def test_search_twice_identical_reports(tmp_path):
    assert search(tmp_path, "a", "--no-figures") == EXIT_OK
    assert search(tmp_path, "b", "--no-figures") == EXIT_OK
    for f in ("report.json", "curve.csv", "advantages.csv", "appearances.csv", "best_strategy.json"):
        assert (tmp_path / "a/report" / f).read_bytes() == (tmp_path / "b/report" / f).read_bytes()


def test_figures_are_reproducible(tmp_path):
    search(tmp_path, "a")
    search(tmp_path, "b")
    for f in ("convergence.png", "advantages.png"):
        assert (tmp_path / "a/report" / f).read_bytes() == (tmp_path / "b/report" / f).read_bytes()


def test_budget_below_init_cost(tmp_path, capsys):
    assert main(["search", "--budget", "5", "--run-dir", str(tmp_path / "x")]) == EXIT_CONFIG
    assert "21" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_existing_run_dir_refused(tmp_path):
    search(tmp_path, "a", "--no-figures")
    assert search(tmp_path, "a") == EXIT_CONFIG


def test_brute_force_toy(toy, capsys):
    out = toy / "bf.csv"
    assert main(["brute-force", "--space", str(toy / "toy.yaml"), "--landscape-file", str(toy / "land.json"),
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 6
    assert (rows[0]["a"], rows[0]["b"]) == ("y", "p") and float(rows[0]["score"]) == pytest.approx(0.7)
    assert '"a": "y"' in capsys.readouterr().out


def test_brute_force_single_strategy(tmp_path):
    (tmp_path / "one.yaml").write_text(yaml.safe_dump({"factors": [{"id": "only", "values": ["v"]}]}))
    out = tmp_path / "bf.csv"
    assert main(["brute-force", "--space", str(tmp_path / "one.yaml"), "--out", str(out)]) == EXIT_OK
    assert len(list(csv.DictReader(open(out)))) == 1


def test_brute_force_refuses_paper_space(tmp_path, capsys):
    assert main(["brute-force", "--out", str(tmp_path / "x.csv")]) == EXIT_REFUSED
    assert "12,960" in capsys.readouterr().err


def test_report_of_resumed_run_equals_twin(tmp_path):
    assert search(tmp_path, "full", "--no-figures") == EXIT_OK
    assert search(tmp_path, "cut", "--no-figures") == EXIT_OK
    lines = (tmp_path / "cut/journal.jsonl").read_text().splitlines(keepends=True)
    (tmp_path / "cut/journal.jsonl").write_text("".join(lines[:30]))
    m = json.loads((tmp_path / "cut/manifest.json").read_text())
    m["status"] = "suspended"
    (tmp_path / "cut/manifest.json").write_text(json.dumps(m))
    assert main(["search", "--resume", str(tmp_path / "cut"), "--no-figures"]) == EXIT_OK
    assert main(["report", str(tmp_path / "cut"), "--no-figures"]) == EXIT_OK
    assert main(["report", str(tmp_path / "full"), "--no-figures"]) == EXIT_OK
    for f in ("report.json", "curve.csv", "advantages.csv"):
        assert (tmp_path / "cut/report" / f).read_bytes() == (tmp_path / "full/report" / f).read_bytes()


def test_report_corrupt_journal(tmp_path, capsys):
    search(tmp_path, "a", "--no-figures")
    with open(tmp_path / "a/journal.jsonl", "a") as fh:
        fh.write("{torn")
    assert main(["report", str(tmp_path / "a")]) == EXIT_INTEGRITY
    assert "line 72" in capsys.readouterr().err


def test_replay_backend_reproduces_run(tmp_path):
    search(tmp_path, "a", "--no-figures")
    assert main(["search", "--backend", "replay", "--replay-journal", str(tmp_path / "a/journal.jsonl"),
                 "--run-dir", str(tmp_path / "b"), "--no-figures"]) == EXIT_OK
    assert (tmp_path / "a/journal.jsonl").read_bytes() == (tmp_path / "b/journal.jsonl").read_bytes()


def test_replay_miss_suspends(tmp_path):
    search(tmp_path, "a", "--no-figures")
    code = main(["search", "--backend", "replay", "--replay-journal", str(tmp_path / "a/journal.jsonl"),
                 "--seed", "1", "--run-dir", str(tmp_path / "b"), "--no-figures"])
    assert code == EXIT_BACKEND
    assert json.loads((tmp_path / "b/manifest.json").read_text())["status"] == "suspended"


def test_bench_synth(tmp_path, capsys, toy):
    out = tmp_path / "bench"
    assert main(["bench-synth", "--space", str(toy / "toy.yaml"), "--landscapes", "3", "--budget", "6",
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(open(out / "bench.csv")))
    assert len(rows) == 2 * 3 * 4
    assert all(r["hit"] == "True" for r in rows if r["algorithm"] in ("hpss", "random"))
    assert (out / "bench_separable.png").exists()
    assert "separable/hpss" in capsys.readouterr().out


def write_dataset(tmp_path):
    samples = [{"id": f"s{i}", "group": None, "fields": {"article": f"article number {i}", "summary": f"sum {i}"},
                "human": h, "native_scale": [1, 5]} for i, h in enumerate([1, 2, 3, 4, 5, 2])]
    (tmp_path / "s.jsonl").write_text("\n".join(json.dumps(s) for s in samples) + "\n")
    (tmp_path / "d.yaml").write_text(yaml.safe_dump({
        "id": "toy", "aspect": "Coherence", "criteria": "Sentences connect.", "task_family": "summarization",
        "grain": "dataset", "samples": "s.jsonl", "baseline_scale": "10"}))
    return tmp_path / "d.yaml"


def test_render_baseline(tmp_path, capsys):
    ds = write_dataset(tmp_path)
    assert main(["render", "--dataset", str(ds), "--sample", "s2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("## Instruction") and "article number 2" in out and "scale of 1 to 10" in out


def test_render_strategy_with_examples(tmp_path, capsys):
    ds = write_dataset(tmp_path)
    strat = {"scale": "5", "examples": "3", "criteria": "human", "reference": "self_generated", "cot": "none",
             "autocot": "none", "metrics": "none", "order": "IC-TD-ER"}
    (tmp_path / "st.json").write_text(json.dumps(strat))
    assert main(["render", "--dataset", str(ds), "--strategy", str(tmp_path / "st.json"), "--sample", "s0"]) == EXIT_OK
    cap = capsys.readouterr()
    assert "Here are some examples" in cap.out and "article number 0\n\n## The Start" not in cap.out.split("Following")[0]
    assert "--aux reference" in cap.err


def test_eval_strategy_synth(tmp_path, capsys, toy):
    (tmp_path / "st.yaml").write_text("a: y\nb: p\n")
    assert main(["eval-strategy", "--space", str(toy / "toy.yaml"), "--backend", "synth", "--landscape-file",
                 str(toy / "land.json"), "--strategy", str(tmp_path / "st.yaml")]) == EXIT_OK
    assert float(capsys.readouterr().out.split("score:")[1]) == pytest.approx(0.7)


def test_eval_strategy_unknown_value(tmp_path, toy):
    (tmp_path / "st.yaml").write_text("a: z\nb: p\n")
    assert main(["eval-strategy", "--space", str(toy / "toy.yaml"), "--backend", "synth",
                 "--strategy", str(tmp_path / "st.yaml")]) == EXIT_CONFIG


def test_live_needs_endpoint(tmp_path, monkeypatch):
    monkeypatch.delenv("HPSS_API_BASE", raising=False)
    ds = write_dataset(tmp_path)
    (tmp_path / "st.yaml").write_text(yaml.safe_dump({"scale": "5", "examples": "0", "criteria": "human",
        "reference": "none", "cot": "none", "autocot": "none", "metrics": "none", "order": "TD-ER-IC"}))
    assert main(["eval-strategy", "--dataset", str(ds), "--model", "m", "--strategy",
                 str(tmp_path / "st.yaml")]) == EXIT_CONFIG
