import csv
import io
import json
import subprocess
import sys
from math import comb
from pathlib import Path

import pytest

from ipmu import load_instance, save_instance
from ipmu.cli import RunRecord, main, verify_record

from conftest import worked_example


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def toy(tmp_path, l3):
    path = tmp_path / "toy.ipmu"
    save_instance(l3, path, comments=["type: P"])
    return path


def test_generate_batch(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--n", 40, "--m", 100, "--p", 2, "--budget", 50,
                       "--type", "P", "--count", 5, "--seed", 11, "--out", tmp_path / "a")
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == [f"P_n40_m100_p2_B50_s{s}.ipmu" for s in range(11, 16)]
    assert out.split() == [str(tmp_path / "a" / n) for n in names]
    run(capsys, "generate", "--n", 40, "--m", 100, "--p", 2, "--budget", 50,
        "--type", "P", "--count", 5, "--seed", 11, "--out", tmp_path / "b")
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_generate_density(tmp_path, capsys):
    code, out, _ = run(capsys, "generate", "--n", 100, "--density", 0.25, "--p", 5, "--budget", 100,
                       "--type", "R", "--out", tmp_path)
    assert code == 0
    assert load_instance(out.strip()).m == 2475


def test_generate_rejects_bad_p(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["generate", "--n", "10", "--m", "20", "--p", "0", "--budget", "5", "--out", str(tmp_path)])
    assert info.value.code != 0
    assert "1 ≤ p < n" in capsys.readouterr().err


def test_generate_grid_shape():
    from ipmu.cli import LARGE_GRID, SMALL_GRID, _grid_specs

    small = _grid_specs(SMALL_GRID, 0, ["P", "R"], (1, 1))
    large = _grid_specs(LARGE_GRID, 0, ["P", "R"], (1, 1))
    assert len(small) == 960 and len(large) == 270
    for spec in small + large:
        spec.check()
    assert {s.arc_count() for s in large if s.n == 100} == {2475, 4950, 7425}


def test_solve_kh_is_deterministic(toy, capsys):
    _, first, _ = run(capsys, "solve", "--algorithm", "kh", toy)
    _, second, _ = run(capsys, "solve", "--algorithm", "kh", toy)
    a, b = json.loads(first), json.loads(second)
    assert a["seed"] is None and a["objective"] == 3.0 and a["medians"] == [1]
    a.pop("wall_time_ms"), b.pop("wall_time_ms")
    assert a == b


def test_solve_grasp_seeded(tmp_path, capsys):
    path = tmp_path / "g.ipmu"
    run(capsys, "generate", "--n", 15, "--density", 0.3, "--p", 3, "--budget", 50, "--type", "R", "--out", tmp_path)
    path = next(tmp_path.glob("*.ipmu"))
    recs = []
    for _ in range(2):
        code, out, _ = run(capsys, "solve", "--algorithm", "grasp", "--seed", 42, path)
        assert code == 0
        doc = json.loads(out)
        doc.pop("wall_time_ms")
        recs.append(doc)
    assert recs[0] == recs[1]
    assert recs[0]["config"] == {"alpha": 0.51, "ls": "best", "max_iters": 100, "max_iters_wi": 29}
    assert list(recs[0])[:4] == ["format", "instance", "algorithm", "config"]


def test_solve_record_revalidates(tmp_path, capsys):
    run(capsys, "generate", "--n", 14, "--density", 0.4, "--p", 2, "--budget", 60, "--type", "P",
        "--demand-max", 4, "--out", tmp_path)
    path = next(tmp_path.glob("*.ipmu"))
    inst = load_instance(path)
    for argv in (["--alpha", "1.0", "--max-iters", "1", "--max-iters-wi", "0", "--seed", "1"],
                 ["--algorithm", "kh"], ["--ls", "first", "--seed", "3"]):
        _, out, _ = run(capsys, "solve", *argv, path)
        rec = RunRecord.from_json(out)
        assert verify_record(inst, rec) == pytest.approx(rec.objective, abs=1e-6)


def test_verify_record_catches_tampering(toy, capsys, l3):
    _, out, _ = run(capsys, "solve", "--algorithm", "kh", toy)
    rec = RunRecord.from_json(out)
    rec.objective -= 0.5
    with pytest.raises(ValueError, match="recomputed"):
        verify_record(l3, rec)
    rec = RunRecord.from_json(out)
    rec.upgrades[0][2] += 5.0
    with pytest.raises(ValueError):
        verify_record(l3, rec)


def test_exact_and_compare(toy, tmp_path, capsys):
    code, out, _ = run(capsys, "exact", toy)
    rec = json.loads(out)
    assert code == 0 and rec["objective"] == 3.0 and rec["optimality"] == "certified" and rec["ties"] == 2
    grasp_file = tmp_path / "run.json"
    run(capsys, "solve", "--seed", 1, "--out", grasp_file, toy)
    code, out, err = run(capsys, "exact", "--compare", grasp_file, toy)
    assert json.loads(out)["deviation_pct"] == 0.0
    assert "0.000%" in err


def test_exact_refusal(tmp_path, capsys):
    run(capsys, "generate", "--n", 100, "--m", 200, "--p", 10, "--budget", 50, "--out", tmp_path)
    path = next(tmp_path.glob("*.ipmu"))
    code, out, err = run(capsys, "exact", path)
    assert code == 1 and out == ""
    assert str(comb(100, 10)) in err


def test_bad_instance_reports_context(tmp_path, capsys):
    path = tmp_path / "bad.ipmu"
    path.write_text("IPMU 1\n3 1 1 0\n1 1\n2 1\n3 1\n1 2 1 1 1\n")
    code, _, err = run(capsys, "solve", path)
    assert code == 1 and "unreachable" in err and "bad.ipmu" in err
    path.write_text("IPMU 1\n3 1 1 0\n1 1\n2 1\n")
    code, _, err = run(capsys, "exact", path)
    assert code == 1 and "expected 3 node lines" in err


def test_ssg_outputs(tmp_path, capsys):
    inst = worked_example()
    path = tmp_path / "ex.ipmu"
    save_instance(inst, path)
    dot = tmp_path / "ex.dot"
    code, out, err = run(capsys, "ssg", "--dot", dot, path)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert sum(int(r["basin_size"]) for r in rows) == 10
    assert "nodes=10" in err
    assert dot.read_text().startswith("digraph SSG {")


def test_bench_table(tmp_path, capsys):
    inst_dir = tmp_path / "inst"
    for kind in "PR":
        run(capsys, "generate", "--n", 10, "--density", 0.3, "--p", 2, "--budget", 50, "--type", kind,
            "--count", 3, "--seed", 5, "--out", inst_dir)
    tables = []
    for _ in range(2):
        code, out, _ = run(capsys, "bench", inst_dir, "--algorithms", "grasp,kh,exact", "--threads", 1,
                           "--runs", tmp_path / "runs.csv")
        assert code == 0
        tables.append(list(csv.DictReader(io.StringIO(out))))
    assert [(r["type"], r["algorithm"]) for r in tables[0]] == [
        ("P", "grasp"), ("P", "kh"), ("P", "exact"), ("R", "grasp"), ("R", "kh"), ("R", "exact"),
    ]
    strip = lambda rows: [{k: v for k, v in r.items() if k != "avg_time_s"} for r in rows]
    assert strip(tables[0]) == strip(tables[1])
    for r in tables[0]:
        if r["algorithm"] == "exact":
            assert float(r["dev_pct"]) == 0.0 and r["n_opt"] == "3"
    runs = list(csv.DictReader(open(tmp_path / "runs.csv")))
    assert len(runs) == 18 and all(r["status"] == "ok" for r in runs)


def test_bench_single_instance_average(tmp_path, capsys, l3):
    save_instance(l3, tmp_path / "one.ipmu", comments=["type: P"])
    code, out, _ = run(capsys, "bench", tmp_path, "--algorithms", "kh", "--threads", 1)
    (row,) = csv.DictReader(io.StringIO(out))
    assert float(row["avg_objective"]) == 3.0 and row["n_best"] == "1"


def test_bench_partial_failure_continues(tmp_path, capsys, l3):
    save_instance(l3, tmp_path / "a.ipmu", comments=["type: P"])
    (tmp_path / "b.ipmu").write_text("IPMU 1\nbroken\n")
    code, out, err = run(capsys, "bench", tmp_path, "--algorithms", "kh", "--threads", 1)
    assert code == 1 and "b.ipmu" in err
    assert len(list(csv.DictReader(io.StringIO(out)))) == 1


def test_bench_threads_invariant(tmp_path, capsys):
    run(capsys, "generate", "--n", 9, "--density", 0.4, "--p", 2, "--budget", 30, "--type", "R",
        "--count", 3, "--out", tmp_path)
    outs = []
    for threads in (1, 2):
        _, out, _ = run(capsys, "bench", tmp_path, "--threads", threads, "--runs", tmp_path / f"r{threads}.csv")
        outs.append([ln.split(",")[:-1] for ln in (tmp_path / f"r{threads}.csv").read_text().splitlines()])
    drop_time = lambda rows: [r[:5] + r[6:] for r in rows]
    assert drop_time(outs[0]) == drop_time(outs[1])


def test_module_entry_point(toy):
    proc = subprocess.run([sys.executable, "-m", "ipmu", "solve", "--algorithm", "kh", str(toy)],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout)["objective"] == 3.0
