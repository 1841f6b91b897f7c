import json
from pathlib import Path

import pytest

from kcmlab.cli import main

ZOO = Path(__file__).resolve().parents[1] / "src" / "kcmlab" / "zoo"


def zoo_path(name):
    return str(ZOO / f"{name}.family")


def test_classify_exit_codes(capsys, tmp_path):
    assert main(["classify", zoo_path("duarte")]) == 0
    out = capsys.readouterr().out
    assert "critical" in out and "(2,4,0)" in out
    bad = tmp_path / "bad.family"
    bad.write_text("{not json")
    assert main(["classify", str(bad)]) == 2


def test_classify_json(capsys):
    assert main(["classify", zoo_path("fa2f"), "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["class"] == "g_isotropic"
    assert data["exponents"] == [1, 0, 0]
    assert data["alpha"] == 1.0


def test_closure_command(tmp_path, capsys):
    init = tmp_path / "init.json"
    init.write_text("[[0,0],[1,1]]")
    out = tmp_path / "closure.json"
    assert main(["closure", zoo_path("fa2f"), str(init),
                 "--window-radius", "4", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert sorted(map(tuple, data["final_sites"])) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert data["rounds"] == 1
    assert "infected = true" in data["convention"]
    total = sum(r[0] for r in data["grid_rle_rows"][0])
    assert total == 9


def test_simulate_csv_determinism(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    args = ["estimate", zoo_path("fa2f"), "--q", "0.8", "--L", "12",
            "--tmax", "50", "--replicates", "30", "--seed", "5"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    c1 = (tmp_path / "a.csv").read_text()
    c2 = (tmp_path / "b.csv").read_text()
    assert c1 == c2
    man = json.loads((tmp_path / "a.manifest.json").read_text())
    assert f"# manifest_hash: {man['hash']}" in c1
    header = c1.splitlines()[2].split(",")
    assert header == ["family", "q", "L", "t_max", "replicates", "seed",
                      "mean_tau", "ci_low", "ci_high", "censored",
                      "effective_events_total"]


def test_seed_required(capsys):
    with pytest.raises(SystemExit):
        main(["estimate", zoo_path("fa2f"), "--q", "0.8", "--L", "12"])


def test_estimate_prob_w_helping(tmp_path, capsys):
    rc = main(["estimate-prob", zoo_path("fa2f"), "--mode", "w-helping",
               "--q", "0.3", "--samples", "400", "--seed", "2",
               "--segment-sites", "30", "--W", "2"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    row = lines[1].split(",")
    p_hat, lo, hi, oracle = float(row[3]), float(row[4]), float(row[5]), float(row[6])
    assert lo <= oracle <= hi or abs(p_hat - oracle) < 0.1


def test_estimate_prob_tower_class_gate(capsys):
    rc = main(["estimate-prob", zoo_path("duarte"), "--mode", "tower",
               "--tower", "iso", "--q", "0.5", "--samples", "150", "--seed", "3"])
    assert rc == 2
    assert "incompatible" in capsys.readouterr().err


def test_estimate_prob_tower_iso(capsys):
    rc = main(["estimate-prob", zoo_path("fa2f"), "--mode", "tower",
               "--tower", "iso", "--q", "0.5", "--samples", "300", "--seed", "4",
               "--base-half-width", "1", "--rounds", "1"])
    assert rc == 0


def test_report_scientific_checks(tmp_path, capsys):
    from kcmlab.cli import write_csv, write_manifest

    header = ["family", "q", "L", "t_max", "replicates", "seed", "mean_tau",
              "ci_low", "ci_high", "censored", "effective_events_total"]
    man = {"experiment": "estimate_tau0", "q": [0.3, 0.2]}
    h = write_manifest(tmp_path / "s.manifest.json", man)
    rows = [["f", 0.3, 16, 10, 30, 1, "5.0", "4", "6", 0, 100],
            ["f", 0.2, 16, 10, 30, 1, "4.0", "3", "5", 0, 100]]
    write_csv(tmp_path / "s.csv", header, "u", rows, h)
    assert main(["report", str(tmp_path / "s.manifest.json")]) == 4
    assert "not increasing" in capsys.readouterr().out
    rows[1][6], rows[1][9] = "9.0", 2
    write_csv(tmp_path / "s.csv", header, "u", rows, h)
    assert main(["report", str(tmp_path / "s.manifest.json")]) == 4
    assert "censored" in capsys.readouterr().out
    rows[1][9] = 0
    write_csv(tmp_path / "s.csv", header, "u", rows, h)
    assert main(["report", str(tmp_path / "s.manifest.json")]) == 0


def test_report_roundtrip(tmp_path, capsys):
    out = tmp_path / "exp"
    main(["estimate", zoo_path("fa2f"), "--q", "0.8", "--L", "12",
          "--tmax", "20", "--replicates", "30", "--seed", "5",
          "--out", str(out)])
    man = str(tmp_path / "exp.manifest.json")
    assert main(["report", man]) == 0
    assert "PASS" in capsys.readouterr().out
    # corrupt the CSV: hash mismatch must fail with the experiment named
    csv = tmp_path / "exp.csv"
    csv.write_text(csv.read_text().replace(man and "manifest_hash: ",
                                           "manifest_hash: dead"))
    assert main(["report", man]) == 4
    assert "FAIL" in capsys.readouterr().out
    # empty manifest list is a usage error
    assert main(["report"]) == 2
