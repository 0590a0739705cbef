import json
import shutil

import numpy as np
import pytest

from brakekit.cli import main

MILD_CONFIG = {
    "dim": 1,
    "theta": ["0.3"],
    "lagrangian": {"builtin": "kinetic_potential",
                   "potential": "cos(2*pi*q1)/(4*pi**2)"},
    "numerics": {"grid": 128},
}
FREE_CONFIG = {"dim": 1, "lagrangian": {"builtin": "kinetic_potential"},
               "numerics": {"grid": 128}}


def write_config(tmp_path, doc, name="system.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def mild_store(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = write_config(tmp, MILD_CONFIG)
    store = str(tmp / "store")
    code = main(["--store", store, "find-orbits", "--config", cfg,
                 "--period", "1", "--seeds", "8", "--seed", "0"])
    assert code == 0
    return tmp, cfg, store


def load_records(store):
    import glob

    out = []
    for p in sorted(glob.glob(f"{store}/orbits/*.json")):
        with open(p) as fh:
            out.append(json.load(fh))
    return out


def test_find_orbits_pendulum_finds_both_constants(mild_store):
    _, _, store = mild_store
    records = load_records(store)
    q_starts = sorted(round(r["q0"][0] % 1.0, 6) % 1.0 for r in records)
    assert any(abs(q) < 1e-6 or abs(q - 1) < 1e-6 for q in q_starts)
    assert any(abs(q - 0.5) < 1e-6 for q in q_starts)
    for r in records:
        assert r["brake_residual"] < 1e-6
        assert r["full_gradient_norm"] < 1e-8


def test_find_orbits_free_particle(tmp_path):
    cfg = write_config(tmp_path, FREE_CONFIG)
    store = str(tmp_path / "store")
    assert main(["--store", store, "find-orbits", "--config", cfg,
                 "--period", "1", "--seeds", "4", "--seed", "3"]) == 0
    for r in load_records(store):
        assert abs(r["mean_action"]) < 1e-10
        vals = np.asarray(r["half_values"])
        assert np.ptp(vals) < 1e-6  # constant loops only


def test_index_command(mild_store):
    tmp, cfg, store = mild_store
    records = load_records(store)
    oid = records[0]["id"]
    assert main(["--store", store, "index", "--config", cfg,
                 "--orbit", oid, "--k", "1,2"]) == 0
    report = json.load(open(f"{store}/reports/index_{oid}.json"))
    assert report["all_pass"]


def test_index_rejects_tampered_orbit(mild_store, tmp_path):
    tmp, cfg, store = mild_store
    store2 = str(tmp_path / "tampered")
    shutil.copytree(store, store2)
    records = load_records(store2)
    rec = records[0]
    rec["half_values"] = [[v[0] + 0.02 * np.sin(7 * i)] for i, v in
                          enumerate(rec["half_values"])]
    with open(f"{store2}/orbits/{rec['id']}.json", "w") as fh:
        json.dump(rec, fh)
    code = main(["--store", store2, "index", "--config", cfg,
                 "--orbit", rec["id"], "--k", "1"])
    assert code == 2


def test_no_convergence_exit_code(tmp_path):
    cfg = write_config(tmp_path, MILD_CONFIG)
    code = main(["--store", str(tmp_path / "s"), "find-orbits", "--config", cfg,
                 "--period", "1", "--seeds", "0"])
    assert code == 3


def test_schema_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"dim": 0, "lagrangian": {"builtin": "kinetic_potential"}}))
    with pytest.raises(SystemExit) as err:
        main(["--store", str(tmp_path / "s"), "find-orbits", "--config", str(bad)])
    assert err.value.code == 2


def test_modify_check_command(mild_store):
    tmp, cfg, store = mild_store
    assert main(["--store", store, "modify-check", "--config", cfg,
                 "--T", "2,4"]) == 0
    report = json.load(open(f"{store}/reports/modification.json"))
    assert report["all_pass"]


def test_bangert_command(tmp_path):
    cfg = write_config(tmp_path, FREE_CONFIG)
    store = str(tmp_path / "store")
    code = main(["--store", store, "bangert", "--config", cfg,
                 "--family", "two-constant", "--n", "2,8",
                 "--c1", "0.06", "--c2", "1.0", "--eps", "0.032"])
    assert code == 0
    report = json.load(open(f"{store}/reports/bangert_two-constant.json"))
    assert report["passed"]
    assert report["homotopy"]["certificates"]["ii"]


def test_determinism_byte_identical(tmp_path):
    cfg = write_config(tmp_path, MILD_CONFIG)
    outs = []
    for name in ("a", "b"):
        store = str(tmp_path / name)
        assert main(["--store", store, "find-orbits", "--config", cfg,
                     "--period", "1", "--seeds", "3", "--seed", "5"]) == 0
        recs = {}
        import glob

        for p in sorted(glob.glob(f"{store}/orbits/*")):
            recs[p.split("/")[-1]] = open(p, "rb").read()
        outs.append(recs)
    assert outs[0] == outs[1]


def test_export_command(mild_store, tmp_path):
    _, cfg, store = mild_store
    out = str(tmp_path / "exported")
    assert main(["--store", store, "export", "--out", out]) == 0
    import glob

    assert glob.glob(f"{out}/*.csv") and glob.glob(f"{out}/*.json")
