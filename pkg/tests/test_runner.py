import csv
import hashlib
import io
import json

import pytest

from dflab.runner import ConfigError, check_config, list_presets, load_config
from dflab.runner.cli import OUTPUT_ENV, main, run
from dflab.runner.config import read_config


def _write(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def _small(**over):
    d = {
        "schema_version": 1,
        "experiment": "dynamics",
        "lattice": {"kind": "Ring1D", "n_matter": 3},
        "trotter": {"J": 1.0, "h": 1.3, "mu": 1.5, "dt": 0.25, "order": 2, "cycles": 3},
        "initial_state": {"matter": "AllPlusZ", "gauge": "Aligned", "flips": [1]},
        "engine": {"kind": "statevector"},
        "seed": 5,
    }
    d.update(over)
    return d


def _csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_presets_list(capsys):
    assert main(["presets", "list"]) == 0
    out = capsys.readouterr().out
    names = [n for n, _ in list_presets()]
    assert {"fig1-desk", "fig4-desk", "fig1-dual"} <= set(names)
    for n in names:
        assert n in out
        cfg, problems, capacity = check_config(read_config(n))
        assert not problems and not capacity, n


def test_validate_ok(capsys):
    assert main(["validate", "fig1-desk"]) == 0
    assert capsys.readouterr().out.startswith("ok dynamics ")


def test_validate_missing_chi(tmp_path, capsys):
    p = _write(tmp_path, _small(engine={"kind": "mps"}))
    assert main(["validate", p]) == 2
    assert "engine/chi" in capsys.readouterr().out


def test_validate_capacity(tmp_path, capsys):
    p = _write(tmp_path, _small(lattice={"kind": "Ring1D", "n_matter": 20}))
    assert main(["validate", p]) == 3
    out = capsys.readouterr().out
    assert "capacity error" in out and "40" in out


def test_validate_lists_all_problems(tmp_path, capsys):
    d = _small(engine={"kind": "mps"})
    d["initial_state"]["flips"] = [9]
    assert main(["validate", _write(tmp_path, d)]) == 2
    out = capsys.readouterr().out
    assert "engine/chi" in out and "flips" in out


def test_schema_field_messages(tmp_path):
    d = _small()
    d["trotter"]["order"] = 3
    del d["seed"]
    with pytest.raises(ConfigError) as e:
        load_config(_write(tmp_path, d))
    msg = str(e.value)
    assert "trotter/order" in msg and "seed" in msg


def test_bad_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{")
    assert main(["run", str(p)]) == 2
    assert main(["validate", str(tmp_path / "nope.json")]) == 2


def test_run_capacity_exit(tmp_path):
    p = _write(tmp_path, _small(lattice={"kind": "Ring1D", "n_matter": 20}))
    assert main(["run", p, "--output-root", str(tmp_path)]) == 3


def test_fig1_desk_energy_csv(tmp_path):
    d = run(load_config("fig1-desk"), str(tmp_path), figures=False, stream=io.StringIO())
    rows = _csv_rows((d / "energy.csv").read_text())
    cycles = sorted({int(r["cycle"]) for r in rows})
    assert cycles == list(range(21))
    assert {int(r["link"]) for r in rows} == set(range(8))


def test_fig4_desk_entropy_csv(tmp_path):
    cfg = load_config("fig4-desk")
    assert cfg.trotter.order == 1 and cfg.trotter.dt == 0.4
    d = run(cfg, str(tmp_path), figures=False, stream=io.StringIO())
    rows = _csv_rows((d / "entropy.csv").read_text())
    assert {"cycle", "L", "raw", "mitigated"} <= set(rows[0])
    assert {int(r["L"]) for r in rows} == {2, 4, 6, 8}
    assert all(float(r["raw"]) >= -1e-10 for r in rows)


def test_zero_cycles_gives_cycle_zero_only(tmp_path):
    d = _small()
    d["trotter"]["cycles"] = 0
    out = run(load_config(_write(tmp_path, d)), str(tmp_path / "o"), figures=False, stream=io.StringIO())
    rows = _csv_rows((out / "energy.csv").read_text())
    assert {r["cycle"] for r in rows} == {"0"}


def test_byte_identical_and_manifest(tmp_path):
    p = _write(tmp_path, _small(name="det"))
    a = run(load_config(p), str(tmp_path / "a"), stream=io.StringIO())
    b = run(load_config(p), str(tmp_path / "b"), stream=io.StringIO())
    files = sorted(x.name for x in a.iterdir() if x.name != "manifest.json")
    assert files == sorted(x.name for x in b.iterdir() if x.name != "manifest.json")
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    man = json.loads((a / "manifest.json").read_text())
    assert sorted(man["files"]) == files
    for f, h in man["files"].items():
        assert hashlib.sha256((a / f).read_bytes()).hexdigest() == h
    assert man["seed"] == 5 and len(man["config_hash"]) == 64
    assert "wall_time_s" in man and "version" in man


def test_output_root_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    p = _write(tmp_path, _small(name="envrun"))
    assert main(["run", p, "--no-figures"]) == 0
    assert (tmp_path / "env" / "envrun" / "manifest.json").is_file()
    assert "----- BEGIN energy.csv -----" in capsys.readouterr().out
