import numpy as np

from transmission.cli import (
    EXIT_BLOWUP,
    EXIT_CONFIG,
    EXIT_OK,
    build_problem,
    initial_state,
    main,
)
from transmission.config import parse_config_text

BASE = """
[geometry]
n = 8

[bulk_nonlinearity]
terms = 1.0:2.0

[interface_nonlinearity]
terms = 1.0:0.0

[time]
horizon = 0.2

[run]
seed = 3
"""

BLOWUP = """
[geometry]
n = 8

[bulk_nonlinearity]
terms = -1.0:2.0

[interface_nonlinearity]
terms = -1.0:0.0

[initial]
kind = eigenvector
scale = 25.0

[time]
horizon = 5.0
dt_max = 0.05

[run]
alpha = 3.0
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_spectrum_mode_artifact(tmp_path, capsys):
    code = main(["spectrum", "--config", write(tmp_path, BASE),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    rows = (tmp_path / "out" / "spectrum.csv").read_text().strip().splitlines()
    assert rows[0] == "k,lambda_k"
    assert len(rows) == 11


def test_spectrum_mode_with_smoothing_fit(tmp_path, capsys):
    cfg = write(tmp_path, "[geometry]\nn = 8\n\n[run]\nultra_fit = true\n", "ultra.ini")
    code = main(["spectrum", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    rows = (tmp_path / "out" / "ultracontractivity.csv").read_text().strip().splitlines()
    assert rows[0] == "t,norm_2_to_inf"
    assert len(rows) == 13


def test_config_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path, BASE + "\n[physics]\ns = 7\n")
    assert main(["spectrum", "--config", bad]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "s in (0, 1)" in err


def test_missing_config_file(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


def test_unresolvable_interface_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "[geometry]\nn = 8\ninterface = koch\nkoch_level = 3\n")
    assert main(["spectrum", "--config", cfg]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_simulate_completed(tmp_path, capsys):
    code = main(["simulate", "--config", write(tmp_path, BASE),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "OUTCOME,Completed," in out
    lines = (tmp_path / "out" / "trajectory.csv").read_text().strip().splitlines()
    assert lines[0] == "t,dt,sup_norm,l2_norm,E,G,dissipation_integral"
    assert lines[-1].startswith("OUTCOME,Completed,")
    # mesh export and fit summaries accompany every simulate run
    assert (tmp_path / "out" / "mesh" / "vertices.csv").exists()
    assert (tmp_path / "out" / "mesh" / "interface_measure.csv").exists()
    diag = (tmp_path / "out" / "diagnostics.txt").read_text()
    assert "energy_inequality_max_residual=" in diag
    assert "moser_ratio=" in diag


def test_simulate_blowup_exit_code(tmp_path, capsys):
    code = main(["simulate", "--config", write(tmp_path, BLOWUP),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_BLOWUP
    out = capsys.readouterr().out
    assert "OUTCOME,BlowUp," in out


def test_classify_writes_verdict(tmp_path, capsys):
    code = main(["classify", "--config", write(tmp_path, BASE),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    assert "VERDICT,GlobalBounded,bulk-sink-dominates" in capsys.readouterr().out
    assert (tmp_path / "out" / "verdict.txt").exists()
    assert (tmp_path / "out" / "constants.txt").exists()


def test_constants_mode(tmp_path):
    code = main(["constants", "--config", write(tmp_path, BASE),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    text = (tmp_path / "out" / "constants.txt").read_text()
    assert "poincare_l2=" in text
    assert "c_bar=" in text


SWEEP = """
[geometry]
n = 8

[initial]
kind = expression
expression = sin(pi*x)*sin(pi*y)

[sweep]
p_values = 0,1
q_values = 1,2,3
"""


def test_sweep_diagram_and_determinism(tmp_path):
    cfg = write(tmp_path, SWEEP)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a" / "regime_diagram.csv").read_bytes()
    b = (tmp_path / "b" / "regime_diagram.csv").read_bytes()
    assert a == b
    rows = a.decode().strip().splitlines()
    assert rows[0] == "p,q,c_f,c_h,verdict,rule"
    diagram = {tuple(r.split(",")[:2]): r.split(",")[4] for r in rows[1:]}
    # the sink-dominates cells (q > 2p with positive signs) are all bounded
    for (p, q), verdict in diagram.items():
        if float(q) > 2 * float(p):
            assert verdict == "GlobalBounded"


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = write(tmp_path, SWEEP)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "ser"),
                 "--jobs", "1"]) == EXIT_OK
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "par"),
                 "--jobs", "2"]) == EXIT_OK
    assert ((tmp_path / "ser" / "regime_diagram.csv").read_bytes()
            == (tmp_path / "par" / "regime_diagram.csv").read_bytes())


def test_sweep_resumes_from_partial_cells(tmp_path):
    cfg = write(tmp_path, SWEEP)
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    cells = sorted((out / "cells").glob("*.csv"))
    assert len(cells) == 6
    stamps = {c: c.stat().st_mtime_ns for c in cells}
    # removing one cell and rerunning recomputes only that cell
    cells[0].unlink()
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    for c in cells[1:]:
        assert c.stat().st_mtime_ns == stamps[c]
    assert cells[0].exists()


def test_env_override_applies(tmp_path, monkeypatch):
    monkeypatch.setenv("TRANSMISSION_RUN__SPECTRUM_COUNT", "4")
    code = main(["spectrum", "--config", write(tmp_path, BASE),
                 "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    rows = (tmp_path / "out" / "spectrum.csv").read_text().strip().splitlines()
    assert len(rows) == 5


def test_pairs_mode(tmp_path):
    cfg = write(tmp_path, BASE + "\n[pairs]\nhorizon = 2.0\n")
    code = main(["pairs", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    text = (tmp_path / "out" / "pairs.txt").read_text()
    assert "omega=" in text
    rows = (tmp_path / "out" / "pair_distance.csv").read_text().strip().splitlines()
    assert rows[0] == "t,dist2"


def test_initial_state_expression_and_eigenvector(tmp_path):
    cfg = parse_config_text(BASE)
    _, _, op, _, _ = build_problem(cfg)
    cfg.initial.kind = "expression"
    cfg.initial.expression = "x + 0*y"
    U = initial_state(cfg, op)
    assert np.allclose(U, op.mesh.vertices[op.free_dofs, 0])

    cfg.initial.kind = "eigenvector"
    cfg.initial.index = 1
    cfg.initial.scale = 2.0
    U = initial_state(cfg, op)
    from transmission.operators import spectrum

    phi1 = spectrum(op, k=1).eigenvectors[:, 0]
    assert np.allclose(U, 2.0 * phi1)


def test_initial_state_from_file(tmp_path):
    cfg = parse_config_text(BASE)
    _, _, op, _, _ = build_problem(cfg)
    path = tmp_path / "field.csv"
    full = np.arange(len(op.mesh.vertices), dtype=float)
    with open(path, "w") as fh:
        fh.write("vertex,value\n")
        for k, v in enumerate(full):
            fh.write(f"{k},{float(v)!r}\n")
    cfg.initial.kind = "file"
    cfg.initial.path = str(path)
    cfg.initial.scale = 1.0
    U = initial_state(cfg, op)
    assert np.allclose(U, full[op.free_dofs])


def test_determinism_of_simulate_csv(tmp_path):
    cfg = write(tmp_path, BASE)
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "r1"), "--seed", "9"])
    main(["simulate", "--config", cfg, "--out", str(tmp_path / "r2"), "--seed", "9"])
    a = (tmp_path / "r1" / "trajectory.csv").read_bytes()
    b = (tmp_path / "r2" / "trajectory.csv").read_bytes()
    assert a == b
