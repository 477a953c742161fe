"""Config parsing, CSV emission, reproducibility, golden dumps."""

import math
from pathlib import Path

import numpy as np
import pytest

from polaronvqe import cli
from polaronvqe.config import ConfigError, default_config_text, load_config

TINY_SWEEP = """
[model]
n_atoms = 1
n_modes = 1
g_over_omega = 0.0,0.4,0.8

[truncation]
max_photons = 1
reference_max_photons = 20

[ansatz]
trotter_depths = 1

[optimizer]
restarts = 1
refine_steps = 30

[run]
seed = 7
"""

TINY_WIGNER = """
[model]
g_over_omega = 1.0

[truncation]
max_photons = 3
reference_max_photons = 30

[tomography]
extent = 1.5
points = 7
trotter_depths = 2,4
error_radii = 0.5,1.0,1.5

[run]
seed = 5
"""

TINY_NOISY = """
[model]
g_over_omega = 0.5

[truncation]
max_photons = 1

[ansatz]
trotter_depths = 1

[optimizer]
max_trials = 8
shots = 128
restarts = 1

[noise]
lambda_scales = 0.0,1.0
seeds = 2

[run]
seed = 3
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_rows(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return header, rows


# ---------------------------------------------------------------------------
# config

def test_default_config_parses():
    cfg = load_config(text=default_config_text())
    assert cfg["model"]["n_atoms"] == 1
    assert cfg["optimizer"]["max_trials"] == 150
    assert len(cfg["model"]["g_over_omega"]) == 11


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(text="[model]\nn_atom = 2\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(text="[models]\nn_atoms = 2\n")


def test_bad_values_rejected():
    with pytest.raises(ConfigError):
        load_config(text="[model]\nn_atoms = zero\n")
    with pytest.raises(ConfigError):
        load_config(text="[ansatz]\ntrotter_depths = 0\n")
    with pytest.raises(ConfigError):
        load_config(text="[tomography]\natom_labels = q\n")


def test_sweep_range_syntax():
    cfg = load_config(text="[model]\ng_over_omega = 0.0:1.0:5\n")
    assert cfg["model"]["g_over_omega"] == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_config_hash_tracks_content():
    a = load_config(text=TINY_SWEEP)
    b = load_config(text=TINY_SWEEP)
    c = load_config(text=TINY_SWEEP.replace("seed = 7", "seed = 8"))
    assert a.text_hash == b.text_hash
    assert a.text_hash != c.text_hash


def test_missing_file_is_config_error(tmp_path, capsys):
    rc = cli.main(["sweep", "--config", str(tmp_path / "nope.ini")])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# subcommands

def test_sweep_outputs_and_values(tmp_path):
    cfg_path = write(tmp_path, TINY_SWEEP)
    rc = cli.main(["sweep", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 0
    header, rows = read_rows(tmp_path / "o" / "sweep.csv")
    assert header == ["g_over_omega", "d", "E_vqe", "E_en", "E_ex", "delta_en",
                      "delta_ex", "baseline", "trials", "seed"]
    assert len(rows) == 3
    by_g = {float(r[0]): r for r in rows}
    assert float(by_g[0.0][2]) == pytest.approx(-0.5, abs=1e-9)
    assert float(by_g[0.0][3]) == pytest.approx(-0.5, abs=1e-9)
    # single-bond family solves the encoded problem to numerical accuracy
    for g, row in by_g.items():
        assert float(row[5]) < 1e-7


def test_sweep_reproducible_and_thread_invariant(tmp_path):
    cfg_path = write(tmp_path, TINY_SWEEP)
    outs = []
    for i, threads in enumerate((1, 1, 2)):
        out = tmp_path / f"o{i}"
        rc = cli.main(["sweep", "--config", cfg_path, "--out", str(out),
                       "--threads", str(threads)])
        assert rc == 0
        outs.append((out / "sweep.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]


def test_exact_subcommand(tmp_path):
    cfg_path = write(tmp_path, TINY_SWEEP)
    rc = cli.main(["exact", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 0
    header, rows = read_rows(tmp_path / "o" / "exact.csv")
    assert header == ["g_over_omega", "E_en", "E_ex", "baseline", "delta_ex"]
    assert float(rows[0][1]) == pytest.approx(-0.5, abs=1e-10)


def test_noisy_vqe_smoke(tmp_path):
    cfg_path = write(tmp_path, TINY_NOISY)
    rc = cli.main(["noisy-vqe", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 0
    header, rows = read_rows(tmp_path / "o" / "noisy_vqe.csv")
    assert len(rows) == 2 * 2      # lambdas x seeds
    lam0 = [float(r[9]) for r in rows if float(r[1]) == 0.0]
    lam1 = [float(r[9]) for r in rows if float(r[1]) == 1.0]
    # noiseless rows recover the encoded energy within shot noise
    assert np.median(lam0) < np.median(lam1) + 0.05


def test_wigner_subcommand(tmp_path):
    cfg_path = write(tmp_path, TINY_WIGNER)
    rc = cli.main(["wigner", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 0
    for d in (2, 4):
        header, rows = read_rows(tmp_path / "o" / f"wigner_d{d}.csv")
        assert header == ["re_alpha", "im_alpha", "w_sampled", "w_exact",
                          "retention"]
        assert len(rows) == 7 * 7
        mid = [r for r in rows if float(r[0]) == 0.0 and float(r[1]) == 0.0]
        assert float(mid[0][4]) == 1.0
    header, rows = read_rows(tmp_path / "o" / "wigner_error.csv")
    errs = {(int(r[0]), float(r[1])): float(r[2]) for r in rows}
    # deeper displacement circuits track the exact field at least as well
    assert errs[(4, 1.5)] <= errs[(2, 1.5)] + 1e-9


def test_dump_golden_files(tmp_path):
    cfg_path = write(tmp_path, """
[model]
g_over_omega = 0.5

[truncation]
max_photons = 1

[ansatz]
trotter_depths = 1
""")
    rc = cli.main(["dump", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 0
    ham = (tmp_path / "o" / "hamiltonian.txt").read_text().splitlines()
    # reviewed by hand against the encoded-Hamiltonian formulas:
    #   0.5 Z_atom + 1.0 * (I - Z_slot1)/2 + 0.25 (X XX + X YY)
    assert ham[1:] == [
        "0.5 0 I II",
        "-0.5 0 I IZ",
        "0.25 0 X XX",
        "0.25 0 X YY",
        "0.5 0 Z II",
    ]
    circ = (tmp_path / "o" / "circuit.txt").read_text().splitlines()
    assert circ[1:] == [
        "prep_x qubits=0",
        "prep_x qubits=1",
        "cbond qubits=0,1,2 slot=0 name=f[i=0,k=0,s=1] weight=1",
    ]
    layout = (tmp_path / "o" / "layout.txt").read_text().splitlines()
    assert layout[2:] == [
        "atom 0 qubit=0",
        "mode 0 qubits=1..2 max_photons=1",
    ]


def test_dump_hamiltonian_flag(tmp_path):
    cfg_path = write(tmp_path, TINY_SWEEP)
    rc = cli.main(["exact", "--config", cfg_path, "--out", str(tmp_path / "o"),
                   "--dump-hamiltonian"])
    assert rc == 0
    assert (tmp_path / "o" / "hamiltonian.txt").exists()


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg_path = write(tmp_path, TINY_NOISY.replace("[noise]",
                                                  "[noise]\nreadout_p01 = 0.6\nreadout_p10 = 0.6"))
    rc = cli.main(["noisy-vqe", "--config", cfg_path, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "numerical failure" in capsys.readouterr().err
