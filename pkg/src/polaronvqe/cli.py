"""Command-line front end: sweeps, noisy runs, tomography and dumps.

Subcommands: ``sweep``, ``noisy-vqe``, ``wigner``, ``dump``, ``exact``.
Every CSV starts with one comment line recording the resolved-config hash
and master seed, so identical configs and seeds give byte-identical files.
Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import AnsatzSpec, build_ansatz
from .config import ExperimentConfig, default_config_text, load_config
from .encoding import QubitLayout, encode_hamiltonian
from .errors import ConfigError, PolaronVqeError
from .model import build_fock_hamiltonian
from .vqe import (SpsaConfig, encoded_groundstate, encoded_groundstate_energy,
                  error_metrics, exact_reference_energy, polaron_baseline,
                  run_vqe)
from .wigner import WignerGrid, delta_w_curve, exact_wigner_field, sample_wigner


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def _write_csv(path: Path, header: list[str], rows: list[list], cfg: ExperimentConfig,
               seed: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# config_hash={cfg.text_hash} seed={seed}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _pool_map(fn, jobs, threads: int):
    """Run jobs (index, payload) on a small pool; results come back in job
    order regardless of completion order."""
    if threads <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


# ---------------------------------------------------------------------------
# subcommands

def cmd_sweep(cfg: ExperimentConfig, out_dir: Path, seed: int, threads: int) -> int:
    trunc = cfg.truncation()
    ref = cfg.reference_truncation()
    gs = cfg["model"]["g_over_omega"]
    depths = cfg["ansatz"]["trotter_depths"]
    refine_steps = cfg["optimizer"]["refine_steps"]
    restarts = cfg["optimizer"]["restarts"]
    per_photon = cfg["ansatz"]["per_photon_parameters"]

    def point(job):
        d, g = job
        model = cfg.model_for(g)
        res = run_vqe(model, trunc, d, per_photon=per_photon,
                      refine_steps=refine_steps, restarts=restarts, seed=seed,
                      reference=ref)
        baseline = polaron_baseline(model, trunc)
        return [g, d, res.energy, res.meta["e_en"], res.meta["e_ex"],
                res.delta_en, res.delta_ex, baseline,
                res.meta["trials"], seed]

    jobs = [(d, g) for d in depths for g in gs]
    rows = _pool_map(point, jobs, threads)
    _write_csv(out_dir / "sweep.csv",
               ["g_over_omega", "d", "E_vqe", "E_en", "E_ex", "delta_en",
                "delta_ex", "baseline", "trials", "seed"],
               rows, cfg, seed)
    return 0


def cmd_exact(cfg: ExperimentConfig, out_dir: Path, seed: int, threads: int) -> int:
    trunc = cfg.truncation()
    ref = cfg.reference_truncation()

    def point(g):
        model = cfg.model_for(g)
        e_en = encoded_groundstate_energy(model, trunc)
        e_ex = exact_reference_energy(model, ref)
        baseline = polaron_baseline(model, trunc)
        _, d_ex = error_metrics(e_en, e_en, e_ex)
        return [g, e_en, e_ex, baseline, d_ex]

    rows = _pool_map(point, cfg["model"]["g_over_omega"], threads)
    _write_csv(out_dir / "exact.csv",
               ["g_over_omega", "E_en", "E_ex", "baseline", "delta_ex"],
               rows, cfg, seed)
    return 0


def cmd_noisy_vqe(cfg: ExperimentConfig, out_dir: Path, seed: int, threads: int) -> int:
    trunc = cfg.truncation()
    ref = cfg.reference_truncation()
    opt = cfg["optimizer"]
    noise_cfg = cfg["noise"]
    shots = opt["shots"] if opt["shots"] > 0 else 1024
    mitigate = noise_cfg["mitigation"]
    postselect = noise_cfg["postselect"]
    depth = cfg["ansatz"]["trotter_depths"][0]

    def cell(job):
        g, lam, rep = job
        model = cfg.model_for(g)
        run_seed = seed + 1000 * rep
        spsa = SpsaConfig(max_trials=opt["max_trials"],
                          a=None if opt["spsa_a"] <= 0 else opt["spsa_a"],
                          c=opt["spsa_c"], alpha=opt["alpha"], gamma=opt["gamma"],
                          stability_offset=None if opt["stability_offset"] < 0
                          else opt["stability_offset"],
                          seed=run_seed)
        res = run_vqe(model, trunc, depth, shots=shots,
                      noise=cfg.noise_model(lam), mitigate=mitigate,
                      postselect_shots=postselect, spsa=spsa, restarts=1,
                      seed=run_seed, reference=ref)
        retention = res.meta.get("retention")
        return [g, lam, rep, run_seed, shots, mitigate, postselect,
                res.energy, res.meta["e_en"], res.delta_en,
                -1.0 if retention is None else retention]

    jobs = [(g, lam, rep)
            for g in cfg["model"]["g_over_omega"]
            for lam in noise_cfg["lambda_scales"]
            for rep in range(noise_cfg["seeds"])]
    rows = _pool_map(cell, jobs, threads)
    _write_csv(out_dir / "noisy_vqe.csv",
               ["g_over_omega", "lambda", "rep", "seed", "shots", "mitigation",
                "postselect", "E_vqe", "E_en", "delta_en", "retention"],
               rows, cfg, seed)
    return 0


def cmd_wigner(cfg: ExperimentConfig, out_dir: Path, seed: int, threads: int) -> int:
    tomo = cfg["tomography"]
    model = cfg.model_for(cfg["model"]["g_over_omega"][-1])
    trunc = cfg.truncation()
    layout = QubitLayout.for_model(model, trunc)
    grid = WignerGrid.square(extent=tomo["extent"], points=tomo["points"],
                             n_modes=model.n_modes,
                             atom_labels=tomo["atom_labels"])
    if tomo["source"] == "vqe":
        res = run_vqe(model, trunc, tomo["vqe_depth"],
                      refine_steps=cfg["optimizer"]["refine_steps"],
                      restarts=cfg["optimizer"]["restarts"], seed=seed,
                      compute_metrics=False)
        spec = AnsatzSpec(model=model, trunc=trunc,
                          trotter_depths=tomo["vqe_depth"])
        state = build_ansatz(spec).prepare(res.theta)
    else:
        _, state = encoded_groundstate(model, trunc)

    ref_trunc = cfg.reference_truncation()
    from .model import exact_groundstate as _eg
    _, ref_state = _eg(build_fock_hamiltonian(model, ref_trunc))
    exact = exact_wigner_field(ref_state, ref_trunc, grid)

    radii = tomo["error_radii"]
    curve_rows = []
    re_ax = np.asarray(grid.re_axes[0])
    im_ax = np.asarray(grid.im_axes[0])
    for d in tomo["trotter_depths"]:
        field = sample_wigner(state, layout, grid, d,
                              shots=tomo["shots"], seed=seed)
        rows = []
        for i, re in enumerate(re_ax):
            for j, im in enumerate(im_ax):
                rows.append([re, im, field.values[i, j], exact[i, j],
                             field.retention[i, j]])
        _write_csv(out_dir / f"wigner_d{d}.csv",
                   ["re_alpha", "im_alpha", "w_sampled", "w_exact", "retention"],
                   rows, cfg, seed)
        for r, err in zip(radii, delta_w_curve(field.values, exact, grid, radii)):
            curve_rows.append([d, r, err])
    _write_csv(out_dir / "wigner_error.csv", ["d", "alpha_max", "delta_w"],
               curve_rows, cfg, seed)
    return 0


def cmd_dump(cfg: ExperimentConfig, out_dir: Path, seed: int, threads: int) -> int:
    g = cfg["model"]["g_over_omega"][-1]
    model = cfg.model_for(g)
    trunc = cfg.truncation()
    layout = QubitLayout.for_model(model, trunc)
    out_dir.mkdir(parents=True, exist_ok=True)
    _dump_hamiltonian(cfg, out_dir, model, trunc, layout)

    spec = AnsatzSpec(model=model, trunc=trunc,
                      trotter_depths=cfg["ansatz"]["trotter_depths"][-1],
                      per_photon_parameters=cfg["ansatz"]["per_photon_parameters"])
    circuit = build_ansatz(spec)
    lines = [f"# circuit: initial={circuit.initial_label} "
             f"qubits={circuit.n_qubits} params={circuit.n_params}"]
    for gate in circuit.prep_gates:
        lines.append(f"prep_x qubits={','.join(map(str, gate.qubits))}")
    for entry in circuit.template:
        if entry[0] == "fixed":
            lines.append(f"entangle_ee qubits={','.join(map(str, entry[1].qubits))}")
        elif entry[0] == "ry":
            lines.append(f"ry qubit={entry[2]} slot={entry[1]} "
                         f"name={circuit.slots[entry[1]].name}")
        else:
            _, slot, qubits, weight = entry
            lines.append(f"cbond qubits={','.join(map(str, qubits))} slot={slot} "
                         f"name={circuit.slots[slot].name} weight={_fmt(weight)}")
    (out_dir / "circuit.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    lay_lines = [f"# layout: atoms={layout.n_atoms} modes={layout.n_modes} "
                 f"qubits={layout.total_qubits}",
                 "# convention: qubit q is bit q of the basis index; "
                 "atom |g> encodes as qubit |1>; register slot n holds photon number n"]
    for i in range(layout.n_atoms):
        lay_lines.append(f"atom {i} qubit={layout.atom_qubit(i)}")
    for k in range(layout.n_modes):
        reg = layout.mode_register(k)
        lay_lines.append(f"mode {k} qubits={reg.start}..{reg.stop - 1} "
                         f"max_photons={layout.max_photons[k]}")
    (out_dir / "layout.txt").write_text("\n".join(lay_lines) + "\n", encoding="utf-8")
    return 0


def _dump_hamiltonian(cfg, out_dir: Path, model, trunc, layout) -> None:
    ham = encode_hamiltonian(model, trunc, layout)
    lines = [f"# encoded hamiltonian: qubits={layout.total_qubits} "
             f"terms={ham.n_terms} (coeff_re coeff_im atoms|registers)"]
    lines += ham.to_lines(layout)
    (out_dir / "hamiltonian.txt").write_text("\n".join(lines) + "\n",
                                             encoding="utf-8")


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polaronvqe",
        description="Polaron-ansatz VQE sweeps and Wigner tomography for "
                    "ultrastrong-coupling light-matter models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
            ("sweep", "noiseless VQE sweep over coupling strengths"),
            ("noisy-vqe", "shot-based SPSA runs under scaled noise"),
            ("wigner", "sampled and exact Wigner fields plus error curves"),
            ("dump", "write Hamiltonian / circuit / layout text dumps"),
            ("exact", "reference energies only (no VQE)"),
            ("print-config", "print the default config with documentation")]:
        p = sub.add_parser(name, help=help_text)
        if name != "print-config":
            p.add_argument("--config", required=True, help="INI config path")
            p.add_argument("--out", default="out", help="output directory")
            p.add_argument("--seed", type=int, default=None,
                           help="override [run] seed")
            p.add_argument("--threads", type=int, default=None,
                           help="override [run] threads")
            p.add_argument("--dump-hamiltonian", action="store_true",
                           help="also write hamiltonian.txt")
    return parser


_RUNNERS = {
    "sweep": cmd_sweep,
    "noisy-vqe": cmd_noisy_vqe,
    "wigner": cmd_wigner,
    "dump": cmd_dump,
    "exact": cmd_exact,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "print-config":
        sys.stdout.write(default_config_text())
        return 0
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    seed = args.seed if args.seed is not None else cfg["run"]["seed"]
    threads = args.threads if args.threads is not None else cfg["run"]["threads"]
    out_dir = Path(args.out)
    try:
        rc = _RUNNERS[args.command](cfg, out_dir, seed, threads)
        if args.dump_hamiltonian and args.command != "dump":
            g = cfg["model"]["g_over_omega"][-1]
            model = cfg.model_for(g)
            trunc = cfg.truncation()
            _dump_hamiltonian(cfg, out_dir, model, trunc,
                              QubitLayout.for_model(model, trunc))
        return rc
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (PolaronVqeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
