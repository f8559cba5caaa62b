"""Command-line front end.

Each subcommand resolves its options from built-in defaults, then the
``[common]`` and ``[<command>]`` sections of an optional INI file, then
explicit flags.  Outputs go to ``--out`` and carry the resolved run
configuration (CSV header comment or a ``config`` key in JSON).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import dos as dos_mod
from . import dynamics, quantum
from .model import ModelParams, auxiliary_f, classify_region, critical_energies
from .output import write_csv, write_json, write_matrix

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2

COMMON = {
    "omega": 1.0,
    "omega0": 1.0,
    "gamma": 0.0,
    "eta": 0.0,
    "j": 1.0,
    "seed": 0,
    "out": ".",
    "threads": 0,  # 0: machine parallelism
}

_SPECTRUM_OPTS = {
    "n_max": 40,
    "parity": "+1",
    "basis": "bare-Fock",
    "conv_tol": 1e-12,
    "window": 20,
    "max_dim": quantum.DEFAULT_MAX_DIM,
}

DEFAULTS = {
    "regions": {
        "gamma_min": 0.0, "gamma_max": 1.0, "n_gamma": 51,
        "eta_min": 0.0, "eta_max": 2.5, "n_eta": 51,
    },
    "dos": {"eps_min": None, "eps_max": None, "n_eps": 401, "detect": True},
    "spectrum": {**_SPECTRUM_OPTS, "save_vectors": False},
    "peres": {**_SPECTRUM_OPTS, "spectrum": None},
    "poincare": {"eps": -0.3, "n_ics": 20, "t_end": 2000.0, "tol": 1e-10, "direction": "both"},
    "oracle": {"n_samples": 10**7, "n_eps": 50, "eps_min": None, "eps_max": None},
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    seed: int
    out: str
    options: dict = field(default_factory=dict)
    threads: int = 1  # not recorded: results do not depend on it

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "out": self.out,
            "options": dict(sorted(self.options.items())),
        }

    def header(self) -> str:
        return "config " + json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# -- option handling ---------------------------------------------------------------


def _coerce(key: str, raw, template):
    if raw is None or isinstance(raw, type(template)) and not isinstance(raw, str):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(template, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(template, int):
            return int(float(text)) if float(text).is_integer() else int(text)
        if isinstance(template, float) or template is None and key.startswith("eps"):
            return float(text)
    except ValueError:
        raise UsageError(f"option {key}: cannot parse {text!r}") from None
    return text


def _read_config(path: str | None, command: str) -> dict:
    if path is None:
        return {}
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"bad config file: {exc}") from None
    merged = {}
    for section in ("common", command):
        if cp.has_section(section):
            merged.update({k.replace("-", "_"): v for k, v in cp.items(section)})
    return merged


def resolve(args: argparse.Namespace) -> RunConfig:
    command = args.command
    defaults = {**COMMON, **DEFAULTS[command]}
    values = dict(defaults)
    for key, raw in _read_config(args.config, command).items():
        if key not in defaults:
            raise UsageError(f"unknown option {key!r} in config section for {command}")
        values[key] = _coerce(key, raw, defaults[key])
    for key in defaults:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            values[key] = _coerce(key, cli_value, defaults[key])
    try:
        params = ModelParams(
            omega=values.pop("omega"), omega0=values.pop("omega0"),
            gamma=values.pop("gamma"), eta=values.pop("eta"), j=values.pop("j"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = int(values.pop("seed"))
    out = str(values.pop("out"))
    threads = int(values.pop("threads"))
    if threads < 0:
        raise UsageError("--threads must be non-negative")
    return RunConfig(command, params, seed, out, values, threads or (os.cpu_count() or 1))


# -- commands ----------------------------------------------------------------------


def _grid(lo, hi, n, name):
    if n < 1:
        raise UsageError(f"{name} grid is empty")
    if n > 1 and not hi > lo:
        raise UsageError(f"{name} grid needs max > min")
    return np.linspace(lo, hi, n)


def cmd_regions(cfg: RunConfig, out: Path) -> list[Path]:
    o = cfg.options
    gammas = _grid(o["gamma_min"], o["gamma_max"], o["n_gamma"], "gamma")
    etas = _grid(o["eta_min"], o["eta_max"], o["n_eta"], "eta")
    if gammas[0] < 0 or etas[0] < 0:
        raise UsageError("gamma and eta grids must be non-negative")
    rows = []
    for g in gammas:
        for e in etas:
            p = cfg.params.replace(gamma=float(g), eta=float(e))
            rows.append((g, e, auxiliary_f(p), classify_region(p).tag))
    return [write_csv(out / "regions.csv", ["gamma", "eta", "f", "region"], rows, [cfg.header()])]


def cmd_dos(cfg: RunConfig, out: Path) -> list[Path]:
    o, params = cfg.options, cfg.params
    crit = critical_energies(params)
    if o["eps_min"] is None and o["eps_max"] is None:
        grid = dos_mod.default_eps_grid(params)
    else:
        lo = crit.eps_min if o["eps_min"] is None else o["eps_min"]
        hi = crit.eps_plus + 0.5 if o["eps_max"] is None else o["eps_max"]
        grid = _grid(lo, hi, o["n_eps"], "eps")
        if len(grid) < 3:
            raise UsageError("eps grid needs at least three points")
    curve = dos_mod.dos_curve(grid, params, detect=o["detect"])
    rows = [(pt.eps, pt.nu_scaled, d, pt.subregion) for pt, d in zip(curve.points, curve.derivative)]
    csv = write_csv(out / "dos.csv", ["eps", "nu_scaled", "derivative", "subregion"], rows, [cfg.header()])
    report = {
        "config": cfg.to_dict(),
        "region": classify_region(params).tag,
        "critical_energies": crit.as_dict(),
        "discontinuities": [{"eps": d.eps, "kind": d.kind, "label": d.label} for d in curve.discontinuities],
    }
    return [csv, write_json(out / "dos_discontinuities.json", report)]


def _parities(flag: str) -> list[int]:
    table = {"+1": [1], "1": [1], "+": [1], "-1": [-1], "-": [-1], "both": [1, -1]}
    if flag not in table:
        raise UsageError(f"parity must be +1, -1 or both, got {flag!r}")
    return table[flag]


def _solve_blocks(cfg: RunConfig, keep_vectors: bool):
    o, params = cfg.options, cfg.params
    try:
        params.require_quantum()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if o["n_max"] < 0 or o["window"] < 1 or o["conv_tol"] <= 0:
        raise UsageError("n_max must be >= 0, window >= 1 and conv_tol > 0")
    blocks = []
    for par in _parities(o["parity"]):
        try:
            basis = quantum.BasisSpec(params.j, o["n_max"], par, o["basis"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        blocks.append(quantum.solve_spectrum(params, basis, o["conv_tol"], keep_vectors=keep_vectors, max_dim=o["max_dim"]))
    return blocks


def _spectrum_rows(blocks, params: ModelParams):
    rows, ranges, start = [], [], 0
    scale = params.omega0 * params.j
    for b in blocks:
        for i, (e, jz, c, r) in enumerate(zip(b.eigenvalues, b.jz_expect, b.converged, b.residuals)):
            rows.append((start + i, e, e / scale, jz / params.j, bool(c), r, b.parity))
        ranges.append({"parity": b.parity, "first": start, "last": start + len(b.eigenvalues) - 1})
        start += len(b.eigenvalues)
    return rows, ranges


def cmd_spectrum(cfg: RunConfig, out: Path) -> list[Path]:
    params, o = cfg.params, cfg.options
    t0 = time.perf_counter()
    blocks = _solve_blocks(cfg, keep_vectors=o["save_vectors"])
    wall = time.perf_counter() - t0
    rows, ranges = _spectrum_rows(blocks, params)
    header = ["index", "energy", "eps_scaled", "jz_scaled", "converged", "residual", "parity"]
    written = [write_csv(out / "spectrum.csv", header, rows, [cfg.header()])]

    # averaged density from the converged part of the spectrum
    conv = np.concatenate([b.eigenvalues[b.converged] for b in blocks])
    n_sectors = 2 // len(blocks)
    if len(conv) >= 2 * o["window"]:
        avg = quantum.averaged_dos(conv, params, o["window"], n_sectors)
        written.append(write_csv(out / "avg_dos.csv", ["eps_bar", "nu_bar"], zip(avg.eps_bar, avg.nu_bar), [cfg.header()]))

    if o["save_vectors"]:
        for b in blocks:
            tag = "plus" if b.parity == 1 else "minus"
            states = b.basis.states()
            side = {
                "ordering": "column k is the eigenvector of eigenvalue k (ascending); rows follow the basis order",
                "basis": {"kind": b.basis.kind, "n_max": b.basis.n_max, "parity": b.parity},
                "params": params.to_dict(),
            }
            if b.basis.kind == "bare-Fock":
                side["basis"]["rows"] = "(n, m) with n outer and m inner, both ascending"
                side["basis"]["first_state"] = states[0].tolist()
            written.extend(write_matrix(out / f"eigenvectors_{tag}.bin", b.eigenvectors, side))

    meta = {
        "config": cfg.to_dict(),
        "params": params.to_dict(),
        "basis": {"kind": o["basis"], "n_max": o["n_max"], "dimensions": [len(b.eigenvalues) for b in blocks]},
        "tolerances": {"conv_tol": o["conv_tol"], "residual_rtol": quantum.RESIDUAL_RTOL},
        "blocks": ranges,
        "n_converged": [b.n_converged for b in blocks],
        "wall_time_s": round(wall, 3),
    }
    written.append(write_json(out / "spectrum.json", meta))
    return written


def _read_spectrum_csv(path: str):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"spectrum input not found: {path}")
    lines = [ln for ln in p.read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split(",")
    try:
        ie, ij, ic = head.index("eps_scaled"), head.index("jz_scaled"), head.index("converged")
    except ValueError:
        raise UsageError(f"{path} is not a spectrum CSV") from None
    rows = [ln.split(",") for ln in lines[1:]]
    return [(float(r[ie]), float(r[ij]), r[ic] == "true") for r in rows]


def cmd_peres(cfg: RunConfig, out: Path) -> list[Path]:
    if cfg.options["spectrum"]:
        rows = _read_spectrum_csv(cfg.options["spectrum"])
    else:
        rows = []
        for b in _solve_blocks(cfg, keep_vectors=False):
            lat = quantum.peres_lattice(b, cfg.params)
            rows.extend(zip(lat.eps, lat.jz, (bool(c) for c in lat.converged)))
        rows.sort(key=lambda r: r[0])
    return [write_csv(out / "peres.csv", ["eps_scaled", "jz_scaled", "converged"], rows, [cfg.header()])]


def cmd_poincare(cfg: RunConfig, out: Path) -> list[Path]:
    o, params = cfg.options, cfg.params
    if o["n_ics"] < 1 or o["t_end"] <= 0:
        raise UsageError("n_ics must be >= 1 and t_end > 0")
    if not 1e-12 <= o["tol"] <= 1e-6:
        raise UsageError("tol must lie in [1e-12, 1e-6]")
    if o["direction"] not in ("both", "up", "down"):
        raise UsageError("direction must be both, up or down")
    ics = dynamics.sample_energy_shell(o["eps"], params, o["n_ics"], seed=cfg.seed)
    sections = dynamics.poincare_section(ics, params, o["t_end"], o["tol"], o["direction"], workers=cfg.threads)
    rows = [(i, pt.t_cross, pt.r, pt.phi, pt.direction) for i, sec in enumerate(sections) for pt in sec.points]
    status = sorted({sec.status for sec in sections})
    comments = [f"eps={o['eps']!r} seed={cfg.seed} status={','.join(status)}", cfg.header()]
    return [write_csv(out / "poincare.csv", ["ic_index", "t_cross", "r", "phi", "direction"], rows, comments)]


def cmd_oracle(cfg: RunConfig, out: Path) -> list[Path]:
    o, params = cfg.options, cfg.params
    if o["n_samples"] < 10**4:
        raise UsageError("n_samples must be at least 1e4")
    crit = critical_energies(params)
    lo = crit.eps_min if o["eps_min"] is None else o["eps_min"]
    hi = crit.eps_plus + 0.5 if o["eps_max"] is None else o["eps_max"]
    nodes = _grid(lo, hi, o["n_eps"], "eps")
    analytic = dos_mod.dos_values(nodes, params)
    mc, err = dos_mod.mc_dos_oracle(nodes, params, o["n_samples"], seed=cfg.seed, workers=cfg.threads)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(err > 0, (mc - analytic) / err, np.where(np.abs(mc - analytic) < 1e-12, 0.0, np.inf))
    table = [
        {"eps": e, "analytic": a, "mc": m, "stderr": s, "zscore": zz}
        for e, a, m, s, zz in zip(nodes, analytic, mc, err, z)
    ]
    worst = float(np.max(np.abs(z)))
    report = {
        "config": cfg.to_dict(),
        "nodes": table,
        "summary": {"max_abs_z": worst, "threshold": 3.0, "pass": bool(worst < 3.0)},
    }
    return [write_json(out / "oracle.json", report)]


COMMANDS = {
    "regions": cmd_regions,
    "dos": cmd_dos,
    "spectrum": cmd_spectrum,
    "peres": cmd_peres,
    "poincare": cmd_poincare,
    "oracle": cmd_oracle,
}


# -- argument parser ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser):
    g = p.add_argument_group("model and run")
    g.add_argument("--omega", type=float, help="boson frequency (default 1)")
    g.add_argument("--omega0", type=float, help="qubit splitting (default 1)")
    g.add_argument("--gamma", type=float, help="qubit-boson coupling")
    g.add_argument("--eta", type=float, help="qubit-qubit coupling")
    g.add_argument("--j", type=float, help="pseudospin length N_q/2")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--out", help="output directory (default .)")
    g.add_argument("--config", help="INI file with [common] and per-command sections")
    g.add_argument("--threads", type=int, help="parallelism cap (default: all cores)")


def _add_spectrum_opts(p: argparse.ArgumentParser):
    p.add_argument("--n-max", dest="n_max", type=int, help="boson cutoff")
    p.add_argument("--parity", help="+1, -1 or both")
    p.add_argument("--basis", choices=["bare-Fock", "displaced-Fock"])
    p.add_argument("--conv-tol", dest="conv_tol", type=float, help="top boson layer weight threshold")
    p.add_argument("--window", type=int, help="levels per averaging window")
    p.add_argument("--max-dim", dest="max_dim", type=int, help="dimension guard per parity block")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="extdicke", description="Extended Dicke model analysis pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("regions", help="region map over a (gamma, eta) grid")
    for name in ("gamma", "eta"):
        p.add_argument(f"--{name}-min", dest=f"{name}_min", type=float)
        p.add_argument(f"--{name}-max", dest=f"{name}_max", type=float)
        p.add_argument(f"--n-{name}", dest=f"n_{name}", type=int)
    _add_common(p)

    p = sub.add_parser("dos", help="semiclassical density of states")
    p.add_argument("--eps-min", dest="eps_min", type=float)
    p.add_argument("--eps-max", dest="eps_max", type=float)
    p.add_argument("--n-eps", dest="n_eps", type=int)
    p.add_argument("--no-detect", dest="detect", action="store_const", const=False)
    _add_common(p)

    p = sub.add_parser("spectrum", help="finite-size quantum spectrum")
    _add_spectrum_opts(p)
    p.add_argument("--save-vectors", dest="save_vectors", action="store_const", const=True)
    _add_common(p)

    p = sub.add_parser("peres", help="Peres lattice of <J_z>/j")
    _add_spectrum_opts(p)
    p.add_argument("--spectrum", help="spectrum.csv from a previous run")
    _add_common(p)

    p = sub.add_parser("poincare", help="Poincare section at p = 0")
    p.add_argument("--eps", type=float, help="scaled energy of the shell")
    p.add_argument("--n-ics", dest="n_ics", type=int)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--direction", help="both, up or down")
    _add_common(p)

    p = sub.add_parser("oracle", help="Monte-Carlo check of the analytic density")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-eps", dest="n_eps", type=int)
    p.add_argument("--eps-min", dest="eps_min", type=float)
    p.add_argument("--eps-max", dest="eps_max", type=float)
    _add_common(p)
    return parser


def run(argv=None) -> tuple[int, list[Path]]:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(cfg.threads):
            written = COMMANDS[cfg.command](cfg, out)
    except UsageError as exc:
        print(f"extdicke: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE, []
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"extdicke: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE, []
    for path in written:
        print(path)
    return EXIT_OK, written


def main(argv=None) -> int:
    return run(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
