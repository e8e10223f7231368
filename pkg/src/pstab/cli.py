"""Command line front end: one YAML config in, report files out.

Exit codes are part of the interface:
  0  success
  2  validation, schema, expression, empty-subdomain, or usage error
  3  singular control regime (near-singular control matrix, no admissible
     head size, degenerate subdomain Gram matrix)
  4  synthesized control failed the final periodicity residual check
"""

from __future__ import annotations

import dataclasses
import os
import sys

import numpy as np

from .config import load_config
from .control import build_reference, synthesize_control, synthesize_control_local
from .errors import (
    DegenerateGram,
    NoAdmissibleK,
    PerturbationTooLarge,
    PstabError,
    ResidualCheckFailed,
    ValidationError,
)
from .evolution import energy_profiles, period_map
from .periodic import (
    HeadConstraint,
    choose_head_size,
    periodicity_residual,
    solve_k_approx_periodic,
)
from .reporting import SWEEP_COLUMNS, sweep_rows, write_csv, write_json
from .scenarios import (
    nonexistence_demo,
    run_sweep_epsilon,
    run_sweep_measure,
    stabilized_demo,
)
from .spectral import gram_matrix, subdomain_mask

__all__ = ["main", "dispatch", "USAGE"]

USAGE = """\
usage: pstab <command> --config <path> [--out <dir>] [--steps N] [--scale S] [--K0 K|auto]

commands:
  eig              export the operator spectrum and leading eigenfunctions
  periodic         solve the head-pinned approximately periodic problem
  stabilize        synthesize the periodicity-restoring control
  stabilize-local  same, confined to a space window and a time set
  gram             subdomain Gram matrix of the leading modes, with PD check
  example3         canonical interval runs: existence, failure, stabilized
  sweep            perturbation-size and time-set-measure scaling studies

options:
  --config <path>  YAML run configuration (required)
  --out <dir>      override output.directory
  --steps N        override time.steps
  --scale S        override perturbation.scale
  --K0 K|auto      override control.K0

exit codes: 0 ok, 2 validation or usage, 3 singular control regime,
4 residual check failed
"""

# modes exported by `eig` when control.K0 is auto
_EIG_EXPORT_DEFAULT = 8
_GRAM_DEFAULT_K = 8


def _out_path(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _pick_head_size(cfg, pm):
    if cfg.head_size is not None:
        return cfg.head_size
    return choose_head_size(pm, margin=0.5)


def _write_profiles(cfg, op, traj, name, reference=None):
    if "csv" not in cfg.formats:
        return None
    norm_sq, dirichlet = energy_profiles(traj, op)
    header = ["step", "t", "norm_sq", "dirichlet"]
    columns = [norm_sq, dirichlet]
    if reference is not None:
        dev = dataclasses.replace(traj, modal=traj.modal - reference.modal)
        dev_norm, dev_dir = energy_profiles(dev, op)
        header += ["dev_norm_sq", "dev_dirichlet"]
        columns += [dev_norm, dev_dir]
    times = traj.tg.times()
    rows = [
        (k, times[k], *(col[k] for col in columns)) for k in range(len(times))
    ]
    return write_csv(_out_path(cfg, name), header, rows)


def _announce(written):
    for path in written:
        if path:
            print(f"wrote {path}")


def _cmd_eig(cfg):
    op, basis = cfg.build_system()
    written = []
    if "csv" in cfg.formats:
        written.append(
            write_csv(
                _out_path(cfg, "eigenvalues.csv"),
                ["mode", "lambda"],
                [(j + 1, lam) for j, lam in enumerate(basis.lambdas)],
            )
        )
        k = cfg.head_size if cfg.head_size else _EIG_EXPORT_DEFAULT
        k = max(1, min(int(k), basis.n_dof))
        coords = cfg.domain.node_coords()
        coord_names = ["x", "y"][: len(coords)]
        header = coord_names + [f"X_{j + 1}" for j in range(k)]
        rows = [
            (*(c[i] for c in coords), *basis.vectors[i, :k])
            for i in range(basis.n_dof)
        ]
        written.append(write_csv(_out_path(cfg, "basis.csv"), header, rows))
    if "json" in cfg.formats:
        written.append(
            write_json(
                _out_path(cfg, "eig.json"),
                {
                    "n_dof": int(basis.n_dof),
                    "lambda_min": float(basis.lambdas[0]),
                    "lambda_max": float(basis.lambdas[-1]),
                    "quadrature_weight": float(basis.weight),
                },
            )
        )
    _announce(written)
    print(
        f"eig: {basis.n_dof} modes, lambda in "
        f"[{basis.lambdas[0]:.6g}, {basis.lambdas[-1]:.6g}]"
    )


def _cmd_periodic(cfg):
    op, basis = cfg.build_system()
    tg = cfg.time_grid(op)
    pm = period_map(
        op, basis, cfg.perturbation_field(), cfg.forcing_field(), tg
    )
    head = HeadConstraint.zero(_pick_head_size(cfg, pm))
    rep = solve_k_approx_periodic(pm, head)
    residual = periodicity_residual(rep.trajectory)
    written = []
    if "json" in cfg.formats:
        payload = rep.to_dict()
        payload["periodicity_residual"] = float(residual)
        payload["steps"] = int(tg.m)
        payload["T"] = float(tg.T)
        written.append(write_json(_out_path(cfg, "periodic.json"), payload))
    written.append(_write_profiles(cfg, op, rep.trajectory, "profiles.csv"))
    _announce(written)
    print(
        f"periodic: head {rep.head_size}, tail residual {rep.tail_residual:.3e}, "
        f"periodicity residual {residual:.3e}"
    )


def _run_stabilize(cfg, loc):
    op, basis = cfg.build_system()
    tg = cfg.time_grid(op)
    e = cfg.perturbation_field()
    f = cfg.forcing_field()
    y_ref = build_reference(op, basis, f, tg)
    pm = period_map(op, basis, e, None, tg)
    head_size = _pick_head_size(cfg, pm)
    if loc is None:
        rep = synthesize_control(op, basis, e, f, y_ref, head_size, q=cfg.q)
    else:
        rep = synthesize_control_local(
            op, basis, e, f, y_ref, head_size, loc, q=cfg.q
        )
    written = []
    if "json" in cfg.formats:
        written.append(write_json(_out_path(cfg, "stabilize.json"), rep.to_dict()))
    if "csv" in cfg.formats and rep.head_size:
        written.append(
            write_csv(
                _out_path(cfg, "control.csv"),
                ["mode", "u"],
                [(j + 1, rep.u[j]) for j in range(rep.head_size)],
            )
        )
    written.append(
        _write_profiles(
            cfg, op, rep.trajectory, "profiles.csv", reference=rep.reference
        )
    )
    _announce(written)
    print(
        f"stabilize: head {rep.head_size}, |u| = {rep.norm_u:.6g}, "
        f"periodicity residual {rep.residual:.3e}"
    )


def _cmd_stabilize(cfg):
    _run_stabilize(cfg, None)


def _cmd_stabilize_local(cfg):
    loc = cfg.localization_spec()
    if loc is None:
        raise ValidationError(
            "stabilize-local needs a localization block", "control.localization"
        )
    _run_stabilize(cfg, loc)


def _cmd_gram(cfg):
    op, basis = cfg.build_system()
    if cfg.x_intervals is None and cfg.y_intervals is None:
        raise ValidationError(
            "gram needs a space window", "control.localization.x_intervals"
        )
    x_intervals = (
        cfg.x_intervals
        if cfg.x_intervals is not None
        else (tuple(cfg.domain.x_bounds),)
    )
    mask = subdomain_mask(cfg.domain, x_intervals, cfg.y_intervals)
    k = cfg.head_size if cfg.head_size else _GRAM_DEFAULT_K
    k = max(1, min(int(k), basis.n_dof))
    g = gram_matrix(basis, mask, k)
    written = []
    if "csv" in cfg.formats:
        written.append(
            write_csv(
                _out_path(cfg, "gram.csv"),
                [f"G_{j + 1}" for j in range(g.k)],
                [tuple(row) for row in g.matrix],
            )
        )
    if "json" in cfg.formats:
        written.append(
            write_json(
                _out_path(cfg, "gram.json"),
                {
                    "k": int(g.k),
                    "node_count": int(g.node_count),
                    "min_eig": float(g.min_eig),
                    "positive_definite": bool(g.min_eig > 0.0),
                },
            )
        )
    _announce(written)
    print(f"gram: {g.k} modes on {g.node_count} nodes, min eig {g.min_eig:.6g}")


def _interval_only(cfg, command):
    if cfg.domain.kind != "interval":
        raise ValidationError(
            f"{command} runs on the canonical interval domain", "domain.kind"
        )
    return {"n": cfg.domain.n, "T": cfg.T, "steps": cfg.steps}


def _cmd_example3(cfg):
    kw = _interval_only(cfg, "example3")
    exists = nonexistence_demo(None, "sin(2*x)", **kw)
    fails = nonexistence_demo(None, "sin(x)", **kw)
    stab = stabilized_demo(head_size=cfg.head_size, **kw)
    written = []
    if "json" in cfg.formats:
        written.append(
            write_json(
                _out_path(cfg, "example3.json"),
                {
                    "orthogonal_forcing": exists.to_dict(),
                    "resonant_forcing": fails.to_dict(),
                    "stabilized": stab.to_dict(),
                },
            )
        )
    _announce(written)
    print(
        f"example3: orthogonal forcing exists={exists.exists}, "
        f"resonant forcing exists={fails.exists}, stabilized residual "
        f"{stab.report.residual:.3e}"
    )


def _cmd_sweep(cfg):
    kw = _interval_only(cfg, "sweep")
    s = cfg.scale
    eps_rows = run_sweep_epsilon(
        scales=(0.25 * s, 0.5 * s, s, 2.0 * s), **kw
    )
    measure_rows = run_sweep_measure(scale=s, **kw)
    written = []
    if "csv" in cfg.formats:
        written.append(
            write_csv(
                _out_path(cfg, "sweep_epsilon.csv"),
                list(SWEEP_COLUMNS),
                sweep_rows(eps_rows),
            )
        )
        written.append(
            write_csv(
                _out_path(cfg, "sweep_mE.csv"),
                list(SWEEP_COLUMNS),
                sweep_rows(measure_rows),
            )
        )
    if "json" in cfg.formats:
        eps = np.array([r.epsilon for r in eps_rows])
        nu = np.array([r.norm_u for r in eps_rows])
        slope = float(np.polyfit(np.log(eps), np.log(nu), 1)[0])
        prods = np.array([r.norm_u * r.m_E for r in measure_rows])
        written.append(
            write_json(
                _out_path(cfg, "sweep.json"),
                {
                    "epsilon_slope": slope,
                    "u_times_mE_spread": float(prods.max() / prods.min() - 1.0),
                    "epsilon_rows": len(eps_rows),
                    "measure_rows": len(measure_rows),
                },
            )
        )
    _announce(written)
    print(f"sweep: {len(eps_rows)} size rows, {len(measure_rows)} measure rows")


_COMMANDS = {
    "eig": _cmd_eig,
    "periodic": _cmd_periodic,
    "stabilize": _cmd_stabilize,
    "stabilize-local": _cmd_stabilize_local,
    "gram": _cmd_gram,
    "example3": _cmd_example3,
    "sweep": _cmd_sweep,
}


def _exit_code(ex):
    if isinstance(ex, (PerturbationTooLarge, NoAdmissibleK, DegenerateGram)):
        return 3
    if isinstance(ex, ResidualCheckFailed):
        return 4
    return 2


def dispatch(command, cfg):
    """Run one command against a loaded configuration; returns the exit code."""
    runner = _COMMANDS.get(command)
    if runner is None:
        print(USAGE, file=sys.stderr)
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return 2
    try:
        runner(cfg)
    except PstabError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return _exit_code(ex)
    return 0


class _UsageError(Exception):
    pass


def _parse_argv(argv):
    command = None
    opts = {"config": None, "out": None, "steps": None, "scale": None, "K0": "keep"}
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in ("-h", "--help", "help"):
            return "help", opts
        if arg.startswith("--"):
            name = arg[2:]
            if name not in ("config", "out", "steps", "scale", "K0"):
                raise _UsageError(f"unknown option {arg}")
            if i + 1 >= len(argv):
                raise _UsageError(f"{arg} needs a value")
            value = argv[i + 1]
            i += 2
            if name == "steps":
                try:
                    value = int(value)
                except ValueError:
                    raise _UsageError(f"--steps expects an integer, got {value!r}")
            elif name == "scale":
                try:
                    value = float(value)
                except ValueError:
                    raise _UsageError(f"--scale expects a number, got {value!r}")
            elif name == "K0":
                if value == "auto":
                    value = None
                else:
                    try:
                        value = int(value)
                    except ValueError:
                        raise _UsageError(
                            f"--K0 expects an integer or auto, got {value!r}"
                        )
            opts[name] = value
        elif command is None:
            command = arg
            i += 1
        else:
            raise _UsageError(f"unexpected argument {arg!r}")
    if command is None:
        raise _UsageError("missing command")
    return command, opts


def main(argv=None):
    try:
        command, opts = _parse_argv(
            list(sys.argv[1:]) if argv is None else list(argv)
        )
    except _UsageError as ex:
        print(USAGE, file=sys.stderr)
        print(f"error: {ex}", file=sys.stderr)
        return 2
    if command == "help":
        print(USAGE)
        return 0
    if opts["config"] is None:
        print(USAGE, file=sys.stderr)
        print("error: --config is required", file=sys.stderr)
        return 2
    try:
        cfg = load_config(opts["config"]).with_overrides(
            steps=opts["steps"],
            scale=opts["scale"],
            head_size=opts["K0"],
            out_dir=opts["out"],
        )
    except PstabError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return _exit_code(ex)
    return dispatch(command, cfg)
