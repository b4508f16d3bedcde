"""Command line front end for the experiment runners.

Every subcommand accepts the same core flags plus a --config file of
key=value lines mirroring them; explicit flags win over the file.
List-valued flags take comma-separated entries.
"""

import argparse
import sys

from . import experiments as ex
from .allen_cahn import PhaseFieldConfig, run_simulation
from .sparse import ArgumentError


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def _strs(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


# per-subcommand flag tables: name -> (converter, default, help)
_COMMON_EXPERIMENT = {
    "operator": (str, "a1", "operator preset: a1, a2 or a3"),
    "b": (float, 1.0, "shift value b"),
    "out": (str, "", "output CSV path (empty: print row count only)"),
    "threads": (int, 1, "parallel resolvent solves per sweep"),
    "seed": (int, 0, "seed for randomized checks"),
}

_FLAGS = {
    "convergence": {
        **_COMMON_EXPERIMENT,
        "source": (_strs, ("f1", "f2", "f3"), "source terms"),
        "alpha": (_floats, (0.1, 0.3, 0.5, 0.7, 0.9), "fractional powers"),
        "mesh": (_ints, (8, 16, 32, 64), "mesh ladder (n_div values)"),
        "ref_mesh": (int, 256, "reference n_div"),
        "tau": (float, 0.15, "quadrature step"),
        "big_m": (int, 200, "left node count M"),
        "big_n": (int, 200, "right node count N"),
        "tol": (float, 0.0, "if > 0, plan from tolerance instead"),
    },
    "quad-sweep": {
        **_COMMON_EXPERIMENT,
        "source": (_strs, ("f1", "f2", "f3"), "source terms"),
        "alpha": (_floats, (0.3, 0.5, 0.7), "fractional powers"),
        "mesh": (_ints, (32,), "working mesh (last entry used)"),
        "tau": (_floats, (1.0, 0.75, 0.6, 0.5),
                "tau sweep; M = N = round(30/tau) per entry"),
    },
    "b-sweep": {
        **_COMMON_EXPERIMENT,
        "source": (_strs, ("f1",), "source terms"),
        "alpha": (_floats, (0.5,), "fractional powers"),
        "mesh": (_ints, (128,), "working mesh (last entry used)"),
        "ref_mesh": (int, 256, "reference n_div"),
        "tau": (float, 0.15, "quadrature step"),
        "big_m": (int, 200, "left node count M"),
        "big_n": (int, 200, "right node count N"),
    },
    "allen-cahn": {
        "alpha": (float, 0.6, "fractional power of the flow"),
        "mesh": (int, 128, "periodic grid size n"),
        "eps": (float, 0.1, "interface width parameter"),
        "dt": (float, 1.0 / 128.0, "time step"),
        "t_end": (float, 50.0, "final time"),
        "tol": (float, 1e-10, "quadrature plan tolerance"),
        "seed": (int, 7, "initial data seed"),
        "snapshot_times": (_floats, (0.0, 1.0, 10.0, 50.0),
                           "times to store field snapshots"),
        "snapshot_format": (str, "csv", "snapshot format: csv or bin"),
        "out": (str, "allen_cahn_out", "output directory"),
    },
    "oracle-check": {
        "tau": (float, 0.15, "quadrature step"),
        "big_m": (int, 200, "left node count M"),
        "big_n": (int, 200, "right node count N"),
        "out": (str, "", "output CSV path"),
        "threads": (int, 1, "parallel resolvent solves"),
        "seed": (int, 0, "matrix family seed"),
    },
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fracshift",
        description="Fractional elliptic solves and the study experiments.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, flags in _FLAGS.items():
        sub = subs.add_parser(name)
        sub.add_argument("--config", type=str, default=None,
                         help="key=value file mirroring the flags")
        for flag, (_, default, help_text) in flags.items():
            sub.add_argument(
                "--" + flag.replace("_", "-"),
                type=str, default=None,
                help=f"{help_text} (default: {default})",
            )
    return parser


def _read_config(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ArgumentError(
                        f"{path}:{line_no}: expected key=value, got {line!r}"
                    )
                key, _, value = line.partition("=")
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ArgumentError(f"cannot read config {path}: {exc}") from exc
    return values


def _resolve(args, command):
    """Merge CLI flags over config-file values over defaults."""
    flags = _FLAGS[command]
    file_values = _read_config(args.config) if args.config else {}
    for key in file_values:
        if key not in flags:
            raise ArgumentError(f"unknown config key {key!r} for {command}")
    resolved = {}
    for flag, (conv, default, _) in flags.items():
        raw = getattr(args, flag)
        if raw is None:
            raw = file_values.get(flag)
        resolved[flag] = default if raw is None else conv(raw)
    return resolved


def _experiment_config(opts, **overrides):
    kwargs = dict(
        operator=opts["operator"],
        sources=tuple(opts.get("source", ("f1",))),
        alphas=tuple(opts.get("alpha", (0.5,))),
        b=opts.get("b", 1.0),
        out=opts.get("out", ""),
        threads=opts.get("threads", 1),
        seed=opts.get("seed", 0),
    )
    for key in ("mesh", "ref_mesh", "tau", "big_m", "big_n", "tol"):
        if key in opts:
            kwargs["meshes" if key == "mesh" else key] = opts[key]
    kwargs.update(overrides)
    return ex.ExperimentConfig(**kwargs)


def _finish(rows, out, columns):
    if out:
        ex.emit_csv(rows, out, columns)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        print(f"{len(rows)} rows (no --out given)")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    command = args.command
    opts = _resolve(args, command)

    if command == "convergence":
        cfg = _experiment_config(opts)
        _finish(ex.run_spatial_convergence(cfg), cfg.out,
                ex.CONVERGENCE_COLUMNS)
    elif command == "quad-sweep":
        cfg = _experiment_config(opts, taus=tuple(opts["tau"]), tau=0.15)
        _finish(ex.run_quadrature_sweep(cfg), cfg.out, ex.QUAD_SWEEP_COLUMNS)
    elif command == "b-sweep":
        cfg = _experiment_config(opts)
        _finish(ex.run_b_sweep(cfg), cfg.out, ex.B_SWEEP_COLUMNS)
    elif command == "oracle-check":
        rows = ex.oracle_check(seed=opts["seed"], tau=opts["tau"],
                               big_m=opts["big_m"], big_n=opts["big_n"],
                               threads=opts["threads"])
        _finish(rows, opts["out"], ex.ORACLE_COLUMNS)
    elif command == "allen-cahn":
        cfg = PhaseFieldConfig(
            alpha=opts["alpha"], n=opts["mesh"], eps=opts["eps"],
            dt=opts["dt"], t_end=opts["t_end"], seed=opts["seed"],
            tol=opts["tol"], snapshot_times=tuple(opts["snapshot_times"]),
            out_dir=opts["out"], snapshot_format=opts["snapshot_format"],
        )
        result = run_simulation(cfg)
        final_t, final_e = result.state.energy_history[-1]
        print(f"integrated to t={final_t:g}, energy {final_e:.12g}, "
              f"{len(result.snapshots)} snapshots in {cfg.out_dir or '(memory)'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
