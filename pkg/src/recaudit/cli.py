"""Command line entry point: ``recaudit <experiment> --data ratings.dat ...``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from . import harness
from .dataset import load_movielens, summary_stats, write_movielens
from .errors import ConfigError, DataError, NumericalError
from .mf import MfConfig
from .optim import OptimizerConfig
from .synthetic import synthetic_movielens

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> (type, default)
OPTIONS = {
    "data": (str, None),
    "metric": (str, None),
    "k": (str, "5"),
    "beta": (str, "1.0"),
    "optimizer": (str, "gd"),
    "distance": (str, "hellinger"),
    "epochs": (int, 50),
    "lr": (float, None),
    "eps": (float, 1e-3),
    "num_z": (int, 16),
    "user_frac": (float, 0.1),
    "item_frac": (float, 0.1),
    "max_pairs": (int, None),
    "seed": (int, 0),
    "out": (str, None),
    "dim": (int, 16),
    "reg": (float, 1.0),
    "mf_epochs": (int, 15),
    "group_size": (int, 30),
    "band": (str, "200,300"),
    "workers": (int, 1),
    "timing": (bool, False),
}
DEFAULT_METRIC = {
    "reach-sweep": "past-reach",
    "stab-sweep": "past-stab",
    "beta-sweep": "past-stab",
    "optimizer-compare": "past-stab",
    "group-reach": "future-reach",
    "group-stab": "future-stab",
}


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (int, float)):
        return (float(text),)
    if isinstance(text, (list, tuple)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _ints(text) -> tuple[int, ...]:
    return tuple(int(x) for x in _floats(text))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recaudit", description="Audit user agency in an MF recommender.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in harness.EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat YAML file of option: value; flags override it")
        for opt, (typ, _) in OPTIONS.items():
            flag = "--" + opt.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, action="store_const", const=True, default=None)
            else:
                sp.add_argument(flag, type=typ, default=None)
    st = sub.add_parser("stats", help="print dataset statistics")
    st.add_argument("--data", required=True)
    sy = sub.add_parser("synth", help="write a synthetic MovieLens-format ratings file")
    sy.add_argument("--out", required=True)
    sy.add_argument("--users", type=int, default=300)
    sy.add_argument("--items", type=int, default=400)
    sy.add_argument("--seed", type=int, default=0)
    return p


def _load_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a flat mapping")
    out = {}
    for key, value in doc.items():
        name = str(key).replace("-", "_")
        if name not in OPTIONS:
            raise ConfigError(f"{path}: unknown option {key!r}")
        if isinstance(value, (dict, list)) and name not in ("k", "beta", "band"):
            raise ConfigError(f"{path}: option {key!r} must be a scalar")
        out[name] = value
    return out


def resolve_options(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = {name: default for name, (_, default) in OPTIONS.items()}
    if getattr(args, "config", None):
        opts.update(_load_file(args.config))
    for name in OPTIONS:
        v = getattr(args, name, None)
        if v is not None:
            opts[name] = v
    return opts


def build_config(command: str, opts: dict) -> harness.ExperimentConfig:
    try:
        band = _ints(opts["band"])
        if len(band) != 2:
            raise ConfigError("band needs two ranks, e.g. 200,300")
        optimizer = OptimizerConfig(
            kind=str(opts["optimizer"]),
            epochs=int(opts["epochs"]),
            learning_rate=None if opts["lr"] is None else float(opts["lr"]),
            eps=float(opts["eps"]),
            num_z=int(opts["num_z"]),
            seed=int(opts["seed"]),
        )
        return harness.ExperimentConfig(
            experiment=command,
            data=opts["data"],
            metric=opts["metric"] or DEFAULT_METRIC[command],
            ks=_ints(opts["k"]),
            betas=_floats(opts["beta"]),
            user_frac=float(opts["user_frac"]),
            item_frac=float(opts["item_frac"]),
            max_pairs=None if opts["max_pairs"] is None else int(opts["max_pairs"]),
            optimizer=optimizer,
            distance=str(opts["distance"]),
            seed=int(opts["seed"]),
            out=opts["out"],
            mf=MfConfig(dim=int(opts["dim"]), reg=float(opts["reg"]), epochs=int(opts["mf_epochs"]),
                        seed=int(opts["seed"])),
            group_size=int(opts["group_size"]),
            band=band,
            timing=bool(opts["timing"]),
            workers=int(opts["workers"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _run(args) -> int:
    if args.command == "stats":
        stats = summary_stats(load_movielens(args.data))
        for key in ("n_users", "n_items", "n_ratings"):
            print(f"{key}: {stats[key]}")
        print(f"density_pct: {stats['density']:.4f}")
        return EXIT_OK
    if args.command == "synth":
        write_movielens(synthetic_movielens(args.users, args.items, seed=args.seed), args.out)
        return EXIT_OK
    cfg = build_config(args.command, resolve_options(args))
    if cfg.data is None:
        raise ConfigError("--data is required")
    rows = harness.run_and_write(cfg)
    if cfg.out is None:
        harness.write_rows(rows, sys.stdout)
    for s in harness.emit_summary(rows):
        mean = "" if s["mean"] is None else f"{s['mean']:.6g}"
        print(f"{s['experiment']} {s['metric']} k={s['k']} beta={s['beta']:g} n={s['count']} mean={mean}",
              file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; keep 2 for data errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
