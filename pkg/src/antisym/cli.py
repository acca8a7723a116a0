"""Command-line front end.

Subcommands: ``verify``, ``gen-data``, ``train``, ``eval``. Every option can
also come from an INI config file (``--config``), one section per
subcommand, keys spelled like the flags::

    [train]
    ansatz = bilipschitz
    epochs = 100
    hidden = 256 256 64

Precedence is flags > environment (paths only) > config file > defaults.
Path variables: ``ANTISYM_DATA``, ``ANTISYM_CHECKPOINT``, ``ANTISYM_OUT``,
``ANTISYM_RESULTS``, ``ANTISYM_CACHE_DIR``.

Exit codes: 0 ok, 1 usage or input error, 2 verification failure,
3 training divergence.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._binio import FormatError

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3

PATH_ENV = {
    "data": "ANTISYM_DATA",
    "checkpoint": "ANTISYM_CHECKPOINT",
    "out": "ANTISYM_OUT",
    "results": "ANTISYM_RESULTS",
    "cache_dir": "ANTISYM_CACHE_DIR",
}
RESULT_COLUMNS = ("ansatz", "n", "split", "mae", "mare", "param_count")

log = logging.getLogger("antisym")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _theorem_n(text: str) -> int:
    v = int(text)
    if not 2 <= v <= 8:
        raise argparse.ArgumentTypeError(f"n={v} outside [2, 8], the range of the exact d_plus oracle")
    return v


def _order(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"matrix order must be at least 2, got {v}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with defaults for this subcommand")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="BLAS worker threads; 1 gives the bitwise-reproducible path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="antisym", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"antisym {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("verify", help="run the property and theorem checks")
    _common(p)
    p.add_argument("--n", type=_theorem_n, nargs="+", default=list(range(2, 9)),
                   help="orders for the d=1 bi-Lipschitz check")
    p.add_argument("--trials", type=_positive_int, default=100_000, help="pairs per order")
    p.add_argument("--tol", type=_positive_float, default=1e-9)
    p.add_argument("--psi-configs", nargs="+", default=["3x2", "4x2", "3x3"],
                   help="n x d pairs for the Psi probe")
    p.add_argument("--psi-pairs", type=_positive_int, default=10_000)
    p.add_argument("--psi-seeds", type=_positive_int, default=5)
    p.add_argument("--q-inputs", type=_nonneg_int, default=20_000)
    p.add_argument("--grad-instances", type=_nonneg_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="verify-report", help="directory for report files")

    p = sub.add_parser("gen-data", help="generate a determinant-regression dataset")
    _common(p)
    p.add_argument("--n", type=_order, default=10)
    p.add_argument("--train", type=_positive_int, default=20_000)
    p.add_argument("--val", type=_positive_int, default=2_000)
    p.add_argument("--test", type=_positive_int, default=4_000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--low", type=float, default=0.0)
    p.add_argument("--high", type=float, default=1.1)
    p.add_argument("--out", default="data.bin")
    p.add_argument("--csv", help="also export the samples as CSV")

    p = sub.add_parser("train", help="train one ansatz on a dataset")
    _common(p)
    p.add_argument("--data", default="data.bin")
    p.add_argument("--ansatz", choices=("bilipschitz", "vandermonde", "mlp"), default="bilipschitz")
    p.add_argument("--epochs", type=_positive_int, default=100)
    p.add_argument("--batch-size", type=_positive_int, default=256)
    p.add_argument("--lr", type=_positive_float, default=1e-3)
    p.add_argument("--factor", type=_positive_float, default=0.5)
    p.add_argument("--patience", type=_nonneg_int, default=5)
    p.add_argument("--min-lr", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0, help="minibatch shuffling seed")
    p.add_argument("--feature-seed", type=int, help="ensemble/bank seed (default: --seed)")
    p.add_argument("--init-seed", type=int, help="weight init seed (default: --seed + 1)")
    p.add_argument("--hidden", type=_positive_int, nargs="+", help="hidden widths (bilipschitz, mlp)")
    p.add_argument("--phi-hidden", type=_positive_int, nargs="+", help="phi widths (vandermonde)")
    p.add_argument("--rho-hidden", type=_positive_int, nargs="*", help="rho hidden widths (vandermonde)")
    p.add_argument("--m", type=_positive_int, help="ensemble size (default 2nd+1)")
    p.add_argument("--K", type=_positive_int, help="Vandermonde directions (default nd+1)")
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--out", default="model.ckpt")
    p.add_argument("--log", help="per-epoch CSV (default: <out>.log.csv)")
    p.add_argument("--cache-dir", help="directory for cached frozen features")

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    _common(p)
    p.add_argument("--checkpoint", default="model.ckpt")
    p.add_argument("--data", default="data.bin")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--results", default="results.csv", help="CSV to append the result row to")
    p.add_argument("--check-antisym", action="store_true",
                   help="measure f(sigma x) against sign(sigma) f(x) on relabelled samples")
    p.add_argument("--antisym-samples", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config_tokens(parser: argparse.ArgumentParser, command: str, path: str) -> list[str]:
    cfg = configparser.ConfigParser()
    if not cfg.read(path, encoding="utf-8"):
        raise UsageError(f"cannot read config file {path}")
    if not cfg.has_section(command):
        return []
    sub = _subparser(parser, command)
    known = {a.dest: a for a in sub._actions}
    tokens = []
    for key, value in cfg.items(command, raw=True):
        if key in cfg.defaults():
            continue
        dest = key.replace("-", "_")
        action = known.get(dest)
        if action is None or dest == "config":
            raise UsageError(f"config file: unknown option {key!r} for {command}")
        flag = action.option_strings[-1]
        if isinstance(action, argparse._StoreTrueAction):
            if cfg.getboolean(command, key):
                tokens.append(flag)
        elif action.nargs in ("+", "*"):
            tokens += [flag, *value.split()]
        else:
            tokens += [flag, value]
    return tokens


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def resolve_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv or argv[0].startswith("-"):
        return parser.parse_args(argv)
    command, rest = argv[0], argv[1:]
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(rest)
    tokens = []
    if known.config and command in {"verify", "gen-data", "train", "eval"}:
        try:
            tokens += _config_tokens(parser, command, known.config)
        except UsageError as exc:
            parser.error(str(exc))
    if command in {"verify", "gen-data", "train", "eval"}:
        sub = _subparser(parser, command)
        dests = {a.dest for a in sub._actions}
        for dest, var in PATH_ENV.items():
            if dest in dests and os.environ.get(var):
                tokens += ["--" + dest.replace("_", "-"), os.environ[var]]
    return parser.parse_args([command, *tokens, *rest])


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, Path):
        return str(v)
    return v


def write_manifest(path, args: argparse.Namespace, **extra) -> None:
    resolved = {k: _jsonable(v) for k, v in sorted(vars(args).items())}
    payload = {"tool": "antisym", "version": __version__, "command": args.command,
               "resolved": resolved}
    payload.update({k: _jsonable(v) for k, v in extra.items()})
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# commands

def cmd_verify(args) -> int:
    from .features import q_fast, q_naive
    from .neural.gradcheck import check_gradients
    from .probe import (probe_psi, vandermonde_scaling_demo, write_reports_csv,
                        write_reports_text)

    configs = []
    for text in args.psi_configs:
        try:
            n, d = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise UsageError(f"--psi-configs entries look like 3x2, got {text!r}")
        if not 2 <= n <= 8 or d < 1:
            raise UsageError(f"Psi probe needs 2 <= n <= 8 and d >= 1, got {text}")
        configs.append((n, d))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .probe import verify_theorem_1d
    failures = 0
    lines = []

    theorem = [verify_theorem_1d(n, args.trials, args.seed, args.tol) for n in args.n]
    psi = [probe_psi(n, d, pairs=args.psi_pairs, seed=args.seed + s)
           for n, d in configs for s in range(args.psi_seeds)]
    for rep in theorem + psi:
        failures += rep.violations
        lines.append(rep.summary())
    write_reports_csv(theorem, out / "theorem_1d.csv")
    write_reports_csv(psi, out / "psi.csv")

    scaling = [vandermonde_scaling_demo(n, d, seed=args.seed) for n, d in [(3, 1), (5, 2), (20, 2)]]
    for tab in scaling:
        failures += tab.violations
        lines.append(tab.summary())
    (out / "scaling.json").write_text(json.dumps([t.as_dict() for t in scaling], indent=2) + "\n",
                                      encoding="utf-8")

    rng = np.random.default_rng([args.seed, 99])
    q_mismatch = 0
    for i in range(args.q_inputs):
        n = int(rng.integers(2, 65))
        x = rng.standard_normal(n)
        if i % 10 == 0:
            x[rng.integers(n)] = x[rng.integers(n)]
        if q_fast(x) != q_naive(x):
            q_mismatch += 1
    failures += q_mismatch
    lines.append(f"[{'ok' if q_mismatch == 0 else 'FAIL'}] q_fast == q_naive on {args.q_inputs} "
                 f"inputs: {q_mismatch} mismatches")

    if args.grad_instances:
        for ansatz in ("bilipschitz", "vandermonde", "mlp"):
            g = check_gradients(ansatz, args.grad_instances, seed=args.seed)
            bad = g.worst_rel_error > 1e-5
            failures += int(bad)
            lines.append(f"[{'FAIL' if bad else 'ok'}] gradients {ansatz}: worst relative error "
                         f"{g.worst_rel_error:.3g} over {g.instances} instances")

    (out / "reports.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)
    write_manifest(out / "manifest.json", args, failures=failures)
    print(f"verification {'passed' if failures == 0 else 'FAILED'}: {failures} violations")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def cmd_gen_data(args) -> int:
    from .data import export_csv, gen_dataset, save_dataset

    ds = gen_dataset(args.n, (args.train, args.val, args.test), args.seed, args.low, args.high)
    save_dataset(ds, args.out)
    if args.csv:
        export_csv(ds, args.csv)
    pos = float((ds.labels > 0).mean())
    print(f"wrote {args.out}: n={ds.n} train/val/test={ds.counts} seed={ds.seed} "
          f"positive labels {pos:.3f}")
    write_manifest(f"{args.out}.manifest.json", args, counts=list(ds.counts),
                   label_positive_fraction=pos, label_mean_abs=float(np.abs(ds.labels).mean()))
    return EXIT_OK


def cmd_train(args) -> int:
    from .data import load_dataset
    from .neural import DivergenceError, TrainConfig, build_model, evaluate, save_checkpoint, train
    from .neural.train import write_log_csv

    ds = load_dataset(args.data)
    if args.feature_seed is None:
        args.feature_seed = args.seed
    if args.init_seed is None:
        args.init_seed = args.seed + 1
    if args.log is None:
        args.log = f"{args.out}.log.csv"
    try:
        cfg = TrainConfig(args.epochs, args.batch_size, args.lr, args.factor, args.patience,
                          args.min_lr, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    model = build_model(args.ansatz, ds.n, ds.n, feature_seed=args.feature_seed,
                        init_seed=args.init_seed, hidden=args.hidden, phi_hidden=args.phi_hidden,
                        rho_hidden=args.rho_hidden, m=args.m, K=args.K, activation=args.activation)
    # record the architecture actually built, so the manifest has no implicit defaults
    if args.ansatz == "vandermonde":
        args.K = model.bank.K
        args.phi_hidden = list(model.phi.layer_sizes[1:])
        args.rho_hidden = list(model.rho.layer_sizes[1:-1])
    else:
        args.hidden = list(model.net.layer_sizes[1:-1])
        if args.ansatz == "bilipschitz":
            args.m = model.ensemble.m
    print(f"{args.ansatz}: {model.param_count()} trainable parameters, n={ds.n}")
    history = []

    def report(row):
        history.append(row)
        print(f"epoch {row.epoch:4d}  train_mae {row.train_mae:.6g}  val_mae {row.val_mae:.6g}  "
              f"lr {row.lr:.3g}  {row.wall_seconds:.1f}s", flush=True)

    try:
        train(model, ds, cfg, cache_dir=args.cache_dir, on_epoch=report)
    except DivergenceError as exc:
        write_log_csv(history, args.log)
        print(f"training diverged: {exc}", file=sys.stderr)
        write_manifest(f"{args.out}.manifest.json", args, param_count=model.param_count(),
                       diverged=str(exc))
        return EXIT_DIVERGED
    save_checkpoint(model, args.out)
    write_log_csv(history, args.log)
    val = evaluate(model, ds, "val")
    write_manifest(f"{args.out}.manifest.json", args, param_count=model.param_count(),
                   final_val=val, epochs_run=len(history))
    print(f"wrote {args.out}; val mae {val['mae']:.6g} mare {val['mare']:.6g}")
    return EXIT_OK


def antisymmetry_gap(model, x: np.ndarray, rng) -> float:
    """Largest ``|f(sigma x) - sign(sigma) f(x)| / |f(x)|`` over random relabellings."""
    from .symmetry import table_signs

    perms = np.argsort(rng.random(x.shape[:2]), axis=1)
    signs = table_signs(perms)
    base = model.predict(x)
    moved = model.predict(np.take_along_axis(x, perms[..., None], axis=1))
    denom = np.maximum(np.abs(base), np.finfo(float).tiny)
    return float((np.abs(moved - signs * base) / denom).max())


def cmd_eval(args) -> int:
    from .data import load_dataset
    from .neural import evaluate, load_checkpoint

    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint {args.checkpoint} not found")
    model = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if (model.n, model.d) != (ds.n, ds.n):
        raise UsageError(f"checkpoint expects ({model.n}, {model.d}) clouds; dataset has order {ds.n}")
    res = evaluate(model, ds, args.split)
    row = {"ansatz": model.tag, "n": ds.n, "split": args.split, "mae": repr(res["mae"]),
           "mare": repr(res["mare"]), "param_count": model.param_count()}
    print(f"{model.tag} n={ds.n} {args.split}: mae {res['mae']:.6g} mare {res['mare']:.6g} "
          f"(mare excluded {res['mare_excluded']}) params {model.param_count()}")
    results = Path(args.results)
    new = not results.exists() or results.stat().st_size == 0
    with open(results, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        if new:
            w.writeheader()
        w.writerow(row)
    code = EXIT_OK
    extra = {"metrics": res}
    if args.check_antisym:
        x, _ = ds.split(args.split)
        x = x[:args.antisym_samples]
        gap = antisymmetry_gap(model, x, np.random.default_rng(args.seed))
        extra["antisymmetry_gap"] = gap
        if model.tag == "mlp":
            print(f"antisymmetry gap (not enforced for mlp): {gap:.3g}")
        else:
            ok = gap <= 1e-12
            print(f"antisymmetry gap {gap:.3g} ({'ok' if ok else 'FAIL'}, limit 1e-12)")
            if not ok:
                code = EXIT_VERIFY
    write_manifest(f"{results}.manifest.json", args, **extra)
    return code


COMMANDS = {"verify": cmd_verify, "gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = resolve_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from threadpoolctl import threadpool_limits

    start = time.perf_counter()
    try:
        with threadpool_limits(limits=args.threads):
            code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"antisym {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError, ValueError) as exc:
        print(f"antisym {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
