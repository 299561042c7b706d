"""Command line interface: ``irt-forge {train,simulate,bench,plot-icc}``.

Exit codes: 0 success, 2 bad arguments or unknown model/item, 3 unreadable
input data, 4 training diverged or failed to converge, 1 anything else.
"""

from __future__ import annotations

import argparse
import contextlib
import importlib
import logging
import os
import sys
import time
from pathlib import Path

from . import api, bench, io, plotting, registry
from .dataset import SimulationSpec, simulate
from .errors import ContractError, FormatError, IRTError, RegistryError, TrainingError
from .mml_em import MMLConfig
from .vi_engine import TrainConfig

log = logging.getLogger("irt_forge")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4
THREADS_ENV = "IRT_FORGE_THREADS"


class UsageError(Exception):
    pass


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _rate(text):
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1), got {text}")
    return value


def _add_svi_flags(p, epochs_default):
    p.add_argument("--epochs", type=_positive_int, default=epochs_default)
    p.add_argument("--lr", type=_positive_float, default=0.1, help="Adam learning rate")
    p.add_argument("--batch-size", type=_positive_int, default=4096)
    p.add_argument("--mc-samples", type=_positive_int, default=1)
    p.add_argument("--no-hier", action="store_true", help="fixed Normal(0, 1) ability prior")
    p.add_argument("--quad-points", type=_positive_int, default=41, help="EM quadrature nodes")
    p.add_argument("--max-iters", type=_positive_int, default=200, help="EM iteration budget")
    p.add_argument("--estimator", choices=api.ESTIMATORS, default="svi")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irt-forge", description="Fit item response theory models.")
    parser.add_argument("--verbose", "-v", action="store_true")
    parser.add_argument(
        "--plugin",
        action="append",
        default=[],
        metavar="MODULE",
        help="import MODULE before running, e.g. to register extra models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model to a jsonlines dataset")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("outdir")
    _add_svi_flags(p, epochs_default=100)

    p = sub.add_parser("simulate", help="write a synthetic jsonlines dataset and its generating parameters")
    p.add_argument("out", help="jsonlines output path")
    p.add_argument("--model", default="1pl")
    p.add_argument("--subjects", type=_positive_int, default=100)
    p.add_argument("--items", type=_positive_int, default=20)
    p.add_argument("--missing", type=_rate, default=0.0, help="fraction of cells left unobserved")
    p.add_argument("--guessing", type=float, default=None, help="fixed 3PL guessing value")
    p.add_argument("--truth", default=None, help="truth file path (default: <out stem>.truth.json)")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("bench", help="time fits over a grid of dataset sizes")
    p.add_argument("--items", type=_positive_int, nargs="+", required=True)
    p.add_argument("--subjects", type=_positive_int, nargs="+", required=True)
    p.add_argument("--model", default="1pl")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    _add_svi_flags(p, epochs_default=10)

    p = sub.add_parser("plot-icc", help="draw item characteristic curves from a parameters file")
    p.add_argument("params")
    p.add_argument("out")
    p.add_argument("--items", nargs="+", required=True, metavar="ITEM_ID")
    p.add_argument("--csv", action="store_true", help="write a theta/probability table instead of SVG")
    p.add_argument("--points", type=_positive_int, default=81)
    return parser


def _resolve_seed(seed):
    if seed is None:
        seed = time.time_ns() % (2**32)
        log.warning("no --seed given; using seed %d", seed)
    return seed


def _config_from_args(args, estimator):
    if estimator == "mml":
        return MMLConfig(n_quad=args.quad_points, max_iters=args.max_iters)
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        mc_samples=args.mc_samples,
        seed=_resolve_seed(args.seed),
        hierarchical=not args.no_hier,
    )


def cmd_train(args) -> int:
    reg = registry.lookup(args.model)
    if args.quad_points < 3:
        raise UsageError("--quad-points must be at least 3")
    config = _config_from_args(args, args.estimator)
    dataset = io.read_jsonlines(args.data)
    log.info("read %d subjects, %d items, %d responses", dataset.n_subjects, dataset.n_items, dataset.n_observations)
    report, _ = api.train(dataset, reg.name, args.outdir, args.estimator, config)
    status = "converged" if report.converged else "epoch budget reached"
    print(
        f"final loss {report.final_loss:.6f} after {len(report.loss_trace)} epochs "
        f"in {report.seconds:.2f} s ({status})"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    reg = registry.lookup(args.model)
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.json")
    try:
        spec = SimulationSpec(
            kind=reg.kind,
            n_subjects=args.subjects,
            n_items=args.items,
            missing_rate=args.missing,
            seed=_resolve_seed(args.seed),
            guessing=args.guessing,
        )
    except ContractError as exc:
        raise UsageError(str(exc)) from None
    dataset, items, abilities = simulate(spec)
    io.write_jsonlines(dataset, out)
    io.save_document(io.document_from_params(dataset, items, abilities, reg.name), truth)
    print(f"wrote {dataset.n_observations} responses to {out} and parameters to {truth}")
    return EXIT_OK


def cmd_bench(args) -> int:
    reg = registry.lookup(args.model)
    config = _config_from_args(args, args.estimator)
    seed = config.seed if isinstance(config, TrainConfig) else (args.seed or 0)
    rows = bench.run_bench(args.items, args.subjects, reg.name, args.estimator, config, seed=seed)
    text = bench.bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot_icc(args) -> int:
    doc = io.read_parameters(args.params)
    missing = [item for item in args.items if item not in set(doc.item_ids)]
    if missing:
        raise UsageError(f"unknown item id(s): {', '.join(missing)}")
    table = plotting.icc_table(doc, args.items, n_points=args.points)
    if args.csv:
        text = plotting.table_csv(table)
    else:
        position = {item: k for k, item in enumerate(doc.item_ids)}
        text = plotting.render_svg(table, {item: doc.diff[position[item]] for item in args.items})
    Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "simulate": cmd_simulate, "bench": cmd_bench, "plot-icc": cmd_plot_icc}


def _thread_limit():
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return None
    try:
        n = int(value)
    except ValueError:
        n = 0
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        for module in args.plugin:
            importlib.import_module(module)
        threads = _thread_limit()
        if threads is not None:
            from threadpoolctl import threadpool_limits

            limiter = threadpool_limits(limits=threads)
        else:
            limiter = contextlib.nullcontext()
        with limiter:
            return COMMANDS[args.command](args)
    except (UsageError, RegistryError) as exc:
        print(f"irt-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ContractError) as exc:
        print(f"irt-forge: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"irt-forge: error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IRTError, OSError, ImportError) as exc:
        print(f"irt-forge: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
