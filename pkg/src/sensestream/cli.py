"""Command-line entry point.

Exit codes: 0 success, 1 runtime or IO failure, 2 usage or validation error.
Machine-readable output only goes to the files named by ``--out`` (``-``
means standard output); summaries and diagnostics go to standard error.
Set ``SIMULSENSE_LOG`` to a logging level (DEBUG, INFO, ...) for more detail.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import report
from .datagen import LatencyTag, dumps_manifest, generate_corpus, read_manifest, split_manifest, tier_density
from .errors import InvalidRangeError, NonPositiveThresholdError, PolicySpecError, SenseStreamError
from .policies import PolicySpec, parse_policy
from .simulator import OracleSpec, parse_costs, parse_weights, run_corpus
from .training import TrainConfig, curve_csv, evaluate_f1, train_toy_predictor

log = logging.getLogger("sensestream")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Invalid arguments detected after parsing (exit 2)."""


# -- helpers ------------------------------------------------------------------


def parse_gammas(text: str) -> list[float]:
    """``start:stop:step`` (inclusive of stop) or a comma list such as ``0.5,1,2``."""
    text = text.strip()
    if not text:
        raise InvalidRangeError("empty gamma list")
    try:
        if ":" in text:
            parts = [Decimal(p) for p in text.split(":")]
            if len(parts) != 3:
                raise InvalidRangeError(f"gamma range must be start:stop:step, got {text!r}")
            start, stop, step = parts
            if step <= 0 or start > stop:
                raise InvalidRangeError(f"bad gamma range {text!r}")
            values = []
            g = start
            while g <= stop:
                values.append(float(g))
                g += step
        else:
            values = [float(Decimal(p)) for p in text.split(",") if p.strip()]
    except InvalidOperation:
        raise InvalidRangeError(f"cannot parse gamma list {text!r}") from None
    if not values:
        raise InvalidRangeError("empty gamma list")
    bad = [g for g in values if not g > 0]
    if bad:
        raise NonPositiveThresholdError(f"gamma must be positive, got {bad[0]:g}")
    return values


def with_tag(spec: PolicySpec, tag: LatencyTag) -> PolicySpec:
    if spec.kind == "sense":
        return dataclasses.replace(spec, tag=tag)
    if spec.kind == "mockllm":
        return dataclasses.replace(spec, base=with_tag(spec.base, tag))
    return spec


def write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _policies(args) -> list[PolicySpec]:
    specs = [parse_policy(p) for p in args.policy]
    if args.tag:
        tag = LatencyTag.parse(args.tag)
        specs = [with_tag(s, tag) for s in specs]
    return specs


def _oracles(args) -> OracleSpec:
    return OracleSpec(weights=parse_weights(args.weights), costs=parse_costs(args.costs or ""))


def _simulate_rows(manifest, spec, args) -> tuple[list, list]:
    results = run_corpus(manifest, spec, _oracles(args), args.chunk_ms, args.parallelism)
    return results, [report.utterance_row(r.metrics()) for r in results]


def _summary(rows) -> str:
    lines = []
    for agg in report.aggregate(rows):
        gamma = f" gamma={agg['gamma']}" if agg["gamma"] else ""
        lines.append(
            f"{agg['policy']}{gamma}: {agg['n_utterances']} utterances, "
            f"BLEU {agg['mean_bleu']}, LAAL {agg['mean_laal_ideal_s']} s "
            f"(CA {agg['mean_laal_ca_s']} s), RTF {agg['mean_rtf']}"
        )
    return "\n".join(lines)


# -- subcommands ----------------------------------------------------------------


def cmd_gen_data(args) -> int:
    manifest = generate_corpus(
        args.seed,
        n_utterances=args.n,
        min_duration_s=args.min_duration,
        max_duration_s=args.max_duration,
        dim=args.dim,
        frame_rate=args.frame_rate,
    )
    write_text(args.out, dumps_manifest(manifest))
    density = tier_density(manifest)
    print(
        f"wrote {len(manifest)} utterances to {args.out}; units "
        + ", ".join(f"{k}={v}" for k, v in density.items()),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    if len(args.policy) != 1:
        raise UsageError("simulate takes exactly one --policy")
    (spec,) = _policies(args)
    manifest = read_manifest(args.manifest)
    log.info("simulating %s on %d utterances", spec, len(manifest))
    results, rows = _simulate_rows(manifest, spec, args)
    write_text(args.out, report.utterance_csv(rows))
    if args.events:
        events_dir = Path(args.events)
        events_dir.mkdir(parents=True, exist_ok=True)
        for res in results:
            write_text(str(events_dir / f"{res.utterance_id}.jsonl"), res.events_jsonl())
    if rows:
        print(_summary(rows), file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    specs = _policies(args)
    gammas = parse_gammas(args.gammas)
    points = []
    for spec in specs:
        if spec.sense is None:
            points.append(spec)
        else:
            points.extend(spec.with_gamma(g) for g in gammas)
    manifest = read_manifest(args.manifest)
    all_rows, agg_rows = [], []
    for spec in points:
        log.info("sweep point %s", spec)
        _, rows = _simulate_rows(manifest, spec, args)
        all_rows.extend(rows)
        agg_rows.extend(report.aggregate(rows))
    write_text(args.out, report.aggregate_csv(agg_rows))
    if args.per_utterance:
        write_text(args.per_utterance, report.utterance_csv(all_rows))
    print(f"evaluated {len(points)} configurations on {len(manifest)} utterances", file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args) -> int:
    rows = []
    for path in args.input:
        text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
        try:
            rows.extend(report.read_utterance_csv(text))
        except (ValueError, KeyError) as exc:
            raise SenseStreamError(f"{path}: {exc}") from None
    write_text(args.out, report.aggregate_csv(report.aggregate(rows)))
    if rows:
        print(_summary(rows), file=sys.stderr)
    return EXIT_OK


def cmd_train_toy(args) -> int:
    tag = LatencyTag.parse(args.tag)
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    if not args.gamma > 0:
        raise NonPositiveThresholdError(f"gamma must be positive, got {args.gamma:g}")
    manifest = read_manifest(args.manifest)
    if args.heldout:
        train, held = manifest, read_manifest(args.heldout)
    else:
        train, held = split_manifest(manifest, args.holdout)
    if not len(held):
        log.warning("no held-out utterances; reporting F1 on the training set")
        held = train
    cfg = TrainConfig(epochs=args.epochs)
    if args.step_size is not None:
        cfg.step_size = args.step_size
    log.info("training on %d utterances, evaluating on %d", len(train), len(held))
    pred, curve = train_toy_predictor(train, tag, config=cfg)
    for row in curve:
        log.debug("epoch %d mean loss %.6f", row.epoch, row.mean_total)
    write_text(args.out, curve_csv(curve))
    if args.predictor:
        write_text(args.predictor, pred.to_json())
    f1 = evaluate_f1(pred, held, tag, gamma=args.gamma, tolerance=args.tolerance)
    print(
        f"trained on {len(train)} utterances for {args.epochs} epochs; "
        f"final loss {curve[-1].mean_total:.6f}; held-out boundary F1 {f1:.4f}",
        file=sys.stderr,
    )
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_simulation_args(p, multi: bool):
    p.add_argument("--manifest", help="corpus manifest (JSONL)")
    p.add_argument(
        "--policy",
        action="append",
        default=None,
        help="policy spec, e.g. sense:gamma=1.0,tag=high" + (" (repeatable)" if multi else ""),
    )
    p.add_argument("--tag", choices=[t.value for t in LatencyTag], help="override the latency tag of sense policies")
    p.add_argument("--weights", default="gt", help="weight oracle: gt[:profile=peak|spread], uniform:rate=R, predictor:path=P")
    p.add_argument("--costs", default="", help="cost model, e.g. encoder_ms=30,call_ms=80,token_ms=5")
    p.add_argument("--chunk-ms", type=float, default=500.0)
    p.add_argument("--parallelism", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sensestream", description="Sense-unit streaming translation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file whose keys override option defaults")
        p.add_argument("--out", help="output path ('-' for standard output)")
        return p

    p = add("gen-data", cmd_gen_data, "generate a synthetic annotated corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=20, help="number of utterances")
    p.add_argument("--min-duration", type=float, default=6.0, help="seconds")
    p.add_argument("--max-duration", type=float, default=16.0, help="seconds")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--frame-rate", type=float, default=50.0)

    p = add("simulate", cmd_simulate, "simulate one policy on every utterance")
    _add_simulation_args(p, multi=False)
    p.add_argument("--events", help="directory for per-utterance event logs (JSONL)")

    p = add("sweep", cmd_sweep, "evaluate policies across a gamma range")
    _add_simulation_args(p, multi=True)
    p.add_argument("--gammas", default="0.5:5.0:0.5", help="start:stop:step or comma list")
    p.add_argument("--per-utterance", help="also write per-utterance rows here")

    p = add("metrics", cmd_metrics, "aggregate per-utterance metrics CSV files")
    p.add_argument("--input", action="append", default=None, help="per-utterance CSV (repeatable, '-' for stdin)")

    p = add("train-toy", cmd_train_toy, "fit the toy weight predictor")
    p.add_argument("--manifest")
    p.add_argument("--heldout", help="separate held-out manifest")
    p.add_argument("--holdout", type=float, default=0.2, help="held-out fraction when --heldout is absent")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--step-size", type=float, default=None)
    p.add_argument("--tag", default="high", choices=[t.value for t in LatencyTag])
    p.add_argument("--gamma", type=float, default=1.0, help="threshold for F1 evaluation")
    p.add_argument("--tolerance", type=int, default=2, help="F1 matching tolerance in frames")
    p.add_argument("--predictor", help="write the trained predictor (JSON) here")
    return parser


_REQUIRED = {
    "gen-data": ("out",),
    "simulate": ("manifest", "policy", "out"),
    "sweep": ("manifest", "policy", "out"),
    "metrics": ("input", "out"),
    "train-toy": ("manifest", "out"),
}


def parse_args(argv) -> tuple[argparse.ArgumentParser, argparse.Namespace]:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        if not isinstance(overrides, dict):
            parser.error("--config must hold a JSON object")
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        allowed = set(vars(args)) - {"func", "command", "config"}
        unknown = sorted(set(overrides) - allowed)
        if unknown:
            parser.error(f"unknown --config key(s): {', '.join(unknown)}")
        if isinstance(overrides.get("policy"), str):
            overrides["policy"] = [overrides["policy"]]
        if isinstance(overrides.get("input"), str):
            overrides["input"] = [overrides["input"]]
        # explicit command-line flags win over the config file
        defaults = build_parser().parse_args([args.command])
        explicit = {k for k, v in vars(args).items() if k in vars(defaults) and v != getattr(defaults, k)}
        for key, value in overrides.items():
            if key not in explicit:
                setattr(args, key, value)
    missing = [k for k in _REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.error("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if getattr(args, "parallelism", 1) < 1:
        parser.error("--parallelism must be >= 1")
    if getattr(args, "chunk_ms", 1.0) <= 0:
        parser.error("--chunk-ms must be positive")
    return parser, args


def _configure_logging():
    level = os.environ.get("SIMULSENSE_LOG", "WARNING").strip().upper()
    if level.isdigit():
        level = int(level)
    elif not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        _, args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, PolicySpecError, NonPositiveThresholdError, InvalidRangeError) as exc:
        print(f"sensestream {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"sensestream {args.command}: error: {where}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except SenseStreamError as exc:
        print(f"sensestream {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
