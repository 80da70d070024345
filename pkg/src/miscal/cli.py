"""Command-line front end.

Subcommands:

    train         fit a model on a dataset spec, write checkpoint + history CSV
    attack        perturb a dataset against a checkpoint, report calibration
    sweep-lambda  grid of composite-loss weights x budgets, CSV output
    transfer      cross-model attack matrix (threat x target), CSV output
    eval          clean calibration report

Every artifact embeds the exact invocation and seed, and re-running that
invocation reproduces the artifact byte for byte. Exit codes: 0 success,
2 usage errors, 3 file or format errors, 4 config or input violations.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

from .attacks import METHODS, AttackConfig
from .calibration import evaluate
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset, parse_dataset_spec
from .errors import FormatError, InvalidConfigError, MiscalError
from .nn import init_model
from .training import STRATEGIES, TrainConfig, train

DEFAULT_EPS_SWEEP = "0.02,0.04,0.06,0.08,0.1"
DEFAULT_LAMBDAS = "1,3,5,7,10"


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path, invocation: str, seed: int, header: str, rows) -> None:
    lines = [f"# invocation: {invocation}", f"# seed: {seed}", header, *rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _dataset_for(args, manifest: dict[str, str] | None) -> Dataset:
    spec = args.data or (manifest or {}).get("data")
    if not spec:
        raise InvalidConfigError(
            "no dataset: pass --data or use a checkpoint whose manifest records one"
        )
    dataset = parse_dataset_spec(spec)
    if args.limit:
        dataset = dataset.take(args.limit)
    return dataset


def _attack_config(args, epsilon: float) -> AttackConfig:
    return AttackConfig(
        epsilon=epsilon,
        iterations=args.iters,
        alpha=args.alpha,
        lam=args.lam,
        seed=args.seed,
    )


def cmd_train(args, invocation: str) -> int:
    dataset = parse_dataset_spec(args.data)
    dims = [dataset.dim, *args.hidden, dataset.num_classes]
    inner = None
    if args.strategy != "pt":
        inner = AttackConfig(
            epsilon=args.eps, iterations=args.iters, alpha=args.alpha,
            lam=args.lam, seed=args.seed,
        )
    cfg = TrainConfig(
        strategy=args.strategy, eta=args.eta, epochs=args.epochs,
        batch_size=args.batch_size, inner_attack=inner, seed=args.seed,
    )
    model, history = train(init_model(dims, args.seed, args.hidden_bias), dataset, cfg)

    extra = {"data": args.data, "strategy": args.strategy, "invocation": invocation}
    save_checkpoint(model, args.out, args.seed, extra)
    history_path = Path(args.out).with_suffix(".history.csv")
    _write_csv(
        history_path, invocation, args.seed, "epoch,loss,acc",
        (f"{i + 1},{e.loss!r},{e.accuracy!r}" for i, e in enumerate(history.epochs)),
    )
    print(f"wrote {args.out} and {history_path} (final checksum {history.final_checksum[:12]})")
    return 0


def _report_payload(report, invocation: str) -> dict:
    payload = report.to_dict()
    payload["invocation"] = invocation
    return payload


def cmd_attack(args, invocation: str) -> int:
    model, manifest = load_checkpoint(args.model)
    dataset = _dataset_for(args, manifest)
    if len(args.eps) == 1:
        cfg = _attack_config(args, args.eps[0])
        report = evaluate(model, dataset, (args.method, cfg), args.bins)
        _write_json(args.out, _report_payload(report, invocation))
    else:
        rows = []
        for eps in args.eps:
            report = evaluate(model, dataset, (args.method, _attack_config(args, eps)), args.bins)
            rows.append(f"{eps!r},{report.overall_acc!r},{report.overall_conf!r},{report.mcs!r}")
        _write_csv(args.out, invocation, args.seed, "eps,acc,conf,mcs", rows)
    print(f"wrote {args.out}")
    return 0


def cmd_sweep_lambda(args, invocation: str) -> int:
    model, manifest = load_checkpoint(args.model)
    dataset = _dataset_for(args, manifest)
    rows = []
    for lam in args.lambdas:
        for eps in args.eps:
            cfg = AttackConfig(
                epsilon=eps, iterations=args.iters, alpha=args.alpha, lam=lam, seed=args.seed
            )
            report = evaluate(model, dataset, ("iaa", cfg), args.bins)
            rows.append(
                f"{lam!r},{eps!r},{report.overall_acc!r},"
                f"{report.overall_conf!r},{report.mcs!r}"
            )
    _write_csv(args.out, invocation, args.seed, "lambda,eps,acc,conf,mcs", rows)
    print(f"wrote {args.out}")
    return 0


def cmd_transfer(args, invocation: str) -> int:
    threats = {path: load_checkpoint(path) for path in args.threat}
    targets = {path: load_checkpoint(path) for path in args.target}
    first_manifest = next(iter(threats.values()))[1]
    dataset = _dataset_for(args, first_manifest)
    cfg = _attack_config(args, args.eps)
    rows = []
    for threat_path, (threat_model, _) in threats.items():
        for target_path, (target_model, _) in targets.items():
            report = evaluate(
                target_model, dataset, (args.method, cfg), args.bins,
                threat_model=threat_model,
            )
            rows.append(f"{threat_path},{target_path},{report.mcs!r}")
    _write_csv(args.out, invocation, args.seed, "threat,target,mcs", rows)
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args, invocation: str) -> int:
    model, manifest = load_checkpoint(args.model)
    dataset = _dataset_for(args, manifest)
    report = evaluate(model, dataset, None, args.bins, seed=args.seed)
    _write_json(args.out, _report_payload(report, invocation))
    print(f"wrote {args.out}")
    return 0


def _add_eval_flags(p, *, attack_schedule: bool = True) -> None:
    p.add_argument("--data", help="dataset spec (default: the checkpoint's recorded one)")
    p.add_argument("--limit", type=int, default=0, help="evaluate only the first N examples")
    p.add_argument("--bins", type=int, default=10, help="confidence bins (default 10)")
    if attack_schedule:
        p.add_argument("--iters", type=int, default=40, help="attack iterations (default 40)")
        p.add_argument("--alpha", type=float, default=None,
                       help="attack step size (default eps/iters)")
    p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="miscal",
        description="Calibration attack lab: craft over- and underconfidence "
                    "perturbations, train against them, and measure the damage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data", required=True, help="dataset spec, e.g. synth:K=10,n=200,...")
    p.add_argument("--strategy", choices=STRATEGIES, default="pt")
    p.add_argument("--hidden", type=_int_list, default=[6],
                   help="comma-separated hidden layer widths (default 6)")
    p.add_argument("--hidden-bias", type=float, default=2.0,
                   help="initial hidden bias (default 2.0)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--eta", type=float, default=0.5, help="learning rate")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--eps", type=float, default=0.3, help="inner attack budget")
    p.add_argument("--iters", type=int, default=10, help="inner attack iterations")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path; history CSV lands beside it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="attack a checkpoint and report calibration")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=METHODS, default="iaa")
    p.add_argument("--eps", type=_float_list, default=[0.1],
                   help="budget, or comma list for a sweep (CSV output)")
    p.add_argument("--lambda", dest="lam", type=float, default=5.0)
    _add_eval_flags(p)
    p.add_argument("--out", required=True, help="report JSON (or CSV when sweeping)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep-lambda", help="grid of loss weights x budgets")
    p.add_argument("--model", required=True)
    p.add_argument("--lambdas", dest="lambdas", type=_float_list, default=_float_list(DEFAULT_LAMBDAS))
    p.add_argument("--eps", type=_float_list, default=_float_list(DEFAULT_EPS_SWEEP))
    _add_eval_flags(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("transfer", help="cross-model attack matrix")
    p.add_argument("--threat", required=True, type=lambda s: s.split(","),
                   help="comma-separated checkpoints that craft the perturbations")
    p.add_argument("--target", required=True, type=lambda s: s.split(","),
                   help="comma-separated checkpoints under evaluation")
    p.add_argument("--method", choices=METHODS, default="iaa")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--lambda", dest="lam", type=float, default=5.0)
    _add_eval_flags(p)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="clean calibration report")
    p.add_argument("--model", required=True)
    _add_eval_flags(p, attack_schedule=False)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    invocation = shlex.join(argv)
    try:
        return args.func(args, invocation)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MiscalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
