"""Command-line entry point.

Exit status: 0 success, 1 validation error, 2 runtime error, 3 failed gradient check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import divergence
from .calibration import read_samples_jsonl, compute_ece
from .config import RunConfig, load_config
from .errors import ConfigError
from .experiment import (GRADCHECK_TOL, STREAM_EVAL, build_setup, gradcheck, run_training, stream,
                         sweep_alpha)
from .fixed_point import RegularizedProblem, solve_optimal_policy
from .policy import load_checkpoint
from .tasks import eval_calibration

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_CHECK_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "out", None) is not None:
        overrides.append(f"out_dir={args.out}")
    return load_config(args.config, overrides).validate()


def cmd_train(args) -> int:
    cfg = _config(args)
    result = run_training(cfg)
    f = result.final
    print(f"step {f['step']}: accuracy {f['accuracy_train_task']:.4f} probe ECE {f['ece_probe']:.4f} "
          f"entropy {f['entropy_train_task']:.4f} -> {cfg.out_dir}")
    return EXIT_OK


def _parse_alphas(text: str) -> list[float]:
    try:
        return [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"malformed alpha list {text!r}") from None


def cmd_sweep_alpha(args) -> int:
    cfg = _config(args)
    rows = sweep_alpha(cfg, _parse_alphas(args.alphas), cfg.out_dir)
    for r in rows:
        print(f"alpha={r['alpha']}: accuracy {r['final_accuracy']:.4f} ECE {r['final_ece']:.4f} "
              f"entropy {r['final_entropy']:.4f}")
    return EXIT_OK


def cmd_landscape(args) -> int:
    try:
        grid = divergence.LandscapeGrid.parse(args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    table = divergence.penalty_landscape(args.alpha, grid)
    lines = "\n".join(divergence.landscape_csv_lines(table)) + "\n"
    _write_or_print(lines, args.out)
    return EXIT_OK


def _parse_ratio_grid(text: str) -> np.ndarray:
    try:
        n, lo, hi = text.split(":")
        n, lo, hi = int(n), float(lo), float(hi)
    except ValueError:
        raise UsageError(f"malformed ratio grid {text!r}; expected N:lo:hi") from None
    if n < 2 or not 0 < lo < hi < np.inf:
        raise UsageError(f"ratio grid {text!r} needs N >= 2 and 0 < lo < hi")
    return np.geomspace(lo, hi, n)


def cmd_coefficients(args) -> int:
    alphas = _parse_alphas(args.alphas)
    ratios = _parse_ratio_grid(args.grid)
    out = ["alpha,ratio,coefficient"]
    for a in alphas:
        spec = (divergence.DivergenceSpec(divergence.DivergenceKind.RKL, 0.0) if a == 0
                else divergence.DivergenceSpec(divergence.DivergenceKind.SRKL, a))
        coef = divergence.gradient_coefficient(spec, ratios)
        out.extend(f"{a!r},{r:.12g},{c:.12g}" for r, c in zip(ratios, coef))
    _write_or_print("\n".join(out) + "\n", args.out)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config(args)
    result = gradcheck(cfg, args.n_params, corrupt=args.corrupt)
    status = "PASS" if result.passed else "FAIL"
    print(f"{status} max relative error {result.max_rel_error:.3e} over {result.n_params} parameters "
          f"(tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def cmd_fixed_point(args) -> int:
    text = sys.stdin.read() if args.problem == "-" else Path(args.problem).read_text()
    try:
        problem = RegularizedProblem.from_dict(json.loads(text))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed problem JSON: {exc}") from None
    solution = solve_optimal_policy(problem)
    _write_or_print(json.dumps(solution.as_dict()) + "\n", args.out)
    return EXIT_OK


def cmd_eval_ece(args) -> int:
    if args.samples:
        report = compute_ece(read_samples_jsonl(args.samples), args.bins)
    else:
        if not args.checkpoint:
            raise UsageError("eval-ece needs --samples or --checkpoint")
        cfg = _config(args)
        setup = build_setup(cfg)
        policy = load_checkpoint(args.checkpoint)
        report = eval_calibration(policy, setup.ref, setup.probes, cfg.eval.n_samples, args.bins,
                                  stream(cfg.seed, STREAM_EVAL, 1))
    print(f"ECE {report.ece:.6f} accuracy {report.accuracy:.4f} over {report.n_questions} questions")
    if args.reliability:
        report.write_csv(args.reliability)
    return EXIT_OK


def _write_or_print(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _add_run_flags(p, out=True):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--seed", type=int)
    if out:
        p.add_argument("--out", help="run directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srkl-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training job")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-alpha", help="one SRKL run per alpha plus summary.csv")
    _add_run_flags(p)
    p.add_argument("--alphas", default="0.4,0.8,0.9", help="comma-separated values in (0, 1)")
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("landscape", help="per-token penalty over a (p_theta, p_ref) grid as CSV")
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--grid", default="200", help="N or N:lo:hi")
    p.add_argument("--out")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("coefficients", help="penalty gradient coefficient over a ratio grid as CSV")
    p.add_argument("--alphas", default="0,0.4,0.8,0.9")
    p.add_argument("--grid", default="481:1e-12:1e12", help="N:lo:hi ratio grid (log-spaced)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_coefficients)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference objective gradient")
    _add_run_flags(p, out=False)
    p.add_argument("--n-params", type=int, default=50)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("fixed-point", help="solve the single-state SRKL optimal policy")
    p.add_argument("problem", help="problem JSON file or - for stdin")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("eval-ece", help="ECE from answer samples or a checkpoint")
    _add_run_flags(p, out=False)
    p.add_argument("--samples", help="JSONL with question_id, answers, gold")
    p.add_argument("--checkpoint")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--reliability", help="write reliability-diagram CSV here")
    p.set_defaults(func=cmd_eval_ece)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
