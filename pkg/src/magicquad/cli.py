"""Command-line interface: train rules, price requests, run studies, validate configs.

Exit codes: 0 on success, 1 on configuration or validation errors, 2 on
numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from .eim import load_rule, save_rule
from .errors import ConfigError, ExtrapolationWarning, MagicQuadError, MalformedFileError, NumericalError
from .harness import (
    load_config,
    run_basket_demo,
    run_cos_comparison,
    run_offline_study,
    run_out_of_sample,
    sample_cloud_stats,
)
from .models import ModelParams, validate_box
from .payoffs import PayoffSpec
from .pricing import PriceRequest, price_magic


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="magicquad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a rule from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", required=True, help="rule file to write")

    p_price = sub.add_parser("price", help="price one request with a trained rule")
    p_price.add_argument("--rule", required=True)
    p_price.add_argument(
        "--params",
        required=True,
        help='JSON like {"spot":1.2,"maturity":0.7,"q":[0.04]} or @file',
    )
    p_price.add_argument("--discount", action="store_true")

    p_study = sub.add_parser("study", help="run one of the empirical studies")
    p_study.add_argument("which", choices=["offline", "oos", "cos", "basket"])
    p_study.add_argument("--config")
    p_study.add_argument("--rule", help="rule file (oos/cos studies)")
    p_study.add_argument("--out-dir", help="override the config's output directory")
    p_study.add_argument("--n-test", type=int, default=1000)
    p_study.add_argument("--seed", type=int, default=None)
    p_study.add_argument("--cos-l", type=float, default=None, help="cosine truncation multiplier")

    p_val = sub.add_parser("validate", help="check a config file and its parameter box")
    p_val.add_argument("--config", required=True)
    return parser


def _load_params_arg(arg: str) -> dict:
    text = arg
    if arg.startswith("@"):
        try:
            text = Path(arg[1:]).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read params file: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"params are not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("params must be a JSON object")
    return doc


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    report, rule = run_offline_study(cfg)
    Path(args.out).write_bytes(save_rule(rule))
    print(
        json.dumps(
            {
                "rule": args.out,
                "M": rule.m,
                "converged": rule.converged,
                "final_residual": rule.final_residual,
                "wall_clock_s": round(report.wall_clock, 3),
            }
        )
    )
    return 0


def _cmd_price(args) -> int:
    try:
        data = Path(args.rule).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read rule file: {exc}") from exc
    rule = load_rule(data)
    doc = _load_params_arg(args.params)
    try:
        spot = doc["spot"]
        maturity = float(doc["maturity"])
        q = tuple(float(v) for v in doc["q"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"params must provide spot, maturity and q: {exc}") from exc
    req = PriceRequest(
        payoff=PayoffSpec(rule.payoff_id, rule.strike, dim=rule.dim),
        model=ModelParams(rule.model_id, q, rule.rate),
        spot=tuple(spot) if isinstance(spot, list) else float(spot),
        maturity=maturity,
        eta=rule.eta,
        omega=(rule.omega_lo, rule.omega_hi)
        if rule.dim == 1
        else tuple(zip(rule.omega_lo, rule.omega_hi)),
        discount=args.discount,
    )
    extrapolated = False
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ExtrapolationWarning)
        price = price_magic(rule, req)
        extrapolated = any(issubclass(w.category, ExtrapolationWarning) for w in caught)
    print(json.dumps({"price": price, "M": rule.m, "extrapolation": extrapolated}))
    return 0


def _cmd_study(args) -> int:
    if args.which == "basket":
        out_dir = args.out_dir or "out/basket"
        report, rule = run_basket_demo(out_dir=out_dir)
        report.write_csv(out_dir)
        print(json.dumps({"out_dir": out_dir, "M": rule.m, "final_residual": rule.final_residual}))
        return 0
    if not args.config:
        raise ConfigError(f"study {args.which} requires --config")
    cfg = load_config(args.config)
    out_dir = args.out_dir or cfg.out_dir
    if args.which == "offline":
        report, rule = run_offline_study(cfg)
        report.write_csv(out_dir)
        rule_path = Path(out_dir) / f"rule_{cfg.model}.json"
        rule_path.write_bytes(save_rule(rule))
        print(
            json.dumps(
                {
                    "out_dir": out_dir,
                    "rule": str(rule_path),
                    "M": rule.m,
                    "final_residual": rule.final_residual,
                    "wall_clock_s": round(report.wall_clock, 3),
                }
            )
        )
        return 0
    if not args.rule:
        raise ConfigError(f"study {args.which} requires --rule")
    rule = load_rule(Path(args.rule).read_bytes())
    if args.which == "oos":
        report = run_out_of_sample(cfg, rule, n_test=args.n_test, seed=args.seed)
        report.write_csv(out_dir)
        print(
            json.dumps(
                {
                    "out_dir": out_dir,
                    "max_abs_err": float(report.arrays["abs_err"].max()),
                    "mean_abs_err": float(report.arrays["abs_err"].mean()),
                }
            )
        )
        return 0
    report = run_cos_comparison(cfg, rule, trunc_l=args.cos_l, n_test=args.n_test, seed=args.seed)
    report.write_csv(out_dir)
    print(
        json.dumps(
            {
                "out_dir": out_dir,
                "magic_linf_final": float(report.arrays["magic_linf"][-1]),
                "cos_linf_final": float(report.arrays["cos_linf"][-1]),
                "n_included": int(report.metadata["n_included"]),
            }
        )
    )
    return 0


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    violations = validate_box(cfg.box)
    for v in violations:
        print(f"corner-check: {v}")
    try:
        eta = cfg.resolved_eta()
        probe, stats = sample_cloud_stats(cfg.box, min(200, cfg.cloud_size), cfg.seed)
    except MagicQuadError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 1
    print(
        json.dumps(
            {
                "model": cfg.model,
                "eta": eta,
                "probe_samples": len(probe),
                "acceptance_rate": stats["acceptance_rate"],
                "corner_violations": violations,
            }
        )
    )
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "price":
            return _cmd_price(args)
        if args.command == "study":
            return _cmd_study(args)
        return _cmd_validate(args)
    except (ConfigError, MalformedFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except MagicQuadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
