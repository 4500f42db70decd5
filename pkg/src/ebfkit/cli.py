"""Command line entry points.

Exit codes: 0 success, 1 usage/input errors, 2 numerical failures (bad
covariances, degenerate conditionals).  Every failure prints one
machine-parseable line starting with ``error:`` to stderr.
"""

from __future__ import annotations

import argparse
import fnmatch
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # python 3.10
    import tomli as tomllib

import numpy as np

from .covstruct import validate_pd
from .crossed_gibbs import (
    CrossedModelConfig,
    GibbsConfig,
    crossed_block_manifest,
    gibbs_fit,
    read_dataset,
    simulate_dataset,
    write_dataset,
)
from .ebf_core import VARIANT_FULL, VARIANT_MEAN, log_ebf, log_ebf_joint
from .errors import EbfkitError, NumericalError, ParseError
from .posterior_io import (
    block_tau,
    load_manifest,
    pooled_ess,
    read_draws,
    save_manifest,
    summarize_block,
    write_draws,
    write_ebf_report,
)
from .sim_study import SimStudyConfig, run_grid

SEED_ENV = "EBFKIT_SEED"


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 and a single error line."""

    def error(self, message):
        self.exit(1, f"error: {message}\n")


def _resolve_seed(flag_value: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return flag_value
    try:
        return int(env)
    except ValueError:
        raise ParseError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _reject_unknown(obj: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ParseError(f"unknown {where} keys: {', '.join(unknown)}")


_MODEL_KEYS = {
    "J", "K", "n", "alpha", "sigma2",
    "tau11", "tau12", "rho1", "tau21", "tau22", "rho2",
}


def cmd_simulate(args) -> int:
    obj = _load_toml(args.config)
    _reject_unknown(obj, _MODEL_KEYS, "simulate config")
    for key in ("J", "K", "n"):
        if key not in obj:
            raise ParseError(f"simulate config requires {key}")
    config = CrossedModelConfig(**obj, seed=_resolve_seed(args.seed))
    write_dataset(simulate_dataset(config), args.out)
    return 0


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    config = GibbsConfig(
        iterations=args.iters,
        burn_in=args.burnin,
        thin=args.thin,
        seed=_resolve_seed(args.seed),
    )
    draws = gibbs_fit(data, config)
    write_draws(draws, args.out_draws)
    if args.out_manifest:
        save_manifest(crossed_block_manifest(data.n_dim1, data.n_dim2), args.out_manifest)
    return 0


def cmd_ebf(args) -> int:
    draws = read_draws(args.draws)
    manifest = load_manifest(args.manifest)
    manifest.validate_against(draws)
    variant = args.variant or manifest.variant
    ridge = manifest.ridge if args.ridge is None else args.ridge
    results = []
    for block in manifest.blocks:
        summary, tau = summarize_block(draws, block, ridge=ridge, variant=variant)
        results.append(log_ebf(summary, block.structure, tau))
    if args.joint:
        ids = [s.strip() for s in args.joint.split(",") if s.strip()]
        if not ids:
            raise ParseError("--joint needs at least one block id")
        if variant != VARIANT_MEAN:
            raise ParseError("joint testing supports only the mean variant")
        blocks = [manifest.block(i) for i in ids]
        cols = [name for b in blocks for name in b.effects]
        stacked = draws.select(cols)
        joint_mean = stacked.mean(axis=0)
        centered = stacked - joint_mean
        joint_cov = validate_pd(centered.T @ centered / (stacked.shape[0] - 1), ridge)
        parts = [
            (b.block_id, b.structure, block_tau(draws, b, VARIANT_MEAN).point)
            for b in blocks
        ]
        results.append(log_ebf_joint(parts, joint_mean, joint_cov))
    write_ebf_report(results, args.out)
    return 0


_STUDY_KEYS = {
    "tau11_grid", "j_values", "n_values", "K", "replications",
    "alpha", "sigma2", "tau12", "rho1", "tau21", "tau22", "rho2",
    "ridge", "master_seed", "jobs", "gibbs",
}
_GIBBS_KEYS = {"iterations", "burn_in", "thin"}


def cmd_study(args) -> int:
    obj = dict(_load_toml(args.config))
    _reject_unknown(obj, _STUDY_KEYS, "study config")
    gibbs_obj = dict(obj.pop("gibbs", {}))
    _reject_unknown(gibbs_obj, _GIBBS_KEYS, "study config [gibbs]")
    if args.jobs is not None:
        obj["jobs"] = args.jobs
    config = SimStudyConfig(gibbs=GibbsConfig(**gibbs_obj), **obj)
    for summary in run_grid(config, args.out_dir):
        status = "ok" if summary.valid else "INVALID"
        print(
            f"cell tau11={summary.tau11:g} J={summary.J} n={summary.n}: "
            f"{summary.replications - summary.failures}/{summary.replications} "
            f"replications ({status})"
        )
    return 0


def cmd_diagnose(args) -> int:
    draws = read_draws(args.draws)
    names = fnmatch.filter(draws.columns, args.columns)
    if not names:
        raise ParseError(f"no columns match pattern {args.columns!r}")
    print(f"{'column':<24} {'mean':>14} {'ess':>10}")
    for name in names:
        series = draws.column(name)
        value = pooled_ess(series, draws.chain_id)
        print(f"{name:<24} {float(np.mean(series)):>14.6g} {value:>10.1f}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="ebfkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="simulate a crossed dataset")
    p.add_argument("--config", required=True, help="TOML file with the generating truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the crossed model by Gibbs sampling")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--iters", type=int, default=6000)
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-draws", required=True, help="output draws CSV")
    p.add_argument("--out-manifest", help="also write the default block manifest")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ebf", help="evaluate Bayes factors from draws")
    p.add_argument("--draws", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", choices=[VARIANT_MEAN, VARIANT_FULL])
    p.add_argument("--ridge", type=float)
    p.add_argument("--joint", help="comma-separated block ids to also test jointly")
    p.add_argument("--out", required=True, help="output report CSV")
    p.set_defaults(func=cmd_ebf)

    p = sub.add_parser("study", help="run a replicated simulation study")
    p.add_argument("--config", required=True, help="TOML study configuration")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, help="worker processes (default from config)")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("diagnose", help="per-column mean and effective sample size")
    p.add_argument("--draws", required=True)
    p.add_argument("--columns", default="*", help="glob over column names")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (EbfkitError, OSError, ValueError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def app() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    app()
