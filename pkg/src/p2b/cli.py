"""Command-line entry point: ``p2b build-encoder | run | privacy``.

Exit codes: 0 on success, 2 for invalid input, 3 when a run fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

from .codec import cardinality, train_encoder
from .config import ConfigError, ExperimentConfig, coerce, load_config
from .privacy import (crowd_blending_l, delta_check, delta_of, epsilon_of, worst_case_p)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
SAMPLE_USERS = (10**3, 10**4, 10**5, 10**6)

# flag name -> config field; None in argparse means "not given"
RUN_FLAGS = {
    "env": str, "d": int, "q": int, "k": int, "actions": int, "users": int,
    "samples": int, "alpha": float, "cb_sampling_rate": float,
    "cb_context_threshold": int, "neg_rew_sam_rate": float, "beta": float,
    "sigma2": float, "weight_scale": float, "batch": int, "omega_c": float,
    "seed": int, "runs": int, "eval_agents": int, "encoder": str, "out": str,
    "data": str, "private_context": str, "batch_log": str, "encoder_samples": int,
}


class UsageError(Exception):
    pass


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p2b", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("build-encoder", help="train and save a context encoder")
    enc.add_argument("--d", type=int, required=True)
    enc.add_argument("--q", type=int, default=1)
    enc.add_argument("--k", type=int, required=True)
    enc.add_argument("--seed", type=int, default=None)
    enc.add_argument("--samples", type=int, default=100_000,
                     help="training draws when the grid is too large to enumerate")
    enc.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run cold / warm simulations and write a metric CSV")
    run.add_argument("--config", help="flat key=value file; flags override it")
    for name, kind in RUN_FLAGS.items():
        run.add_argument(_flag(name), dest=name, type=kind, default=None)
    run.add_argument("--setting", action="append", default=None,
                     help="cold, warm-nonprivate or warm-private; repeat or comma-separate")
    run.add_argument("--checkpoints", default=None, help="comma-separated user counts")

    priv = sub.add_parser("privacy", help="tabulate epsilon and relative delta")
    priv.add_argument("--p", default="0.05,0.1,0.25,0.5,0.75,0.9",
                      help="comma-separated participation probabilities")
    priv.add_argument("--epsilon-bar", type=float, default=0.0)
    priv.add_argument("--l", default="", help="comma-separated crowd sizes")
    priv.add_argument("--omega-c", type=float, default=1.0)
    priv.add_argument("--users", type=int, default=None, help="population for the delta check")
    return parser


def _seed_from_env() -> int | None:
    raw = os.environ.get("P2B_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"P2B_SEED must be an integer, got {raw!r}") from None


def _parse_list(raw: str, kind, name: str) -> list:
    try:
        return [kind(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: cannot parse {raw!r}") from None


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then the config file, then ``P2B_SEED``, then flags."""
    values = {}
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        values.update(vars(cfg))
    env_seed = _seed_from_env()
    if env_seed is not None:
        values["seed"] = env_seed
    for name in RUN_FLAGS:
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    if args.setting:
        values["settings"] = coerce("settings", ",".join(args.setting))
    if args.checkpoints is not None:
        values["checkpoints"] = coerce("checkpoints", args.checkpoints)
    return ExperimentConfig(**values).validate()


def privacy_line(cfg: ExperimentConfig) -> str:
    p = worst_case_p(cfg.cb_sampling_rate, cfg.neg_rew_sam_rate)
    eps = epsilon_of(p)
    l = cfg.cb_context_threshold
    delta = delta_of(l, p, cfg.omega_c)
    return (f"# privacy p={p!r} p_positive={cfg.cb_sampling_rate!r} "
            f"p_negative={cfg.neg_rew_sam_rate!r} epsilon={eps:.6f} l={l} "
            f"omega_c={cfg.omega_c!r} relative_delta={delta:.6g} users={cfg.users} "
            f"delta_ok={str(delta_check(delta, cfg.users)).lower()}\n")


def cmd_build_encoder(args, out) -> int:
    seed = args.seed if args.seed is not None else (_seed_from_env() or 0)
    if args.d < 1 or args.q < 1:
        raise UsageError(f"d and q must be >= 1, got d={args.d}, q={args.q}")
    n = cardinality(args.d, args.q)
    if not 1 <= args.k <= n:
        raise UsageError(f"k={args.k} must satisfy 1 <= k <= n, where "
                         f"n = C(10^q+d-1, d-1) = {n} for d={args.d}, q={args.q}")
    model = train_encoder(args.d, args.q, args.k, samples=args.samples, seed=seed)
    model.save(args.out)
    out.write(f"n={n}\nk={model.k}\nmin_cluster_size={model.min_cluster_size}\n"
              f"converged={str(model.converged).lower()}\n")
    out.write("users,l\n")
    for u in SAMPLE_USERS:
        if u >= model.k:
            out.write(f"{u},{crowd_blending_l(u, model.k)}\n")
    return EXIT_OK


def cmd_run(args, out) -> int:
    from .benchmarks.experiment import curves_to_csv, run_experiment

    cfg = resolve_config(args)
    log = open(cfg.batch_log, "w") if cfg.batch_log else None
    try:
        curves = run_experiment(cfg, batch_log=log)
    finally:
        if log is not None:
            log.close()
    text = curves_to_csv(curves) + privacy_line(cfg)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def cmd_privacy(args, out) -> int:
    ps = sorted(_parse_list(args.p, float, "p"))
    ls = sorted(_parse_list(args.l, int, "l"))
    if not ps:
        raise UsageError("p: at least one value is required")
    bad = [p for p in ps if not 0.0 <= p < 1.0]
    if bad:
        raise UsageError(f"p: every value must lie in [0, 1), got {bad}")
    if any(l < 1 for l in ls):
        raise UsageError(f"l: every value must be >= 1, got {ls}")
    if args.omega_c <= 0:
        raise UsageError(f"omega_c: must be > 0, got {args.omega_c}")
    if args.epsilon_bar < 0:
        raise UsageError(f"epsilon_bar: must be >= 0, got {args.epsilon_bar}")
    if args.users is not None and args.users < 1:
        raise UsageError(f"users: must be >= 1, got {args.users}")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["p", "epsilon_bar", "epsilon", "l", "omega_c", "delta", "delta_ok"])
    for p in ps:
        eps = f"{epsilon_of(p, args.epsilon_bar):.6f}"
        if not ls:
            writer.writerow([p, args.epsilon_bar, eps, "", "", "", ""])
        for l in ls:
            delta = delta_of(l, p, args.omega_c)
            ok = "" if args.users is None else str(delta_check(delta, args.users)).lower()
            writer.writerow([p, args.epsilon_bar, eps, l, args.omega_c, f"{delta:.6g}", ok])
    return EXIT_OK


COMMANDS = {"build-encoder": cmd_build_encoder, "run": cmd_run, "privacy": cmd_privacy}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, ConfigError) as exc:
        print(f"p2b {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # anything past validation is a runtime failure
        print(f"p2b {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run_to_string(argv: list[str]) -> tuple[int, str]:
    buf = io.StringIO()
    code = main(argv, out=buf)
    return code, buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
