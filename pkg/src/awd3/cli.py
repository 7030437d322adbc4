"""Command-line front end: ``awd3 {train,bias-scan,verify,eval}``.

Exit codes: 0 success, 1 runtime / I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import platform
import sys
import time
import typing
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bias_stats, checkpoint, diagnostics, verify
from .agents import ALGORITHMS, AgentConfig, ConfigError, evaluate, train
from .envs import ENVIRONMENTS, make_env

ARTIFACT_FORMAT_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# train options that may also come from a config file
RUN_KEYS = {"algo": str, "env": str, "seed": int, "seeds": str, "steps": int,
            "out": str, "workers": int}


class UsageError(Exception):
    pass


def _field_types() -> dict[str, type]:
    hints = typing.get_type_hints(AgentConfig)
    types = {}
    for f in dataclasses.fields(AgentConfig):
        hint = hints[f.name]
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if typing.get_origin(hint) is tuple:
            types[f.name] = tuple
        elif args and typing.get_origin(hint) is not tuple:
            types[f.name] = args[0]
        else:
            types[f.name] = hint
    return types


CONFIG_TYPES = _field_types()


def coerce(key: str, text: str):
    kind = CONFIG_TYPES.get(key) or RUN_KEYS.get(key)
    if kind is None:
        raise UsageError(f"unknown option {key!r}")
    if text.lower() == "none" and key in CONFIG_TYPES:
        return None
    try:
        if kind is tuple:
            return tuple(int(v) for v in text.replace("x", ",").split(",") if v)
        if kind is bool:
            return text.lower() in ("1", "true", "yes")
        return kind(text)
    except ValueError:
        raise UsageError(f"bad value {text!r} for {key}") from None


def read_config_file(path: Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def parse_overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            val = next(it, None)
            if val is None:
                raise UsageError(f"missing value for {tok}")
        out[key.replace("-", "_")] = val
    return out


# --- train -----------------------------------------------------------------

def run_dir_name(algo: str, env: str, seed: int) -> str:
    return f"{algo}_{env}_{seed}"


def _run_one(job: dict) -> dict:
    """Train one seed and write its artifacts; runs in a worker process when fanned out."""
    cfg = AgentConfig.from_dict(job["config"])
    run_dir = Path(job["run_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    env = make_env(job["env"])
    manifest = {"format_version": ARTIFACT_FORMAT_VERSION, "algo": cfg.algorithm,
                "env": job["env"], "seed": job["seed"], "config": cfg.resolved(env.spec).to_dict(),
                "started": time.time(), "status": "running"}
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    t0 = time.perf_counter()
    result = train(cfg, env, job["seed"])
    paths = {
        "learning_curve": diagnostics.write_csv(run_dir / "learning_curve.csv",
                                                diagnostics.CURVE_COLUMNS, result.learning_curve),
        "bias": diagnostics.write_csv(run_dir / "bias.csv", diagnostics.BIAS_COLUMNS, result.bias),
        "terminal_errors": diagnostics.write_csv(run_dir / "terminal_errors.csv",
                                                 diagnostics.TERMINAL_COLUMNS,
                                                 result.terminal_errors),
        "checkpoint": checkpoint.save_agent(run_dir / "final.ckpt", result.agent),
    }
    if result.beta_trace:
        paths["beta_trace"] = diagnostics.write_csv(run_dir / "beta_trace.csv",
                                                    diagnostics.BETA_COLUMNS, result.beta_trace)
    manifest.update(status="done", finished=time.time(),
                    wall_seconds=time.perf_counter() - t0,
                    artifacts={k: p.name for k, p in paths.items()})
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return {"seed": job["seed"], "max_average_return": result.max_average_return,
            "final_return": result.final_return, "final_beta": result.agent.beta,
            "run_dir": str(run_dir)}


def summarize(algo: str, env: str, rows: list[dict]) -> str:
    best = np.array([r["max_average_return"] for r in rows])
    final = np.array([r["final_return"] for r in rows])
    return (f"{algo.upper()} {env}: max average return {best.mean():.1f} ± {best.std():.1f}, "
            f"final {final.mean():.1f} ± {final.std():.1f} over {len(rows)} seeds")


def cmd_train(args, extra: list[str]) -> int:
    file_opts = read_config_file(Path(args.config)) if args.config else {}
    flag_opts = parse_overrides(extra)
    merged = {**file_opts, **flag_opts}
    for key in ("algo", "env", "seed", "seeds", "steps", "out", "workers"):
        if getattr(args, key) is None and key in merged:
            setattr(args, key, coerce(key, merged[key]))
        merged.pop(key, None)
    if args.algo not in ALGORITHMS:
        raise UsageError(f"--algo must be one of {', '.join(ALGORITHMS)}")
    if args.env not in ENVIRONMENTS:
        raise UsageError(f"--env must be one of {', '.join(sorted(ENVIRONMENTS))}")
    overrides = {k: coerce(k, v) for k, v in merged.items()}
    for bad in ("algorithm", "total_steps"):
        if bad in overrides:
            raise UsageError(f"set {bad} through --algo / --steps")
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed or 0]
    cfg = AgentConfig(**{**overrides, "algorithm": args.algo,
                         "total_steps": args.steps or AgentConfig.total_steps})
    try:
        cfg.resolved(make_env(args.env).spec)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    out = Path(args.out or "runs")
    jobs = [{"config": cfg.to_dict(), "env": args.env, "seed": s,
             "run_dir": str(out / run_dir_name(args.algo, args.env, s))} for s in seeds]
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest = {"format_version": ARTIFACT_FORMAT_VERSION, "version": __version__,
                    "config": cfg.to_dict(), "env": args.env, "seeds": seeds,
                    "output_dir": str(out), "runs": {str(j["seed"]): j["run_dir"] for j in jobs},
                    "started": time.time(), "host": platform.node(),
                    "python": platform.python_version(), "numpy": np.__version__}
        manifest_path = out / f"manifest_{args.algo}_{args.env}.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        workers = max(1, args.workers or 1)
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_run_one, jobs))
        else:
            rows = [_run_one(j) for j in jobs]
        diagnostics.write_csv(out / f"summary_{args.algo}_{args.env}.csv",
                              ("seed", "max_average_return", "final_return", "final_beta"), rows)
        manifest["finished"] = time.time()
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for r in rows:
        print(f"seed {r['seed']}: max average return {r['max_average_return']:.3f}, "
              f"final {r['final_return']:.3f}, beta {r['final_beta']:.4f} -> {r['run_dir']}")
    if len(rows) > 1:
        print(summarize(args.algo, args.env, rows))
    return EXIT_OK


# --- bias-scan -------------------------------------------------------------

def _floats(text: str | None):
    return None if text is None else [float(v) for v in text.split(",") if v]


def scan_models(args) -> list[bias_stats.GaussianErrorModel]:
    given = [args.mu, args.mu1, args.mu2, args.sigma, args.sigma1, args.sigma2, args.rho]
    if all(v is None for v in given):
        return bias_stats.default_scan_grid()
    mu1 = _floats(args.mu1) or _floats(args.mu) or [0.0]
    # without an explicit second value the pair is tied to the first
    mu2 = _floats(args.mu2)
    s1 = _floats(args.sigma1) or _floats(args.sigma) or [1.0]
    s2 = _floats(args.sigma2)
    rho = _floats(args.rho) or [0.0]
    models = []
    for a, b, c, d, r in itertools.product(mu1, mu2 or [None], s1, s2 or [None], rho):
        models.append(bias_stats.GaussianErrorModel(a, a if b is None else b,
                                                    c, c if d is None else d, r))
    return models


def cmd_bias_scan(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    try:
        models = scan_models(args)
    except (ValueError, bias_stats.ParameterDomainError) as exc:
        raise UsageError(str(exc)) from None
    rows = [bias_stats.scan_row(m, args.samples, args.seed + i) for i, m in enumerate(models)]
    try:
        if args.out:
            diagnostics.write_csv(args.out, bias_stats.SCAN_COLUMNS, rows)
        else:
            print(",".join(bias_stats.SCAN_COLUMNS))
            for row in rows:
                print(",".join(diagnostics.format_value(row[c]) for c in bias_stats.SCAN_COLUMNS))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


# --- verify / eval -----------------------------------------------------------

def cmd_verify(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    if args.filter and args.filter not in verify.SUITES \
            and args.filter not in {n for _, n, _ in verify._REGISTRY}:
        raise UsageError(f"--filter must name a suite: {', '.join(verify.SUITES)}")
    results = verify.run(args.filter, faults=args.inject_fault or ())
    print(verify.format_table(results))
    return EXIT_OK if results and all(r.passed for r in results) else EXIT_FAIL


def cmd_eval(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    try:
        agent = checkpoint.load_agent(args.checkpoint)
    except (OSError, checkpoint.CheckpointError) as exc:
        print(f"error: cannot load checkpoint: {exc}", file=sys.stderr)
        return EXIT_FAIL
    env = make_env(agent.env_spec.name, gamma=agent.env_spec.gamma)
    returns = evaluate(agent, env, args.episodes, seed=args.seed)
    print(f"{agent.algorithm} {env.name}: mean return {np.mean(returns):.6f} "
          f"± {np.std(returns):.6f} over {len(returns)} episodes")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="awd3", description=__doc__.splitlines()[0],
                                allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train agents; any AgentConfig field as --key value",
                       allow_abbrev=False)
    t.add_argument("--algo")
    t.add_argument("--env")
    t.add_argument("--seed", type=int)
    t.add_argument("--seeds", help="comma-separated seed list")
    t.add_argument("--steps", type=int)
    t.add_argument("--out")
    t.add_argument("--config", help="key=value file; flags take precedence")
    t.add_argument("--workers", type=int, help="parallel worker processes across seeds")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bias-scan", help="closed-form vs Monte-Carlo bias over a grid")
    for name in ("mu", "mu1", "mu2", "sigma", "sigma1", "sigma2", "rho"):
        b.add_argument(f"--{name}", help="comma-separated values")
    b.add_argument("--samples", type=int, default=1_000_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bias_scan)

    v = sub.add_parser("verify", help="run the property suite")
    v.add_argument("--filter")
    v.add_argument("--inject-fault", action="append", choices=verify.FAULTS,
                   help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("eval", help="noise-free episodes from a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return args.func(args, extra)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"awd3: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
