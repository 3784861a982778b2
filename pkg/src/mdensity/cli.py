"""Command-line entry point: ``mdensity <command> ...``.

Every command that writes files also writes ``<output>.manifest.json`` with
the full argument echo, seed, version, wall time and the files written.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import METRICS, SweepConfig, sweep
from .core import DataSource, InvalidParameterError, NoiseModel, class_members
from .gps import GpsScore
from .nu_train import (
    TrainConfig,
    TrainingDiverged,
    config_dict,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .samplers import INTEGRATOR_NAMES, ChainDiverged, SamplerConfig, walk_jump
from .spectral import GaussianPrior, dense_eigen_residual, spectrum_closed_form
from .universality import universality_report

log = logging.getLogger("mdensity")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


# --- helpers -------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _members(text: str) -> list[NoiseModel]:
    """``"0.25:1,1:16"`` -> noise models."""
    out = []
    for item in text.split(","):
        try:
            sigma, m = item.split(":")
            out.append(NoiseModel(float(sigma), int(m)))
        except (ValueError, InvalidParameterError) as exc:
            raise argparse.ArgumentTypeError(f"bad member {item!r}; expected sigma:M") from exc
    return out


def set_threads(n: int | None) -> int:
    """Cap numba worker threads; ``MDENSITY_THREADS`` is the fallback."""
    import numba

    if n is None:
        env = os.environ.get("MDENSITY_THREADS")
        n = int(env) if env else None
    if n is None:
        return numba.get_num_threads()
    if n < 1:
        raise UsageError("--threads must be >= 1")
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
    return n


def _jsonable(v):
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, NoiseModel):
        return {"sigma": v.sigma, "m": v.m}
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_manifest(primary: Path, args: argparse.Namespace, outputs: list[Path], started: float,
                   extra: dict | None = None) -> Path:
    config = {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": time.perf_counter() - started,
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    path = primary.with_name(primary.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _emit_json(obj: dict, out: str | None) -> list[Path]:
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
        return []
    Path(out).write_text(text, encoding="utf-8")
    return [Path(out)]


# --- commands ----------------------------------------------------------------------

def cmd_spectrum(args) -> int:
    report = spectrum_closed_form(args.sigma, args.m, GaussianPrior(args.taus))
    out = report.to_dict()
    if args.verify:
        out["verify_max_residual"] = dense_eigen_residual(report)
    args._outputs = _emit_json(out, args.out)
    return EXIT_OK


def _nu_for(args, sigma_eff: float, data: DataSource | None):
    if getattr(args, "checkpoint", None):
        net = load_checkpoint(args.checkpoint)
        if net.sigma_eff is None:
            raise UsageError("checkpoint does not record sigma_eff")
        return net
    if data is None or not data.analytic:
        raise UsageError("an analytic nu needs a builtin Gaussian or mixture --data source")
    return data.analytic_nu(sigma_eff)


def cmd_universality(args) -> int:
    data = DataSource.parse(args.data)
    if args.members:
        members = args.members
    else:
        if args.sigma_eff is None:
            raise UsageError("give --sigma-eff with --m-list, or --members")
        members = class_members(args.sigma_eff, args.m_list)
    sigma_eff = args.sigma_eff if args.sigma_eff is not None else members[0].sigma_eff()
    nu = _nu_for(args, sigma_eff, data)
    report = universality_report(nu, members, data, args.n, args.seed)
    out = report.to_dict()
    args._outputs = _emit_json(out, args.out)
    for p in report.pairs:
        if not (p["coupled_ok"] and p["independent_ok"]):
            log.warning("pair %s vs %s: coupled delta %.3g, independent delta %.3g (joint stderr %.3g)",
                        p["a"], p["b"], p["coupled_delta"], p["independent_delta"], p["joint_stderr"])
    print(out["verdict"], file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_RUNTIME


def cmd_train(args) -> int:
    data = DataSource.parse(args.data)
    if args.sigma_eff is None:
        if args.sigma is None or args.m is None:
            raise UsageError("give --sigma-eff or both --sigma and --m")
        sigma_eff = NoiseModel(args.sigma, args.m).sigma_eff()
    else:
        sigma_eff = args.sigma_eff
    cfg = TrainConfig(sigma_eff=sigma_eff, steps=args.steps, batch_size=args.batch_size, lr=args.lr,
                      lr_final=args.lr_final, schedule=args.schedule,
                      schedule_horizon=args.schedule_horizon, optimizer=args.optimizer, seed=args.seed,
                      eval_interval=args.eval_interval, hidden=tuple(args.hidden),
                      implicit=args.implicit, corruption=args.corruption, sigma=args.sigma, m=args.m)
    try:
        result = train(cfg, data)
    except TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        return EXIT_RUNTIME
    out = Path(args.out)
    save_checkpoint(result.net, out, result.log_digest())
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    log_path.write_text(result.log_csv(), encoding="utf-8")
    summary = {"best_step": result.best_step, "best_eval_loss": result.best_eval}
    if data.kind == "gaussian" or (data.kind == "gmm" and data.d <= 2):
        summary["mmse"] = data.mmse(sigma_eff)
        summary["relative_excess"] = result.best_eval / summary["mmse"] - 1
    print(json.dumps(summary))
    args._outputs = [out, log_path]
    args._extra = {"train_config": config_dict(cfg), "summary": summary}
    return EXIT_OK


def cmd_sample(args) -> int:
    model = NoiseModel(args.sigma, args.m)
    data = DataSource.parse(args.data) if args.data else None
    if args.checkpoint:
        nu = _nu_for(args, model.sigma_eff(), data)
        target = nu.sigma_eff
    else:
        if not args.analytic:
            raise UsageError("give --checkpoint or --analytic with --data")
        target = args.sigma_eff if args.sigma_eff is not None else model.sigma_eff()
        nu = _nu_for(args, target, data)
    if not model.in_class(target):
        msg = f"(sigma={model.sigma}, M={model.m}) has sigma_eff {model.sigma_eff()!r}, not {target!r}"
        if not args.force:
            raise UsageError(msg + "; pass --force to sample anyway")
        log.warning("%s (forced)", msg)
    cfg = SamplerConfig.default_for(
        model, **({"delta": args.delta} if args.delta is not None else {}),
        gamma_eff=args.gamma_eff, integrator=args.integrator, n_steps=args.steps,
        steps_per_jump=args.steps_per_jump, n_chains=args.chains, init=args.init,
        init_scale=args.init_scale, burn_in=args.burn_in, seed=args.seed)
    init_x = None
    if cfg.init == "data_plus_noise":
        if data is None:
            raise UsageError("--init data_plus_noise needs --data")
        init_x = data.sample(cfg.n_chains, np.random.default_rng(args.seed))
    try:
        res = walk_jump(GpsScore(nu, model), cfg, init_x=init_x)
    except ChainDiverged as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    out = Path(args.out)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain_id", "step", *(f"x_{j + 1}" for j in range(nu.d))])
        for x, c, s in res:
            writer.writerow([c, s, *(repr(float(v)) for v in x)])
    for c, k in res.divergences:
        log.warning("chain %d diverged at step %d", c, k)
    args._outputs = [out]
    args._extra = {"sampler_config": {**asdict(cfg), "gamma": cfg.gamma},
                   "divergences": [list(p) for p in res.divergences]}
    return EXIT_OK


def cmd_benchmark(args) -> int:
    data = DataSource.parse(args.data)
    nu = _nu_for(args, args.sigma_eff, data)
    sc = SweepConfig(sigma_eff=args.sigma_eff, ms=tuple(args.m_list), gamma_effs=tuple(args.gamma_effs),
                     metrics=tuple(args.metrics), seeds=args.seeds, n_chains=args.chains,
                     n_steps=args.steps, steps_per_jump=args.steps_per_jump, burn_in=args.burn_in,
                     integrator=args.integrator, ed_samples=args.ed_samples, base_seed=args.seed)
    rows = sweep(sc, data, nu)
    out = Path(args.out)
    fields = ["gamma_eff", "m", "sigma", "metric_name", "value", "stderr", "n_seeds", "n_diverged"]
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    args._outputs = [out]
    return EXIT_OK


# --- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdensity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on worker threads (default: MDENSITY_THREADS or all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="closed-form eigenstructure of a Gaussian M-density")
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--taus", type=_floats, required=True, help="comma-separated prior std devs")
    s.add_argument("--verify", action="store_true", help="cross-check against a dense eigensolver")
    s.add_argument("--out", help="write the JSON report here instead of stdout")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("universality", help="compare losses across noise models")
    s.add_argument("--sigma-eff", type=float)
    s.add_argument("--m-list", type=_ints, default=[1, 16, 64, 256])
    s.add_argument("--members", type=_members, help="explicit sigma:M list, e.g. 0.25:1,0.5:1")
    s.add_argument("--data", default="builtin:gaussian:1")
    s.add_argument("--checkpoint", help="use a trained nu instead of the analytic one")
    s.add_argument("--n", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_universality)

    s = sub.add_parser("train", help="fit a nu network by denoising")
    s.add_argument("--data", required=True)
    s.add_argument("--sigma-eff", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--m", type=int)
    s.add_argument("--steps", type=int, default=20000)
    s.add_argument("--batch-size", type=int, default=128)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--lr-final", type=float, default=1e-5)
    s.add_argument("--schedule", choices=["cosine", "constant", "linear"], default="cosine")
    s.add_argument("--schedule-horizon", type=int, help="updates over which the schedule runs (default --steps)")
    s.add_argument("--optimizer", choices=["adam", "adagrad"], default="adam")
    s.add_argument("--hidden", type=_ints, default=[128, 128])
    s.add_argument("--eval-interval", type=int, default=500)
    s.add_argument("--implicit", action="store_true", help="parametrize nu as the gradient of a scalar")
    s.add_argument("--corruption", choices=["coupled", "bundle"], default="coupled")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="checkpoint path (JSON)")
    s.add_argument("--log", help="loss curve CSV (default: <out>.log.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="walk-jump sampling")
    s.add_argument("--checkpoint")
    s.add_argument("--analytic", action="store_true")
    s.add_argument("--data")
    s.add_argument("--sigma-eff", type=float, help="class of the analytic nu (default sigma/sqrt(M))")
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--delta", type=float, help="step size (default sigma/2)")
    s.add_argument("--gamma-eff", type=float, default=1.0)
    s.add_argument("--integrator", choices=INTEGRATOR_NAMES, default="baoab")
    s.add_argument("--chains", type=int, default=8)
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--steps-per-jump", type=int, default=10)
    s.add_argument("--burn-in", type=int, default=0)
    s.add_argument("--init", choices=["noise", "data_plus_noise"], default="noise")
    s.add_argument("--init-scale", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--force", action="store_true", help="sample even outside the checkpoint's class")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("benchmark", help="friction sweep over class members")
    s.add_argument("--data", default="builtin:gmm8")
    s.add_argument("--checkpoint")
    s.add_argument("--sigma-eff", type=float, default=0.25)
    s.add_argument("--m-list", type=_ints, default=[1, 16])
    s.add_argument("--gamma-effs", type=_floats, default=[0.25, 0.5, 1.0, 2.0, 4.0])
    s.add_argument("--metrics", type=lambda t: t.split(","), default=list(METRICS))
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--chains", type=int, default=32)
    s.add_argument("--steps", type=int, default=2400)
    s.add_argument("--steps-per-jump", type=int, default=2)
    s.add_argument("--burn-in", type=int, default=400)
    s.add_argument("--integrator", choices=INTEGRATOR_NAMES, default="baoab")
    s.add_argument("--ed-samples", type=int, default=4000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    started = time.perf_counter()
    args._outputs, args._extra = [], None
    try:
        if getattr(args, "metrics", None):
            bad = set(args.metrics) - set(METRICS)
            if bad:
                raise UsageError(f"unknown metrics {sorted(bad)}; choose from {METRICS}")
        args.threads = set_threads(args.threads)
        code = args.func(args)
    except (UsageError, ValueError, FileNotFoundError) as exc:
        parser.print_usage(sys.stderr)
        print(f"mdensity: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    outputs, extra = args._outputs, args._extra
    if outputs:
        for k in ("_outputs", "_extra"):
            delattr(args, k)
        write_manifest(outputs[0], args, outputs, started, extra)
    return code


if __name__ == "__main__":
    sys.exit(main())
