"""Command-line front-end: ``stopped-euler {simulate,converge,moments,compare}``.

Exit codes: 0 on success (divergence and failed bound checks are reported
as data), 2 on configuration errors, 3 on internal invariant violations.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import RateReport, fit_rate
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, InvariantViolation
from .experiments import _chunks, _seeds, compare_experiment, convergence_experiment, moments_experiment
from .io import provenance, trajectory_rows, write_csv, write_json
from .noise import aggregate, increment_tables
from .scheme import SchemeParams, run_batch

log = logging.getLogger("stopped_euler")

EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3
_SYNTHETIC = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*\s*)?h\s*\^\s*([0-9.eE+-]+)\s*$")
_SYNTHETIC_DEFAULT = (8, 16, 32, 64, 128)


def _outdir(args, cfg: ExperimentConfig | None) -> Path:
    out = args.output or (cfg.output_dir if cfg else None) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed_tag(cfg: ExperimentConfig):
    return ",".join(str(s) for s in cfg.analysis.seeds)


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    spec, acfg = cfg.model, cfg.analysis
    resolutions = cfg.resolutions()
    N_fine = max(r[0] for r in resolutions)
    if N_fine & (N_fine - 1) or any(N_fine % r[0] for r in resolutions):
        raise ConfigurationError("every N must divide the largest N, which must be a power of two",
                                 field="scheme.N")
    m_max = max(r[2] for r in resolutions)
    keys = acfg.sample_keys()
    summary = {"schema_version": 1, "kind": "simulate", "scheme": cfg.scheme,
               "samples": len(keys), "seeds": [int(s) for s in acfg.seeds], "runs": []}
    agg = {r: {"sum_sq": 0.0, "frozen": 0, "diverged": 0, "frozen_steps": 0} for r in resolutions}
    moment = {r: None for r in resolutions}
    offset = 0
    for chunk in _chunks(keys, acfg.chunk):
        seeds = _seeds(chunk)
        fine = increment_tables(seeds, N_fine, m_max, spec.T)
        for r in resolutions:
            N, n, m = r
            params = SchemeParams(N, n, m, theta=cfg.theta, T=spec.T)
            run = run_batch(params, spec, aggregate(fine[:, :, :m], N, axis=1), seeds=seeds, scheme=cfg.scheme)
            a = agg[r]
            a["diverged"] += int(np.sum(run.diverged_step >= 0))
            a["frozen_steps"] += int(run.frozen.sum())
            a["frozen"] += int(np.sum(run.frozen.any(axis=1)))
            with np.errstate(over="ignore", invalid="ignore"):
                sq = np.sum(run.states**2, axis=-1)
            finite = run.diverged_step < 0
            part = sq[finite].sum(axis=0)
            moment[r] = part if moment[r] is None else moment[r] + part
            if cfg.per_sample:
                for i in range(run.states.shape[0]):
                    name = out / f"traj_N{N}_n{n}_m{m}_s{offset + i:04d}.csv"
                    head = provenance(seed=_seed_tag(cfg), sample=offset + i, sample_seed=int(seeds[i]),
                                      N=N, n=n, m=m, scheme=cfg.scheme)
                    write_csv(name, trajectory_rows(run.states[i], run.times, run.frozen[i], spec, acfg.eta), head)
        offset += len(chunk)
    for r in resolutions:
        N, n, m = r
        a = agg[r]
        finite = len(keys) - a["diverged"]
        if not cfg.per_sample:
            times = SchemeParams(N, n, m, theta=cfg.theta, T=spec.T).times()
            rows = [["k", "t", "mean_h_norm_sq", "finite_samples"]]
            for k, t in enumerate(times):
                rows.append([k, float(t), float(moment[r][k] / finite) if finite else float("nan"), finite])
            write_csv(out / f"traj_N{N}_n{n}_m{m}_mean.csv", rows,
                      provenance(seed=_seed_tag(cfg), N=N, n=n, m=m, scheme=cfg.scheme))
        summary["runs"].append({
            "N": N, "n": n, "m": m,
            "diverged": a["diverged"],
            "paths_with_frozen_steps": a["frozen"],
            "frozen_step_fraction": a["frozen_steps"] / (len(keys) * N),
        })
    write_json(out / "simulate_summary.json", summary)
    return summary


def _synthetic_report(expr: str, cfg: ExperimentConfig | None) -> RateReport:
    m = _SYNTHETIC.match(expr)
    if not m:
        raise ConfigurationError(f"cannot parse synthetic expression '{expr}' (expected [C*]h^a)",
                                 field="--synthetic")
    scale = float(m.group(1)) if m.group(1) else 1.0
    rate = float(m.group(2))
    if scale <= 0:
        raise ConfigurationError("synthetic scale must be positive", field="--synthetic")
    values = sorted(cfg.values) if cfg and cfg.values else list(_SYNTHETIC_DEFAULT)
    if len(values) < 3:
        raise ConfigurationError("a rate fit needs at least three resolutions", field="converge.values")
    errors = [scale * (1.0 / v) ** rate for v in values]
    fit = fit_rate(values, errors)
    return RateReport(
        axis=cfg.axis if cfg and cfg.axis else "synthetic",
        resolutions=values, errors=errors, ci_low=errors, ci_high=errors,
        fitted_slope=fit.slope, slope_interval=fit.interval, dropped=fit.dropped,
    )


def cmd_converge(cfg: ExperimentConfig | None, out: Path, synthetic: str | None = None) -> RateReport:
    if synthetic is not None:
        report = _synthetic_report(synthetic, cfg)
        seed = None
    else:
        if cfg is None:
            raise ConfigurationError("converge needs --config (or --synthetic)", field="--config")
        if cfg.axis is None:
            raise ConfigurationError("missing required table [converge]", field="converge")
        if len(set(cfg.values)) < 3:
            raise ConfigurationError("a rate fit needs at least three resolutions", field="converge.values")
        report = convergence_experiment(cfg.model, cfg.axis, cfg.values, cfg.fixed, cfg.analysis,
                                        theta=cfg.theta, eta=cfg.analysis.eta).report
        seed = _seed_tag(cfg)
    d = report.to_dict()
    d["synthetic"] = synthetic
    write_json(out / f"rate_{report.axis}.json", d)
    write_csv(out / f"rate_{report.axis}.csv", report.csv_rows(),
              provenance(seed=seed, axis=report.axis, slope=repr(float(report.fitted_slope))))
    return report


def cmd_moments(cfg: ExperimentConfig, out: Path) -> dict:
    result = moments_experiment(cfg.model, cfg.resolutions(), cfg.analysis, theta=cfg.theta)
    d = result.to_dict()
    d["seeds"] = [int(s) for s in cfg.analysis.seeds]
    write_json(out / "moments.json", d)
    return d


def cmd_compare(cfg: ExperimentConfig, out: Path) -> list:
    reports = []
    for N, n, m in cfg.resolutions():
        reports.append(compare_experiment(cfg.model, N, n, m, cfg.analysis, theta=cfg.theta).to_dict())
    write_json(out / "compare.json", {"schema_version": 1, "kind": "compare_set",
                                      "seeds": [int(s) for s in cfg.analysis.seeds], "reports": reports})
    return reports


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stopped-euler", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--output", metavar="DIR", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides analysis.seeds)")
    common.add_argument("--threads", type=int, default=1, metavar="INT", help="kernel threads (speed only)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write trajectory CSVs")
    conv = sub.add_parser("converge", parents=[common], help="empirical strong rate along one axis")
    conv.add_argument("--synthetic", metavar="EXPR", help="fit-path self-test on errors C*h^a, e.g. 'h^0.5'")
    sub.add_parser("moments", parents=[common], help="moment, freeze and Sobolev checks")
    sub.add_parser("compare", parents=[common], help="stopped vs untamed on shared paths")
    return parser


def _run(args) -> int:
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer", field="--seed")
    if args.threads < 1:
        raise ConfigurationError("threads must be positive", field="--threads")
    kernels.set_threads(args.threads)
    synthetic = getattr(args, "synthetic", None)
    if args.config is None:
        if synthetic is None:
            raise ConfigurationError("missing required option --config", field="--config")
        cfg = None
    else:
        cfg = load_config(args.config, seed_override=args.seed)
    out = _outdir(args, cfg)
    if args.command == "simulate":
        s = cmd_simulate(cfg, out)
        for r in s["runs"]:
            print(f"N={r['N']} n={r['n']} m={r['m']}: diverged {r['diverged']}/{s['samples']}")
    elif args.command == "converge":
        rep = cmd_converge(cfg, out, synthetic)
        print(f"{rep.axis}: slope {rep.fitted_slope:.4f} "
              f"[{rep.slope_interval[0]:.4f}, {rep.slope_interval[1]:.4f}]")
    elif args.command == "moments":
        d = cmd_moments(cfg, out)
        print(f"moments: {'pass' if d['passed'] else 'fail'}")
    elif args.command == "compare":
        for r in cmd_compare(cfg, out):
            print(f"N={r['N']} n={r['n']} m={r['m']}: diverged {r['diverged_fraction']}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
