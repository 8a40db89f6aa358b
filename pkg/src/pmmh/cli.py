"""Command-line front end.

    pmmh simulate|filter|pmmh|evidence|diag [-c CONFIG] [-s KEY=VALUE ...]

Exit codes: 0 success, 2 configuration/usage, 3 data, 4 numerical degeneracy.
"""

import argparse
import json
import logging
import os
import platform
import secrets
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from ._parallel import resolve_threads
from .config import load_config, parse_config
from .diagnostics import acf, burn_in_rows, chain_summary, histogram_counts
from .evidence import chib_evidence, prior_evidence, quadrature_log_evidence
from .exceptions import ConfigError, DataError, DegeneracyError, StartupError, StationarityError
from .io import ensure_dir, load_observations, read_csv, write_csv, write_json, write_series
from .models import kalman_loglik, simulate
from .sampler import ChainConfig, Target, run_chain
from .smc import bootstrap_filter

log = logging.getLogger("pmmh")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SUBCOMMANDS = ("simulate", "filter", "pmmh", "evidence", "diag")
META_SCHEMA = 1
ACF_MAX_LAG = 200
HIST_BINS = 40


def observations(cfg):
    if cfg.data_path:
        return load_observations(cfg.data_path)
    _, y = simulate(cfg.model_obj(), cfg.model_params(), cfg.T, cfg.seed)
    return y


def cmd_simulate(cfg, out):
    x, y = simulate(cfg.model_obj(), cfg.model_params(), cfg.T, cfg.seed)
    write_series(os.path.join(out, "states.csv"), x, "x")
    write_series(os.path.join(out, "obs.csv"), y, "y")


def cmd_filter(cfg, out):
    y = observations(cfg)
    params = cfg.model_params()
    res = bootstrap_filter(cfg.model_obj(), params, y, cfg.N, cfg.scheme, cfg.seed,
                           ess_threshold=cfg.ess_threshold, threads=cfg.threads)
    doc = {
        "model": cfg.model,
        "T": int(y.shape[0]),
        "N": cfg.N,
        "scheme": cfg.scheme,
        "log_lik_hat": res.log_lik_hat,
        "per_step_log_z": res.per_step_log_z,
        "ess": res.ess,
        "resampled": res.resampled,
    }
    if cfg.model == "lg":
        doc["kalman_loglik"] = kalman_loglik(params, y)
    write_json(os.path.join(out, "filter.json"), doc)


def _target(cfg, y):
    return Target(cfg.model_obj(), y, prior=cfg.prior_spec(), proposal=cfg.proposal_spec(),
                  fixed=cfg.model_params(), n_particles=cfg.N, scheme=cfg.scheme,
                  ess_threshold=cfg.ess_threshold, threads=cfg.threads)


def _chain(cfg, y):
    chain_cfg = ChainConfig(n_iter=cfg.M, n_particles=cfg.N, scheme=cfg.scheme, seed=cfg.seed,
                            thin=cfg.thin, ess_threshold=cfg.ess_threshold,
                            threads=cfg.threads, init=dict(cfg.init) or None)
    return run_chain(chain_cfg, _target(cfg, y))


def write_trace(path, chain):
    names = list(chain.param_names)
    flags = np.concatenate([[False], chain.accept_flags])
    rows = ((i, *chain.theta_trace[i], chain.loglik_trace[i], flags[i])
            for i in range(chain.theta_trace.shape[0]))
    write_csv(path, ["iter", *names, "loglik", "accept"], rows)


def read_trace(path):
    header, rows = read_csv(path)
    if len(header) < 4 or header[0] != "iter" or header[-2:] != ["loglik", "accept"]:
        raise DataError(f"{path}: not a trace.csv (header {header})")
    data = np.array([[float(v) for v in r] for r in rows]).reshape(-1, len(header))
    names = tuple(header[1:-2])
    return names, data


class _TraceView:
    def __init__(self, names, data):
        self.param_names = names
        self.theta_trace = data[:, 1:-2]
        self.accept_flags = data[1:, -1].astype(bool)


def write_diagnostics(out, names, data, burn_in):
    view = _TraceView(names, data)
    summary = chain_summary(view, burn_in, max_lag=ACF_MAX_LAG)
    running = summary.pop("running_acceptance")
    summary["running_acceptance_final"] = float(running[-1]) if running.size else None
    write_json(os.path.join(out, "summary.json"), summary)

    kept = view.theta_trace[burn_in_rows(data.shape[0], burn_in):]
    max_lag = min(ACF_MAX_LAG, kept.shape[0] - 1)
    cols = []
    for j in range(len(names)):
        try:
            cols.append(acf(kept[:, j], max_lag).values)
        except ValueError:
            cols.append(None)
    rows = []
    for k in range(max(max_lag + 1, 0)):
        rows.append([k] + ["" if c is None else repr(float(c[k])) for c in cols])
    with open(os.path.join(out, "acf.csv"), "w", encoding="utf-8") as fh:
        fh.write(",".join(["lag", *names]) + "\n")
        for r in rows:
            fh.write(",".join(str(v) for v in r) + "\n")

    hist_rows = []
    for j, name in enumerate(names):
        if kept.shape[0] == 0:
            continue
        rng = (-1.0, 1.0) if name in ("rho", "phi") else None
        counts, edges = histogram_counts(kept[:, j], HIST_BINS, rng)
        hist_rows.extend((name, edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts)))
    with open(os.path.join(out, "hist.csv"), "w", encoding="utf-8") as fh:
        fh.write("param,bin_left,bin_right,count\n")
        for name, lo, hi, c in hist_rows:
            fh.write(f"{name},{float(lo)!r},{float(hi)!r},{c}\n")


def cmd_pmmh(cfg, out):
    y = observations(cfg)
    chain = _chain(cfg, y)
    write_trace(os.path.join(out, "trace.csv"), chain)
    rows = ((it, t, x) for it, traj in zip(chain.trajectory_iters, chain.trajectories)
            for t, x in enumerate(traj))
    write_csv(os.path.join(out, "trajectories.csv"), ["iter", "t", "x"], rows)
    names, data = read_trace(os.path.join(out, "trace.csv"))
    write_diagnostics(out, names, data, cfg.burn_in)
    with open(os.path.join(out, "summary.json"), encoding="utf-8") as fh:
        summary = json.load(fh)
    summary["filter_runs"] = chain.filter_runs
    write_json(os.path.join(out, "summary.json"), summary)


def cmd_evidence(cfg, out):
    y = observations(cfg)
    prior = cfg.prior_spec()
    doc = {"model": cfg.model, "T": int(y.shape[0])}
    pe = prior_evidence(cfg.model_obj(), y, prior, cfg.evidence_K, cfg.N, cfg.seed,
                        params_fixed=cfg.model_params(), scheme=cfg.scheme, threads=cfg.threads)
    doc["prior_evidence"] = pe.to_dict()
    if cfg.model == "lg" and prior.names == ("phi",):
        chain = _chain(cfg, y)
        doc["chain_acceptance_rate"] = chain.acceptance_rate
        other = "mean" if cfg.evidence_theta_star == "median" else "median"
        for label, how in (("chib", cfg.evidence_theta_star), ("chib_alt", other)):
            res = chib_evidence(chain, y, "lg", prior, cfg.N, cfg.evidence_R, cfg.seed,
                                params_fixed=cfg.model_params(), burn_in=cfg.burn_in,
                                theta_star=how, conditional=cfg.evidence_conditional,
                                scheme=cfg.scheme, threads=cfg.threads)
            doc[label] = {"theta_star_rule": how, **res.to_dict()}
        doc["quadrature_log_evidence"] = quadrature_log_evidence(y, prior, cfg.model_params())[0]
    write_json(os.path.join(out, "evidence.json"), doc)


def cmd_diag(cfg, out, trace=None):
    path = trace or os.path.join(cfg.out_dir, "trace.csv")
    if not os.path.exists(path):
        raise DataError(f"trace file not found: {path}")
    names, data = read_trace(path)
    write_diagnostics(out, names, data, cfg.burn_in)


COMMANDS = {
    "simulate": cmd_simulate,
    "filter": cmd_filter,
    "pmmh": cmd_pmmh,
    "evidence": cmd_evidence,
}


def build_parser():
    p = argparse.ArgumentParser(prog="pmmh", description="Particle marginal Metropolis-Hastings toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="key = value config file")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("-o", "--out", help="output directory (overrides out_dir)")
        sp.add_argument("--from-meta", help="rerun exactly from a run_meta.json")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "diag":
            sp.add_argument("--trace", help="trace.csv to analyse (default: <out_dir>/trace.csv)")
    return p


def _resolve(args):
    if args.from_meta:
        try:
            with open(args.from_meta, encoding="utf-8") as fh:
                meta = json.load(fh)
            text = meta["config_text"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot use {args.from_meta} as run metadata: {exc}") from None
        cfg = parse_config(text, args.set)
    elif args.config:
        cfg = load_config(args.config, args.set)
    else:
        cfg = parse_config("", args.set)
    if cfg.seed is None:
        cfg.seed = secrets.randbits(63)
    return cfg


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
        if args.out:
            cfg.out_dir = args.out
        out = ensure_dir(cfg.out_dir)
        threads = resolve_threads(cfg.threads)
        started = datetime.now(timezone.utc)
        t0 = time.perf_counter()
        if args.command == "diag":
            cmd_diag(cfg, out, args.trace)
        else:
            COMMANDS[args.command](cfg, out)
        write_json(os.path.join(out, "run_meta.json"), {
            "schema_version": META_SCHEMA,
            "subcommand": args.command,
            "config": cfg.to_dict(),
            "config_text": cfg.to_text(),
            "seed": cfg.seed,
            "code_version": __version__,
            "threads_effective": threads,
            "started_utc": started.isoformat(),
            "wall_clock_seconds": time.perf_counter() - t0,
            "python": platform.python_version(),
            "numpy": np.__version__,
        })
    except ConfigError as exc:
        print(f"pmmh: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StationarityError as exc:
        print(f"pmmh: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"pmmh: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegeneracyError, StartupError) as exc:
        print(f"pmmh: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
