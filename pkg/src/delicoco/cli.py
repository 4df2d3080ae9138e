"""Command line harness: single runs, sweeps, fixed-budget pairings, theory tables.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from delicoco.compression import BIT_MODELS, CompressorSpec, omega_of
from delicoco.errors import ConfigurationError, ContractViolation, DivergenceError, IngestionError
from delicoco.numkit import DATA_STREAM, SeededRng
from delicoco.objectives import (
    DistributedObjective,
    centralized_optimum,
    find_mnist,
    gen_syn1,
    gen_syn2,
    initial_point,
    load_mnist_binary,
    partition_even,
    partition_sorted,
    save_dataset_csv,
)
from delicoco.optim import AlgoConfig, RunTrace, TraceRecord, centralized_gd, deli_coco, dgd
from delicoco.theory import (
    budget_tradeoff,
    consensus_lr,
    estimate_constants,
    gossip_rate,
    gossip_rate_shorthand,
    q_min_plc,
)
from delicoco.topology import KINDS as TOPOLOGIES, build_topology, metropolis_mixing

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

TASKS = ("syn1", "syn2", "mnist")
ALGORITHMS = ("deli_coco", "dgd", "centralized")
SWEEP_AXES = ("q_steps", "gamma", "n", "topology", "compressor")
BUDGET_MODES = ("qsgd_bits", "topk_fraction")


@dataclass
class ExperimentConfig:
    task: str = "syn1"
    m: int | None = 500
    d: int = 50
    noise_var: float = 0.05
    l2: float = 0.0
    mnist_dir: str | None = None
    partition: str = "auto"
    topology: str = "torus"
    n: int = 9
    compressor: str = "identity"
    algorithm: str = "deli_coco"
    eta: float = 0.1
    gamma: float | str = "auto"
    q_steps: int = 1
    iters: int = 100
    seed: int = 0
    bit_cost: str = "nominal"
    init: str = "auto"
    repeats: int = 1
    out: str = "out"
    name: str = "trace"
    f_star_tol: float = 1e-10
    f_star_max_iters: int = 20000
    sweep: dict | None = None
    budget: dict | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def replace(self, **changes) -> ExperimentConfig:
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self):
        def need(cond, fld, msg):
            if not cond:
                raise ConfigurationError(f"{fld}: {msg} (got {getattr(self, fld)!r})")

        def is_int(v):
            return isinstance(v, int) and not isinstance(v, bool)

        def is_num(v):
            return isinstance(v, (int, float)) and not isinstance(v, bool)

        need(self.task in TASKS, "task", f"must be one of {TASKS}")
        need(self.m is None or (is_int(self.m) and self.m >= 1), "m", "must be a positive integer")
        need(self.m is not None or self.task == "mnist", "m", "required for synthetic tasks")
        need(is_int(self.d) and self.d >= 1, "d", "must be a positive integer")
        need(is_num(self.noise_var) and self.noise_var >= 0, "noise_var", "must be >= 0")
        need(is_num(self.l2) and self.l2 >= 0, "l2", "must be >= 0")
        need(self.partition in ("auto", "even", "sorted"), "partition", "must be auto, even or sorted")
        need(self.topology in TOPOLOGIES, "topology", f"must be one of {TOPOLOGIES}")
        need(is_int(self.n) and self.n >= 1, "n", "must be a positive integer")
        need(isinstance(self.compressor, str), "compressor", "must be a string like 'qsgd:2'")
        CompressorSpec.parse(self.compressor)
        need(self.algorithm in ALGORITHMS, "algorithm", f"must be one of {ALGORITHMS}")
        need(is_num(self.eta) and self.eta > 0, "eta", "must be > 0")
        need(self.gamma == "auto" or (is_num(self.gamma) and 0 < self.gamma <= 1), "gamma",
             "must be 'auto' or in (0, 1]")
        need(is_int(self.q_steps) and self.q_steps >= 1, "q_steps", "must be an integer >= 1")
        need(is_int(self.iters) and self.iters >= 1, "iters", "must be an integer >= 1")
        need(is_int(self.seed) and 0 <= self.seed < 2 ** 64, "seed", "must be an unsigned 64-bit integer")
        need(self.bit_cost in BIT_MODELS, "bit_cost", f"must be one of {BIT_MODELS}")
        need(self.init in ("auto", "zero", "random"), "init", "must be auto, zero or random")
        need(is_int(self.repeats) and self.repeats >= 1, "repeats", "must be an integer >= 1")
        need(is_num(self.f_star_tol) and self.f_star_tol > 0, "f_star_tol", "must be > 0")
        need(is_int(self.f_star_max_iters) and self.f_star_max_iters >= 1, "f_star_max_iters", "must be >= 1")
        if self.sweep is not None:
            need(isinstance(self.sweep, dict) and set(self.sweep) <= {"axis", "values"}, "sweep",
                 "must be an object with keys axis, values")
        if self.budget is not None:
            need(isinstance(self.budget, dict) and set(self.budget) <= {"mode", "base", "multipliers"}, "budget",
                 "must be an object with keys mode, base, multipliers")
        if self.gamma == "auto" and self.algorithm == "deli_coco" and self.topology == "disconnected":
            raise ConfigurationError("gamma: 'auto' needs a connected topology")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(raw)


def write_atomic(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# -- experiment assembly ----------------------------------------------------

def build_dataset(cfg: ExperimentConfig, seed: int):
    if cfg.task == "mnist":
        images, labels = find_mnist(cfg.mnist_dir)
        ds = load_mnist_binary(images, labels)
        if cfg.m is not None and cfg.m < ds.m:
            ds = type(ds)(ds.features[: cfg.m], ds.labels[: cfg.m], ds.task)
        return ds
    gen = gen_syn1 if cfg.task == "syn1" else gen_syn2
    ds, _ = gen(SeededRng(seed).spawn(DATA_STREAM), cfg.m, cfg.d, cfg.noise_var)
    return ds


def build_objective(cfg: ExperimentConfig, seed: int) -> DistributedObjective:
    ds = build_dataset(cfg, seed)
    sort = cfg.partition == "sorted" or (cfg.partition == "auto" and cfg.task == "mnist")
    part = partition_sorted(ds, cfg.n) if sort else partition_even(ds, cfg.n)
    return DistributedObjective(ds, part, cfg.l2)


def start_vector(cfg: ExperimentConfig, obj: DistributedObjective, seed: int) -> np.ndarray:
    if cfg.init == "zero":
        return np.zeros(obj.d)
    task = "relu" if cfg.init == "random" else obj.task
    return initial_point(task, obj.d, seed)


def _fstar_key(cfg: ExperimentConfig, seed: int) -> str:
    fields = {k: getattr(cfg, k) for k in
              ("task", "m", "d", "noise_var", "l2", "mnist_dir", "partition", "n", "init",
               "f_star_tol", "f_star_max_iters")}
    fields["seed"] = seed
    blob = json.dumps(fields, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def f_star_for(cfg: ExperimentConfig, obj, seed: int, cache_dir: Path | None):
    """Centralized optimum value, read from or written to ``cache_dir``."""
    path = None
    if cache_dir is not None:
        path = cache_dir / f"fstar-{_fstar_key(cfg, seed)}.json"
        if path.exists():
            with open(path) as fh:
                return json.load(fh)
    opt = centralized_optimum(obj, tol=cfg.f_star_tol, max_iters=cfg.f_star_max_iters,
                              x0=start_vector(cfg, obj, seed))
    info = {"f_star": opt.f_star, "converged": opt.converged, "iterations": opt.iterations}
    if path is not None:
        write_atomic(path, json.dumps(info, indent=1) + "\n")
    return info


def resolve_gamma(cfg: ExperimentConfig, mixing, d: int) -> float:
    if cfg.gamma != "auto":
        return float(cfg.gamma)
    omega = omega_of(CompressorSpec.parse(cfg.compressor), d)
    return consensus_lr(mixing.delta, omega, mixing.lambda_max_i_minus_w)


def run_once(cfg: ExperimentConfig, seed: int, stream: int = 0, cache_dir: Path | None = None,
             obj: DistributedObjective | None = None) -> RunTrace:
    if obj is None:
        obj = build_objective(cfg, seed)
    fs = f_star_for(cfg, obj, seed, cache_dir)
    x0 = np.repeat(start_vector(cfg, obj, seed)[:, None], obj.n, axis=1)
    extra = {"task": cfg.task, "topology": cfg.topology, "l2": cfg.l2, "f_star_converged": fs["converged"]}
    if cfg.algorithm == "centralized":
        trace = centralized_gd(obj, cfg.eta / obj.n, cfg.iters, fs["f_star"], x0[:, 0])
    else:
        mixing = metropolis_mixing(build_topology(cfg.topology, cfg.n))
        gamma = resolve_gamma(cfg, mixing, obj.d)
        extra["gamma_source"] = "auto" if cfg.gamma == "auto" else "config"
        algo = AlgoConfig(cfg.eta, gamma if cfg.algorithm == "deli_coco" else 1.0, cfg.q_steps, cfg.iters,
                          CompressorSpec.parse(cfg.compressor), mixing, seed, stream, cfg.bit_cost)
        run = deli_coco if cfg.algorithm == "deli_coco" else dgd
        trace = run(algo, obj, fs["f_star"], x0)
    trace.metadata.update({k: repr(v) if isinstance(v, float) else str(v) for k, v in extra.items()})
    return trace


def average_traces(traces: list[RunTrace]) -> RunTrace:
    if len(traces) == 1:
        return traces[0]
    cols = ("suboptimality", "consensus_error", "feedback_gap")
    means = {c: np.mean([t.column(c) for t in traces], axis=0) for c in cols}
    base = traces[0]
    records = [
        TraceRecord(r.iter, float(means[cols[0]][k]), float(means[cols[1]][k]), float(means[cols[2]][k]),
                    r.cumulative_bits)
        for k, r in enumerate(base.records)
    ]
    meta = dict(base.metadata)
    meta["repeats"] = str(len(traces))
    meta["seeds"] = " ".join(t.metadata.get("seed", "?") for t in traces)
    meta.pop("f_star", None)
    return RunTrace(records, meta)


def run_experiment(cfg: ExperimentConfig, stream: int = 0, cache_dir: Path | None = None) -> RunTrace:
    """All repeats of one configuration, averaged. Repeat ``r`` uses seed ``seed + r``."""
    traces = [run_once(cfg, cfg.seed + r, stream, cache_dir) for r in range(cfg.repeats)]
    return average_traces(traces)


# -- subcommands ------------------------------------------------------------

def cmd_run(cfg: ExperimentConfig, out: Path) -> int:
    trace = run_experiment(cfg, cache_dir=out)
    path = write_atomic(out / f"{cfg.name}.csv", trace.to_csv())
    print(path)
    return EXIT_OK


def _parse_value(axis: str, raw):
    if axis in ("q_steps", "n"):
        return int(raw)
    if axis == "gamma":
        return raw if raw == "auto" else float(raw)
    return str(raw)


def cmd_sweep(cfg: ExperimentConfig, out: Path, axis: str, values: list) -> int:
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    variants = []
    for raw in values:
        try:
            variants.append((raw, cfg.replace(**{axis: _parse_value(axis, raw)})))
        except (ConfigurationError, ValueError, TypeError) as exc:
            variants.append((raw, exc))
    buf = io.StringIO()
    table = csv.writer(buf, lineterminator="\n")
    table.writerow(["value", "final_suboptimality", "final_consensus_error", "cumulative_bits", "status"])
    code = EXIT_OK
    for k, (raw, variant) in enumerate(variants):
        if isinstance(variant, Exception):
            table.writerow([raw, "", "", "", f"config error: {variant}"])
            code = EXIT_CONFIG
            continue
        try:
            trace = run_experiment(variant, stream=k + 1, cache_dir=out)
        except (ConfigurationError, ContractViolation) as exc:
            table.writerow([raw, "", "", "", f"config error: {exc}"])
            code = EXIT_CONFIG
            continue
        except DivergenceError as exc:
            table.writerow([raw, "", "", "", f"diverged: {exc}"])
            code = code or EXIT_DIVERGED
            continue
        write_atomic(out / f"{cfg.name}-{axis}-{raw}.csv", trace.to_csv())
        fin = trace.final
        table.writerow([raw, repr(fin.suboptimality), repr(fin.consensus_error), fin.cumulative_bits, "ok"])
    path = write_atomic(out / f"{cfg.name}-sweep-{axis}.csv", buf.getvalue())
    print(path)
    return code


def budget_pairs(mode: str, base, multipliers) -> list[tuple[int, str]]:
    """Expand a base ``(Q, param)`` pair into ``(c Q, param / c)`` pairs of equal budget.

    Returns ``(Q, compressor string)`` tuples. ``qsgd_bits`` requires the
    bit width to divide evenly; ``topk_fraction`` takes the fraction as a
    number in (0, 1].
    """
    if mode not in BUDGET_MODES:
        raise ConfigurationError(f"budget mode must be one of {BUDGET_MODES}, got {mode!r}")
    try:
        q1, p1 = base
        q1 = int(q1)
    except (TypeError, ValueError):
        raise ConfigurationError(f"budget base must be a [Q, param] pair, got {base!r}") from None
    if q1 < 1:
        raise ConfigurationError(f"budget base Q must be >= 1, got {q1}")
    pairs = []
    for c in multipliers:
        if int(c) != c or c < 1:
            raise ConfigurationError(f"budget multiplier must be a positive integer, got {c!r}")
        c = int(c)
        if mode == "qsgd_bits":
            b = Fraction(p1) / c
            if b.denominator != 1 or b < 1:
                raise ConfigurationError(f"pair (Q={q1 * c}, b={p1}/{c}) has a non-integer bit width")
            comp = f"qsgd:{int(b)}"
        else:
            frac = float(Fraction(str(p1)) / c)
            if not 0 < frac <= 1:
                raise ConfigurationError(f"pair (Q={q1 * c}, fraction={frac}) is outside (0, 1]")
            comp = f"top:{frac:g}"
        CompressorSpec.parse(comp)
        pairs.append((q1 * c, comp))
    return pairs


def _pair_label(q, comp):
    return f"Q{q}_{comp.replace(':', '')}"


def cmd_budget(cfg: ExperimentConfig, out: Path, mode: str, base, multipliers) -> int:
    pairs = budget_pairs(mode, base, multipliers)
    traces = []
    for k, (q, comp) in enumerate(pairs):
        variant = cfg.replace(q_steps=q, compressor=comp)
        trace = run_experiment(variant, stream=k + 1, cache_dir=out)
        write_atomic(out / f"{cfg.name}-budget-{_pair_label(q, comp)}.csv", trace.to_csv())
        traces.append(trace)
    header = ["iter"]
    for q, comp in pairs:
        lab = _pair_label(q, comp)
        header += [f"bits_{lab}", f"subopt_{lab}"]
    rows = [",".join(header)]
    for k in range(cfg.iters):
        row = [str(k + 1)]
        for tr in traces:
            r = tr.records[k]
            row += [str(r.cumulative_bits), repr(r.suboptimality)]
        rows.append(",".join(row))
    path = write_atomic(out / f"{cfg.name}-budget-summary.csv", "\n".join(rows) + "\n")
    print(path)
    return EXIT_OK


def theory_table(deltas, omegas, lambdas, cs, q_base=1, rho_bar=None) -> str:
    header = ["delta", "omega", "lambda_max_i_minus_w", "gamma", "gossip_rate", "gossip_rate_shorthand"]
    if rho_bar is not None:
        header.append("q0")
    header += [f"g_c{c}" for c in cs]
    rows = [",".join(header)]
    for delta in deltas:
        for omega in omegas:
            for lam in lambdas:
                gamma = consensus_lr(delta, omega, lam)
                row = [delta, omega, lam, gamma, gossip_rate(delta, gamma), gossip_rate_shorthand(delta, omega)]
                if rho_bar is not None:
                    row.append(q_min_plc(rho_bar, delta, gamma))
                row += [budget_tradeoff(delta, omega, q_base, c) for c in cs]
                rows.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(rows) + "\n"


def cmd_theory(args, cfg: ExperimentConfig | None) -> int:
    cs = _floats(args.c, int) if args.c else [1, 2, 4, 8, 16]
    rho_bar = args.rho_bar
    if cfg is not None:
        obj = build_objective(cfg, cfg.seed)
        mixing = metropolis_mixing(build_topology(cfg.topology, cfg.n))
        omega = omega_of(CompressorSpec.parse(cfg.compressor), obj.d)
        deltas, omegas, lambdas = [mixing.delta], [omega], [mixing.lambda_max_i_minus_w]
        if rho_bar is None:
            consts = estimate_constants(obj, centralized_optimum(
                obj, tol=cfg.f_star_tol, max_iters=cfg.f_star_max_iters, x0=start_vector(cfg, obj, cfg.seed)))
            rho_bar = consts.rho_bar
            print(f"# rho_bar={rho_bar!r} ell={consts.ell!r} delta_sq={consts.delta_sq!r}", file=sys.stderr)
    else:
        deltas = _floats(args.delta) if args.delta else [0.2, 0.4, 0.6, 0.8, 1.0]
        omegas = _floats(args.omega) if args.omega else [1.0]
        lambdas = _floats(args.lambda_max) if args.lambda_max else [1.0]
    sys.stdout.write(theory_table(deltas, omegas, lambdas, cs, args.q_base, rho_bar))
    return EXIT_OK


def cmd_gen_data(cfg: ExperimentConfig, out: Path) -> int:
    ds = build_dataset(cfg, cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.task}-seed{cfg.seed}.csv"
    save_dataset_csv(ds, path)
    print(path)
    return EXIT_OK


def cmd_f_star(cfg: ExperimentConfig, out: Path) -> int:
    obj = build_objective(cfg, cfg.seed)
    info = f_star_for(cfg, obj, cfg.seed, out)
    print(json.dumps(info))
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def _floats(text, cast=float):
    return [cast(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delicoco", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")

    sp = sub.add_parser("run", help="single run, CSV trace")
    common(sp)
    sp.add_argument("--repeats", type=int, help="average over this many seeds (seed, seed+1, ...)")

    sp = sub.add_parser("sweep", help="vary one parameter")
    common(sp)
    sp.add_argument("--axis", choices=SWEEP_AXES)
    sp.add_argument("--values", help="comma separated values")
    sp.add_argument("--repeats", type=int)

    sp = sub.add_parser("budget", help="fixed communication budget pairs")
    common(sp)
    sp.add_argument("--mode", choices=BUDGET_MODES)
    sp.add_argument("--base", help="base pair Q:param, e.g. 1:8 or 1:1.0")
    sp.add_argument("--multipliers", help="comma separated c values, e.g. 1,2,4,8")
    sp.add_argument("--repeats", type=int)

    sp = sub.add_parser("theory", help="table of gamma, Q0 and g(c)")
    common(sp, config_required=False)
    sp.add_argument("--delta")
    sp.add_argument("--omega")
    sp.add_argument("--lambda-max", dest="lambda_max")
    sp.add_argument("--rho-bar", dest="rho_bar", type=float)
    sp.add_argument("--c")
    sp.add_argument("--q-base", dest="q_base", type=int, default=1)

    sp = sub.add_parser("gen-data", help="write the generated dataset as CSV")
    common(sp)

    sp = sub.add_parser("f-star", help="compute and cache the centralized optimum")
    common(sp)
    return p


def _apply_overrides(args) -> ExperimentConfig | None:
    if not args.config:
        return None
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out"] = args.out
    if getattr(args, "repeats", None) is not None:
        changes["repeats"] = args.repeats
    return cfg.replace(**changes) if changes else cfg


def dispatch(args) -> int:
    cfg = _apply_overrides(args)
    if args.command == "theory":
        return cmd_theory(args, cfg)
    out = Path(cfg.out)
    if args.command == "run":
        return cmd_run(cfg, out)
    if args.command == "sweep":
        spec = dict(cfg.sweep or {})
        if args.axis:
            spec["axis"] = args.axis
        if args.values:
            spec["values"] = args.values.split(",")
        if "axis" not in spec or "values" not in spec:
            raise ConfigurationError("sweep: need an axis and values (flags or config 'sweep' section)")
        return cmd_sweep(cfg, out, spec["axis"], list(spec["values"]))
    if args.command == "budget":
        spec = dict(cfg.budget or {})
        if args.mode:
            spec["mode"] = args.mode
        if args.base:
            q, _, p = args.base.partition(":")
            spec["base"] = [q, p]
        if args.multipliers:
            spec["multipliers"] = _floats(args.multipliers)
        missing = {"mode", "base", "multipliers"} - set(spec)
        if missing:
            raise ConfigurationError(f"budget: missing {', '.join(sorted(missing))}")
        base = spec["base"]
        if isinstance(base, (list, tuple)) and len(base) == 2 and isinstance(base[1], str):
            base = [base[0], float(base[1]) if "." in base[1] else int(base[1])]
        return cmd_budget(cfg, out, spec["mode"], base, spec["multipliers"])
    if args.command == "gen-data":
        return cmd_gen_data(cfg, out)
    return cmd_f_star(cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return dispatch(args)
    except (ConfigurationError, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (IngestionError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
