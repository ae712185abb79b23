"""Command-line interface: ``hdp-mean {weights,bounds,simulate,audit,reproduce}``.

Exit status: 0 on success, 1 when the input is infeasible or outside a
mathematical domain, 2 on usage errors. Errors are written to stderr as a
single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hdp_mean import __version__, bounds, sim
from hdp_mean._backend import BACKEND
from hdp_mean.estimators import KINDS, MechanismSpec, audit_mechanism, build
from hdp_mean.privacy import DomainError, as_privacy_vector, dp_certificate
from hdp_mean.weights import InfeasibleError, TwoGroupProfile, solve_general, solve_two_group

CSV_SCHEMA_VERSION = 1
SEED_ENV = "HDP_MEAN_SEED"
DIST_CHOICES = "uniform | rademacher | beta | point:<v> | lecam:<delta>[:<sign>]"
TARGETS = ("fig1a", "fig1b", "weight-ratio", "table2")


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """Number formatting shared by every CSV writer (17 significant digits)."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return "" if x is None else str(x)


def write_csv(rows, columns, stream):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(list(columns) + ["schema_version"])
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns] + [CSV_SCHEMA_VERSION])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return [_json_num(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return _json_num(obj.item())
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _json_num(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _json_num(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), default=_json_default, indent=2, sort_keys=True)


def _num(x):
    return int(x) if float(x).is_integer() else float(x)


def parse_level(text) -> float:
    t = str(text).strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def read_eps_file(path) -> np.ndarray:
    levels = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            levels.append(parse_level(line))
    return as_privacy_vector(levels)


@dataclass
class ExperimentConfig:
    """Structured mirror of the command-line flags; JSON round-trips losslessly."""

    command: str = ""
    eps1: float | None = None
    eps2: float | None = None
    n: int | None = None
    f: float | None = None
    eps_file: str | None = None
    mechanisms: list = field(default_factory=list)
    dist: str = "uniform"
    trials: int | None = None
    seed: int | None = None
    threads: int = 1
    clamp: bool = False
    ci: bool = False
    sweep: str | None = None
    target: str | None = None
    draws: int = 1_000_000
    out: str | None = None
    format: str = "json"

    def to_dict(self) -> dict:
        return {k: _json_num(v) if isinstance(v, float) else v for k, v in dataclasses.asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("eps1", "eps2", "f"):
            if d.get(key) is not None:
                d[key] = parse_level(d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def parse_dist(text) -> sim.DistributionSpec:
    parts = str(text).lower().split(":")
    name = parts[0]
    try:
        if name == "uniform":
            return sim.UNIFORM
        if name in ("rademacher", "rademacher_half", "bernoulli"):
            return sim.RADEMACHER_HALF
        if name in ("beta", "beta23", "beta23_shifted"):
            return sim.BETA23_SHIFTED
        if name in ("point", "point_mass"):
            return sim.DistributionSpec("POINT_MASS", value=float(parts[1]))
        if name == "lecam":
            sign = int(parts[2]) if len(parts) > 2 else 1
            return sim.DistributionSpec("LECAM", delta=float(parts[1]), sign=sign)
    except (IndexError, ValueError, DomainError) as exc:
        raise UsageError(f"bad distribution {text!r}: {exc}") from None
    raise UsageError(f"unknown distribution {text!r}; expected {DIST_CHOICES}")


def _check_profile_args(cfg):
    missing = [k for k in ("eps1", "eps2", "n", "f") if getattr(cfg, k) is None]
    if missing:
        raise UsageError(f"missing --{', --'.join(missing)} (or give --eps-file)")
    if cfg.eps1 < 0 or cfg.eps2 < 0 or math.isnan(cfg.eps1) or math.isnan(cfg.eps2):
        raise UsageError("privacy levels must be >= 0")
    if cfg.n < 1:
        raise UsageError("--n must be >= 1")
    if not 0 <= cfg.f <= 1:
        raise UsageError("--f must lie in [0, 1]")


def privacy_from(cfg):
    """Two-group profile from the flags, or a privacy vector from --eps-file."""
    if cfg.eps_file:
        return read_eps_file(cfg.eps_file)
    _check_profile_args(cfg)
    return TwoGroupProfile(cfg.eps1, cfg.eps2, cfg.n, cfg.f)


def resolve_seed(cfg) -> int:
    if cfg.seed is not None:
        return int(cfg.seed)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer") from None
    return 0


def resolve_trials(cfg, default=sim.FULL_TRIALS) -> int:
    if cfg.trials is not None:
        trials = int(cfg.trials)
    else:
        trials = sim.CI_TRIALS if cfg.ci else default
    if trials < sim.MIN_TRIALS:
        raise UsageError(f"--trials must be >= {sim.MIN_TRIALS}")
    return trials


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _emit(text, cfg):
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_weights(cfg) -> int:
    privacy = privacy_from(cfg)
    if isinstance(privacy, TwoGroupProfile):
        sol = solve_two_group(privacy)
        eps_groups = np.array([privacy.eps1, privacy.eps2])
        cert = dp_certificate(sol.weights, sol.eta, eps_groups, degenerate=sol.degenerate)
        doc = {
            "mode": "two_group",
            "eps1": privacy.eps1, "eps2": privacy.eps2, "n": _num(privacy.n), "f": privacy.f,
            "w1": float(sol.weights[0]), "w2": float(sol.weights[1]),
            "weights": sol.weights, "counts": sol.counts,
            "R": privacy.R, "r": privacy.r, "regime": bounds.regime(privacy),
            "saturation_eps2": privacy.saturation_eps2,
        }
    else:
        sol = solve_general(privacy)
        cert = dp_certificate(sol.weights, sol.eta, privacy, degenerate=sol.degenerate)
        doc = {"mode": "general", "n": int(privacy.shape[0]), "eps": privacy, "weights": sol.weights}
    doc.update({
        "eta": sol.eta, "objective": sol.objective, "degenerate": bool(sol.degenerate),
        "effective_eps": cert.effective_levels, "dp_satisfied": cert.ok,
    })
    if cfg.format == "csv":
        buf = io.StringIO()
        labels = ["group1", "group2"] if doc["mode"] == "two_group" else list(range(len(sol.weights)))
        rows = [{"index": lab, "eps": e, "weight": w, "effective_eps": ee, "eta": sol.eta,
                 "objective": sol.objective, "degenerate": bool(sol.degenerate)}
                for lab, e, w, ee in zip(labels, cert.declared, sol.weights, cert.effective_levels)]
        write_csv(rows, ["index", "eps", "weight", "effective_eps", "eta", "objective", "degenerate"], buf)
        _emit(buf.getvalue(), cfg)
    else:
        _emit(dump_json(doc) + "\n", cfg)
    return 0


def _parse_sweep(text):
    try:
        name, lo, hi, steps = text.split(":")
        lo, hi, steps = parse_level(lo), parse_level(hi), int(steps)
    except ValueError:
        raise UsageError("--sweep expects eps2:lo:hi:steps") from None
    if name != "eps2" or steps < 1 or not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise UsageError("--sweep expects eps2:lo:hi:steps with finite lo <= hi")
    return np.linspace(lo, hi, steps)


BOUND_COLUMNS = ["eps1", "eps2", "n", "f", "upper", "lower", "regime", "saturation_eps2",
                 "L1", "L2", "L3", "lower_first_principles"]


def bound_rows(cfg):
    _check_profile_args(cfg)
    eps2_values = _parse_sweep(cfg.sweep) if cfg.sweep else [cfg.eps2]
    rows = []
    for eps2 in eps2_values:
        p = TwoGroupProfile(cfg.eps1, eps2, cfg.n, cfg.f)
        rep = bounds.bound_report(p)
        l1, l2, l3 = rep.lower_terms
        rows.append({
            "eps1": p.eps1, "eps2": p.eps2, "n": p.n, "f": p.f, "upper": rep.upper, "lower": rep.lower,
            "regime": rep.regime, "saturation_eps2": rep.saturation_eps2, "L1": l1, "L2": l2, "L3": l3,
            "lower_first_principles": bounds.lower_bound_from_first_principles(p),
        })
    return rows


def cmd_bounds(cfg) -> int:
    buf = io.StringIO()
    write_csv(bound_rows(cfg), BOUND_COLUMNS, buf)
    _emit(buf.getvalue(), cfg)
    return 0


SIM_COLUMNS = ["mechanism", "n", "f", "eps1", "eps2", "dist", "trials", "seed", "mse", "stderr",
               "analytic_mse", "upper_bound", "reason"]


def _mechanism_list(cfg):
    mechs = [m.upper() for m in (cfg.mechanisms or ["all"])]
    if "ALL" in mechs:
        return list(KINDS)
    bad = [m for m in mechs if m not in KINDS]
    if bad:
        raise UsageError(f"unknown mechanism(s) {bad}; expected {[k.lower() for k in KINDS]} or all")
    return mechs


def simulate_rows(cfg):
    privacy = privacy_from(cfg)
    dist = parse_dist(cfg.dist)
    trials = resolve_trials(cfg)
    seed = resolve_seed(cfg)
    kinds = _mechanism_list(cfg)
    if isinstance(privacy, TwoGroupProfile):
        privacy = privacy.realized()
        meta = {"n": int(privacy.n), "f": privacy.f, "eps1": privacy.eps1, "eps2": privacy.eps2,
                "upper_bound": bounds.upper_bound(privacy)}
    else:
        meta = {"n": int(privacy.shape[0]), "f": math.nan, "eps1": float(privacy.min()),
                "eps2": float(privacy.max()), "upper_bound": math.nan}
    specs = [MechanismSpec(k, privacy, clamp=cfg.clamp) for k in kinds]
    results = sim.estimate_mse_many(specs, dist, trials, seed, threads=cfg.threads)
    rows = []
    for r in results:
        row = dict(meta)
        row.update({"mechanism": r.mechanism.lower(), "dist": dist.label, "trials": trials, "seed": seed,
                    "mse": r.mse, "stderr": r.stderr, "analytic_mse": r.analytic_ref.total,
                    "reason": r.reason})
        rows.append(row)
    return rows


def cmd_simulate(cfg) -> int:
    buf = io.StringIO()
    write_csv(simulate_rows(cfg), SIM_COLUMNS, buf)
    _emit(buf.getvalue(), cfg)
    return 0


def audit_report(cfg) -> dict:
    """Analytic certificate plus an empirical histogram-ratio test per mechanism.

    The empirical test uses the user with the largest effective level and the
    neighbouring datasets that move that user from -0.5 to +0.5 (all other
    users at 0).
    """
    privacy = privacy_from(cfg)
    seed = resolve_seed(cfg)
    kinds = _mechanism_list(cfg)
    draws = int(cfg.draws)
    if draws < 1000:
        raise UsageError("--draws must be >= 1000")
    report = {"seed": seed, "draws": draws, "mechanisms": []}
    for kind in kinds:
        spec = MechanismSpec(kind, privacy)
        try:
            mech = build(spec)
        except InfeasibleError as exc:
            report["mechanisms"].append({"mechanism": kind.lower(), "infeasible": str(exc)})
            continue
        cert = mech.certificate()
        i, eff, audit = audit_mechanism(mech, draws, seed)
        report["mechanisms"].append({
            "mechanism": kind.lower(), "certificate_ok": cert.ok,
            "effective_eps": cert.effective_levels if mech.n <= 20 else None,
            "audited_user": i, "audited_eps": eff, "declared_eps": float(cert.declared[i]),
            "max_z": audit.max_z, "bins": audit.bins_tested, "empirical_ok": audit.passed,
        })
    report["ok"] = all(m.get("certificate_ok", True) and m.get("empirical_ok", True) for m in report["mechanisms"])
    return report


def cmd_audit(cfg) -> int:
    report = audit_report(cfg)
    _emit(dump_json(report) + "\n", cfg)
    return 0 if report["ok"] else 1


FIG1A_N = (125, 250, 500, 1000, 2000, 4000)
FIG1B_EPS2 = tuple(round(0.1 + 0.05 * i, 10) for i in range(19))
WEIGHT_RATIO_EPS2 = tuple(float(v) for v in np.geomspace(0.01, 1.0, 41))


def reproduce(target, out_dir, trials, seed, threads=1) -> dict:
    """Write the CSV panel(s) for ``target`` into ``out_dir``; return the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"target": target, "seed": seed, "trials": trials, "version": version_string(),
                "backend": BACKEND, "csv_schema": CSV_SCHEMA_VERSION, "files": []}

    def save(name, rows, columns):
        with open(out_dir / name, "w", newline="") as fh:
            write_csv(rows, columns, fh)
        manifest["files"].append(name)

    if target == "fig1a":
        cfg = {"eps1": 0.1, "eps2": 0.15, "f": 0.5, "dist": "uniform", "n_values": list(FIG1A_N)}
        rows = sim.sweep_n(0.1, 0.15, 0.5, sim.UNIFORM, FIG1A_N, trials, seed, threads=threads)
        save("fig1a.csv", rows, ["mechanism", "n", "f", "eps1", "eps2", "mse", "stderr", "analytic_mse",
                                 "transform", "transform_se", "reason"])
    elif target == "fig1b":
        cfg = {"eps1": 0.1, "n": 1000, "f": 0.7, "dist": "rademacher", "eps2_values": list(FIG1B_EPS2)}
        rows = sim.sweep_eps2(0.1, 1000, 0.7, sim.RADEMACHER_HALF, FIG1B_EPS2, trials, seed, threads=threads)
        save("fig1b.csv", rows, ["mechanism", "n", "f", "eps1", "eps2", "mse", "stderr", "analytic_mse",
                                 "mse_x1e4", "stderr_x1e4", "saturation_eps2", "weight_ratio",
                                 "upper_bound", "reason"])
        manifest["saturation_eps2"] = TwoGroupProfile(0.1, 1.0, 1000, 0.7).saturation_eps2
    elif target == "weight-ratio":
        cfg = {"eps1": 0.01, "n": 10_000, "f": 0.5, "eps2_values": list(WEIGHT_RATIO_EPS2)}
        rows = sim.weight_ratio_table(0.01, 10_000, 0.5, WEIGHT_RATIO_EPS2)
        save("weight_ratio.csv", rows, ["eps1", "eps2", "n", "f", "r", "R", "weight_ratio", "min_r_R"])
        manifest["saturation_eps2"] = TwoGroupProfile(0.01, 1.0, 10_000, 0.5).saturation_eps2
    elif target == "table2":
        cfg = {"n": 1000, "low_log_range": [-3.0, -2.0], "high_log_range": [-4.0, 2.0], "log_base": "e",
               "dist": "beta23_shifted", "mechanisms": list(sim.TABLE2_KINDS)}
        rows = sim.table2_experiment(n=1000, trials=trials, seed=seed, threads=threads)
        save("table2.csv", rows, ["regime", "mechanism", "n", "trials", "ln_mse", "mse", "stderr",
                                  "analytic_mse", "eps_min", "eps_max", "reason"])
        manifest["notes"] = "FME is out of scope (defined only in an external reference); its row is omitted."
    else:
        raise UsageError(f"unknown target {target!r}; expected one of {TARGETS}")
    manifest["config"] = cfg
    (out_dir / f"{target}.manifest.json").write_text(dump_json(manifest) + "\n")
    return manifest


def cmd_reproduce(cfg) -> int:
    targets = TARGETS if cfg.target == "all" else (cfg.target,)
    if cfg.target not in TARGETS + ("all",):
        raise UsageError(f"unknown target {cfg.target!r}; expected one of {TARGETS + ('all',)}")
    seed = resolve_seed(cfg)
    out_dir = cfg.out or "results"
    manifests = []
    for t in targets:
        trials = resolve_trials(cfg, sim.TABLE2_TRIALS if t == "table2" else sim.FULL_TRIALS)
        manifests.append(reproduce(t, out_dir, trials, seed, cfg.threads))
    sys.stdout.write(dump_json({"out_dir": str(out_dir), "targets": [m["target"] for m in manifests],
                                "files": [f for m in manifests for f in m["files"]]}) + "\n")
    return 0


COMMANDS = {"weights": cmd_weights, "bounds": cmd_bounds, "simulate": cmd_simulate,
            "audit": cmd_audit, "reproduce": cmd_reproduce}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_privacy(p):
    p.add_argument("--eps1", type=parse_level)
    p.add_argument("--eps2", type=parse_level)
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=float)
    p.add_argument("--eps-file", dest="eps_file", help="one privacy level per line; 'inf' allowed")


def _add_run(p, mechanisms=True):
    p.add_argument("--seed", type=int, help=f"default: ${SEED_ENV} or 0")
    if mechanisms:
        p.add_argument("--mechanism", dest="mechanisms", action="append",
                       help="adpm|uni|sm|propdpm|ldpe|stretch|all (repeatable)")
    p.add_argument("--threads", type=int)


def build_parser():
    parser = _Parser(prog="hdp-mean", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON document mirroring the flags; flags win")
        p.add_argument("--out", help="output path (directory for reproduce)")

    p = sub.add_parser("weights", help="ADPM weights, noise scale and certificate")
    _add_privacy(p)
    p.add_argument("--format", choices=("json", "csv"))
    common(p)

    p = sub.add_parser("bounds", help="upper/lower bounds for a two-group profile")
    _add_privacy(p)
    p.add_argument("--sweep", help="eps2:lo:hi:steps")
    common(p)

    p = sub.add_parser("simulate", help="Monte Carlo MSE of the mechanisms")
    _add_privacy(p)
    _add_run(p)
    p.add_argument("--dist", help=DIST_CHOICES)
    p.add_argument("--trials", type=int)
    p.add_argument("--ci", action="store_const", const=True, help=f"use {sim.CI_TRIALS} trials by default")
    p.add_argument("--clamp", action="store_const", const=True, help="clamp releases to [-0.5, 0.5]")
    common(p)

    p = sub.add_parser("audit", help="DP certificate plus empirical density-ratio test")
    _add_privacy(p)
    _add_run(p)
    p.add_argument("--draws", type=int)
    common(p)

    p = sub.add_parser("reproduce", help="regenerate a figure/table as CSV + manifest")
    p.add_argument("target", help="|".join(TARGETS + ("all",)))
    _add_run(p, mechanisms=False)
    p.add_argument("--trials", type=int)
    p.add_argument("--ci", action="store_const", const=True, help=f"use {sim.CI_TRIALS} trials by default")
    common(p)
    return parser


def config_from_args(argv) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required: " + ", ".join(COMMANDS))
    if getattr(args, "config", None):
        try:
            cfg = ExperimentConfig.from_json(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from None
    else:
        cfg = ExperimentConfig()
    cfg.command = args.command
    for name, value in vars(args).items():
        if name in ("command", "config") or value is None:
            continue
        if hasattr(cfg, name):
            setattr(cfg, name, value)
    if cfg.threads is None or cfg.threads < 1:
        raise UsageError("--threads must be >= 1")
    return cfg


def _fail(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = config_from_args(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    except InfeasibleError as exc:
        return _fail("infeasible", str(exc), 1)
    except DomainError as exc:
        return _fail("domain", str(exc), 1)
    except (OSError, ValueError) as exc:
        return _fail("domain", str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
