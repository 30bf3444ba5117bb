"""Batch front-end: parse config, dispatch, emit CSV/JSON artifacts.

Configuration is a flat key=value text file with CLI-flag overrides
(flags win over the file, the file over built-in defaults).  All outputs
are written atomically (temp file + rename) with LF line endings and
17-significant-digit floats, so identical configs produce byte-identical
files.  Plotting is out of scope: the CLI emits data.

Exit codes: 0 ok, 2 config error, 3 work budget exceeded,
4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from . import __version__, engine, experiments, oracle, theory
from .engine import WorkBudgetError, resolve_workers
from .environment import Environment
from .laws import LawSpecError, TransformDivergenceError, TwoPoint, parse_law

__all__ = ["RunConfig", "ConfigError", "main", "entry"]

COMMANDS = ("theory-scan", "simulate", "chi", "estimate-hq", "moments", "survival", "verify")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    """Bad configuration file, flag value, or grid specification."""


@dataclass
class RunConfig:
    """Run parameters; every field except command and law has a default."""

    command: str
    law: str = ""
    ell: int = 3
    beta: str = "1.0"  # scalar or grid "start:stop:step"
    depth: int = 12
    theta: float = 0.5
    delta: str = "0.125,0.0625,0.03125,0.015625,0.0078125,0.00390625"
    eps: float = 0.0  # 0 means r(theta_c)/2
    replicas: int = 1000
    seed: int = 20260808
    threads: int = 0  # 0 means auto; TREEPOLYMER_THREADS overrides
    outdir: str = "."
    budget: int = engine.DEFAULT_WORK_BUDGET
    split_depth: int = engine.DEFAULT_SPLIT_DEPTH

    def beta_values(self):
        return parse_grid(self.beta)

    def delta_values(self):
        try:
            vals = [float(x) for x in self.delta.split(",") if x.strip()]
        except ValueError as exc:
            raise ConfigError(f"delta: {exc}") from None
        if not vals or any(v <= 0.0 for v in vals):
            raise ConfigError(f"delta values must be positive: {self.delta!r}")
        return vals

    def the_law(self):
        if not self.law:
            raise ConfigError("this command needs a law (use --law or the config file)")
        return parse_law(self.law)

    def workers(self):
        return resolve_workers(self.threads if self.threads > 0 else None)

    def to_text(self):
        # the command is given positionally, not through the config file
        pairs = [(f.name, getattr(self, f.name)) for f in fields(self) if f.name != "command"]
        return "\n".join(f"{k}={v}" for k, v in pairs) + "\n"

    def echo(self):
        # threads and outdir are execution environment, not science parameters:
        # outputs must be byte-identical across worker counts and directories
        skip = {"threads", "outdir"}
        pairs = [(f.name, getattr(self, f.name)) for f in fields(self) if f.name not in skip]
        return " ".join(f"{k}={v}" for k, v in pairs)


def parse_grid(text):
    """Expand 'start:stop:step' into a finite strictly increasing list."""
    text = str(text).strip()
    if ":" not in text:
        try:
            return [float(text)]
        except ValueError as exc:
            raise ConfigError(f"bad numeric value {text!r}: {exc}") from None
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid spec must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"grid spec {text!r}: {exc}") from None
    if step <= 0.0 or stop < start:
        raise ConfigError(f"grid spec needs step > 0 and stop >= start: {text!r}")
    values = []
    k = 0
    while True:
        v = start + k * step
        if v > stop + 1e-12 * max(1.0, abs(stop)):
            break
        values.append(v)
        k += 1
    return values


def parse_config_file(text):
    """key=value lines, '#' comments; unknown keys are config errors."""
    known = {f.name for f in fields(RunConfig)} - {"command"}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        out[key] = value
    return out


_INT_FIELDS = {"ell", "depth", "replicas", "seed", "threads", "budget", "split_depth"}
_FLOAT_FIELDS = {"theta", "eps"}


def _coerce(key, value):
    try:
        if key in _INT_FIELDS:
            return int(value)
        if key in _FLOAT_FIELDS:
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return value


def build_config(args):
    values = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        for k, v in parse_config_file(text).items():
            values[k] = _coerce(k, v)
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        flag = getattr(args, f.name.replace("-", "_"), None)
        if flag is not None:
            values[f.name] = _coerce(f.name, flag)
    return RunConfig(command=args.command, **values)


def write_atomic(path, text):
    """Write text with LF endings via a temp file in the same directory."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _csv(cfg, columns, rows):
    lines = [f"# treepolymer={__version__} {cfg.echo()}"]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _summary_json(cfg, payload):
    skip = {"threads", "outdir"}
    doc = {
        "artifact": {"name": "treepolymer", "version": __version__},
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name not in skip},
    }
    doc.update(payload)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _emit(cfg, stem, csv_text, summary_payload):
    paths = []
    if csv_text is not None:
        p = os.path.join(cfg.outdir, f"{stem}.csv")
        write_atomic(p, csv_text)
        paths.append(p)
    p = os.path.join(cfg.outdir, f"{stem}_summary.json")
    write_atomic(p, _summary_json(cfg, summary_payload))
    paths.append(p)
    for p in paths:
        print(p)
    return paths


def cmd_theory_scan(cfg):
    report = experiments.phase_scan(cfg.the_law(), cfg.ell, cfg.beta_values())
    _emit(cfg, "theory_scan", _csv(cfg, report.columns, report.rows), report.summary())
    return EXIT_OK


def cmd_simulate(cfg):
    env = Environment(cfg.the_law(), cfg.seed, cfg.ell)
    prof = engine.compute_profile(
        env,
        float(cfg.beta_values()[0]),
        cfg.depth,
        work_budget=cfg.budget,
        split_depth=cfg.split_depth,
        workers=cfg.workers(),
    )
    rows = [
        (n, float(prof.z[n]), float(prof.log_unnormalized[n]), float(prof.free_energy[n]))
        for n in range(cfg.depth + 1)
    ]
    payload = {
        "experiment": "simulate",
        "z_final": float(prof.z[cfg.depth]),
        "free_energy_final": float(prof.free_energy[cfg.depth]) if cfg.depth >= 1 else None,
    }
    _emit(cfg, "simulate", _csv(cfg, ["n", "z", "log_unnormalized", "free_energy"], rows), payload)
    return EXIT_OK


def cmd_chi(cfg):
    law = cfg.the_law()
    beta = float(cfg.beta_values()[0])
    delta = cfg.delta_values()[0]
    h = theory.annealed_critical_point(law, beta, cfg.ell) + delta
    env = Environment(law, cfg.seed, cfg.ell)
    sus = engine.susceptibility(
        env,
        beta,
        h,
        cfg.depth,
        work_budget=cfg.budget,
        split_depth=cfg.split_depth,
        workers=cfg.workers(),
    )
    rows = [
        (n, float(sus.terms[n]), float(sus.partial_sums[n])) for n in range(cfg.depth + 1)
    ]
    payload = {
        "experiment": "chi",
        "h": h,
        "delta": delta,
        "tail_ratio": sus.tail_ratio,
        "diverging": sus.diverging,
    }
    _emit(cfg, "chi", _csv(cfg, ["n", "term", "partial_sum"], rows), payload)
    return EXIT_OK


def cmd_estimate_hq(cfg):
    report = experiments.quenched_point_estimate(
        cfg.the_law(),
        cfg.ell,
        float(cfg.beta_values()[0]),
        cfg.depth,
        cfg.replicas,
        cfg.seed,
        workers=cfg.workers(),
    )
    _emit(cfg, "estimate_hq", _csv(cfg, report.columns, report.rows), report.summary())
    return EXIT_OK


def cmd_moments(cfg):
    law = cfg.the_law()
    beta = float(cfg.beta_values()[0])
    n_list = list(range(1, cfg.depth + 1))
    samples = experiments.sample_set(
        law, cfg.ell, beta, cfg.depth, cfg.replicas, cfg.seed, workers=cfg.workers()
    )
    frac = experiments.mc_fractional_moment(
        law, cfg.ell, beta, cfg.theta, n_list, cfg.replicas, cfg.seed, samples=samples
    )
    second = experiments.mc_second_moment(
        law, cfg.ell, beta, n_list, cfg.replicas, cfg.seed, samples=samples
    )
    columns = ["kind", "theta", "n", "estimate", "std_error", "reference", "check"]
    rows = [("fractional", cfg.theta, *row) for row in frac.rows]
    rows += [("second", 2.0, *row) for row in second.rows]
    payload = {
        "experiment": "moments",
        "fractional": frac.summary(),
        "second": second.summary(),
        "passed": frac.passed and second.passed,
    }
    _emit(cfg, "moments", _csv(cfg, columns, rows), payload)
    return EXIT_OK


def cmd_survival(cfg):
    law = cfg.the_law()
    beta = float(cfg.beta_values()[0])
    eps = cfg.eps
    if eps <= 0.0:
        tc = theory.theta_c(law, beta, cfg.ell)
        eps = 0.5 * theory.r_theta(law, beta, tc, cfg.ell)
    lo = min(6, cfg.depth)
    n_list = list(range(lo, cfg.depth + 1))
    report = experiments.survival_probability(
        law, cfg.ell, beta, eps, n_list, cfg.replicas, cfg.seed, workers=cfg.workers()
    )
    _emit(cfg, "survival", _csv(cfg, report.columns, report.rows), report.summary())
    return EXIT_OK


def _verify_checks():
    """The oracle suite: small exact cross-checks of every load-bearing piece."""
    checks = []
    law2 = TwoPoint(0.0, 1.0, 0.5)
    gauss_beta = 1.2

    def record(name, passed, detail):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    for ell in (2, 3, 4):
        for n in range(0, 7):
            got = len(oracle.enumerate_saws(ell, n).paths)
            want = theory.saw_count(ell, n)
            if got != want:
                record(f"saw_count ell={ell}", False, f"n={n}: {got} != {want}")
                break
        else:
            record(f"saw_count ell={ell}", True, "n <= 6 exact")

    worst = 0.0
    for ell in (2, 3):
        for seed in (11, 12):
            env = Environment(law2, seed, ell)
            prof = engine.compute_profile(env, gauss_beta, 6)
            ref = oracle.naive_profile(env, gauss_beta, 6)
            worst = max(worst, float(np.max(np.abs(prof.z - ref) / ref)))
    record("engine_equals_naive_summation", worst <= 1e-12, f"max rel err {worst:.3e}")

    worst = 0.0
    for n in (1, 2, 3):
        worst = max(worst, abs(oracle.exact_expectation(law2, 1.0, 3, n, "mean_zn") - 1.0))
    record("martingale_mean_one", worst <= 1e-12, f"max |E[Z_n]-1| = {worst:.3e}")

    worst = 0.0
    for n in (1, 2, 3):
        got = oracle.exact_expectation(law2, 1.0, 3, n, "second_moment")
        want = theory.second_moment_closed_form(law2, 1.0, n, 3)
        worst = max(worst, abs(got - want))
    record("second_moment_closed_form", worst <= 1e-10, f"max abs err {worst:.3e}")

    ok = True
    for n in (1, 2):
        got = oracle.exact_expectation(law2, 1.0, 3, n, "fractional_moment", theta=0.5)
        bound = theory.fractional_moment_bound(law2, 1.0, 0.5, n, 3)
        ok = ok and got <= bound + 1e-12
    record("fractional_moment_bound", ok, "theta=0.5, n <= 2")

    anchors = max(
        abs(theory.r_theta(law2, 0.7, 1.0, 3) - 1.0),
        abs(theory.r_theta(law2, 0.7, 0.0, 3) - 2.0),
    )
    record("r_theta_anchors", anchors <= 1e-12, f"max anchor err {anchors:.3e}")

    from .laws import Gaussian

    bc = theory.beta_c(Gaussian(0.0, 1.0), 3)
    err = abs(bc - math.sqrt(2.0 * math.log(2.0)))
    record("gaussian_beta_c", err <= 1e-8, f"|beta_c - sqrt(2 log 2)| = {err:.3e}")
    return checks


def cmd_verify(cfg):
    checks = _verify_checks()
    passed = all(c["passed"] for c in checks)
    payload = {"experiment": "verify", "checks": checks, "passed": passed}
    _emit(cfg, "verify", None, payload)
    return EXIT_OK if passed else EXIT_VERIFY


DISPATCH = {
    "theory-scan": cmd_theory_scan,
    "simulate": cmd_simulate,
    "chi": cmd_chi,
    "estimate-hq": cmd_estimate_hq,
    "moments": cmd_moments,
    "survival": cmd_survival,
    "verify": cmd_verify,
}

_EPILOG = """\
exit codes: 0 ok, 2 config error (bad flag, law spec, or config file),
3 work budget exceeded, 4 verification failure.
law grammar: twopoint:a,b,p | discrete:v1:p1,v2:p2,... | gaussian:mean,stdev
| exponential:rate | constant:x0.
threads: --threads, overridden by the TREEPOLYMER_THREADS environment variable.
"""


def build_parser():
    p = argparse.ArgumentParser(
        prog="treepolymer",
        description="polymer-on-disordered-tree batch runner",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--law", default=None, help="law specification string")
    p.add_argument("--ell", type=int, default=None, help="tree degree (default 3)")
    p.add_argument("--beta", default=None, help="beta value or grid start:stop:step")
    p.add_argument("--depth", type=int, default=None, help="tree depth / max n")
    p.add_argument("--theta", type=float, default=None, help="fractional-moment exponent")
    p.add_argument("--delta", default=None, help="comma-separated offsets above h_a")
    p.add_argument("--eps", type=float, default=None, help="survival slack (0 = r(theta_c)/2)")
    p.add_argument("--replicas", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--outdir", default=None)
    p.add_argument("--budget", type=int, default=None, help="edge-visit work budget")
    p.add_argument("--split-depth", dest="split_depth", type=int, default=None)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_CONFIG
    try:
        cfg = build_config(args)
        return DISPATCH[cfg.command](cfg)
    except (ConfigError, LawSpecError, TransformDivergenceError, ValueError) as exc:
        print(f"treepolymer: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WorkBudgetError as exc:
        print(f"treepolymer: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET


def entry():
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
