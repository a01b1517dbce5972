"""Command-line front end: ``polyq <subcommand> [options]``.

Options can also come from a ``--config`` file of ``key=value`` lines;
flags given on the command line win.  Every output row carries the
experiment parameters, the seed and the version string, and identical
configurations give byte-identical output.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import subprocess
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("polyq")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET, EXIT_UNCONVERGED = 0, 1, 2, 3, 4

SUBCOMMANDS = ("enumerate", "mcmc", "sweep-beta", "max-energy", "rate-fn", "pulling", "selftest")
NEEDS_SEED = {"enumerate", "mcmc", "sweep-beta", "max-energy"}


class ConfigError(ValueError):
    pass


def _pos_int(s):
    v = int(s)
    if v <= 0:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError("must be a nonnegative integer")
    return v


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _floats(s):
    if isinstance(s, (list, tuple)):
        return tuple(float(x) for x in s)
    return tuple(_float(x) for x in str(s).split(",") if x.strip())


def _strings(s):
    if isinstance(s, (list, tuple)):
        return tuple(s)
    return tuple(x.strip() for x in str(s).split(",") if x.strip())


def _bool(s):
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("must be true or false")


def _choice(*opts):
    def parse(s):
        if s not in opts:
            raise ValueError(f"must be one of {', '.join(opts)}")
        return s
    return parse


def _open_unit(s):
    v = float(s)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


def _law(s):
    from .model import ChargeLaw
    ChargeLaw.from_name(s)
    return str(s).strip().lower()


# key -> (parser, default, help)
KEYS = {
    "d": (_pos_int, 2, "lattice dimension"),
    "n": (_pos_int, 8, "number of monomers N"),
    "beta": (_float, 1.0, "inverse temperature"),
    "charges": (_law, "rademacher", "charge law: rademacher, gaussian, uniform, discrete:v=p,..."),
    "pull": (_floats, None, "pulling force, comma-separated (one value per axis)"),
    "seed": (_nonneg_int, None, "master seed (required for stochastic subcommands)"),
    "replicas": (_pos_int, 1, "number of disorder replicas"),
    "sweeps": (_pos_int, 20000, "Metropolis sweeps per run"),
    "burn_in": (_nonneg_int, None, "burn-in sweeps (default: adaptive)"),
    "observables": (_strings, ("H/N2", "Lstar/N"), "comma-separated observable names"),
    "output": (str, "-", "output path, '-' for stdout"),
    "format": (_choice("csv", "json"), "csv", "csv or json (one record per line)"),
    "budget": (_pos_int, None, "maximum number of enumerated paths"),
    "init": (_choice("hot", "cold", "straight"), "hot", "initial state of the chain"),
    "rewire": (_bool, False, "enable the collapse/expand move"),
    "alpha": (_open_unit, 0.5, "alpha for the S/C/R events"),
    "method": (_choice("auto", "exact", "mcmc"), "auto", "free-energy method for sweep-beta"),
    "from": (_float, 0.0, "first beta of the sweep"),
    "to": (_float, 6.0, "last beta of the sweep"),
    "steps": (_pos_int, 16, "number of beta grid points"),
    "eps": (_floats, None, "eps values for rate-fn (default: a grid on (0, 1/2))"),
    "lambda": (_floats, (0.0,), "pulling vectors for the pulling subcommand"),
    "brute": (_bool, False, "max-energy: also brute-force over all paths"),
    "strict": (_bool, False, "exit 4 if any run is flagged unconverged"),
    "emit_gnuplot": (_bool, False, "write a companion gnuplot script next to the output"),
    "trace": (str, None, "mcmc: write the energy trace of replica 0 as .npy"),
    "quick": (_bool, True, "selftest: reduced sample sizes"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def spec(self, seed=None):
        from .model import ChargeLaw, GibbsSpec
        pull = self.pull
        if pull is not None and len(pull) == 1 and self.d > 1:
            pull = pull * self.d
        return GibbsSpec(self.d, self.n, self.beta, ChargeLaw.from_name(self.charges), pull, seed)


def _norm_key(k: str) -> str:
    return k.strip().lstrip("-").replace("-", "_").lower()


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[_norm_key(k)] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polyq", description="Quenched charged-polymer experiments.")
    p.add_argument("--version", action="version", version=version_string())
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="key=value file; flags override it")
        for key, (_, default, help_) in KEYS.items():
            flag = "--" + key.replace("_", "-")
            # SUPPRESS keeps unset flags out of the namespace so the file can fill them
            sp.add_argument(flag, dest=key, default=argparse.SUPPRESS,
                            help=f"{help_} (default: {default})")
    return p


def parse_config(argv=None) -> ExperimentConfig:
    """Merge defaults, the optional config file and the flags, then validate."""
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code not in (0, None):
            raise ConfigError("invalid command line") from None
        raise
    flags = {k: v for k, v in vars(ns).items() if k not in ("subcommand", "config")}
    raw = {}
    if getattr(ns, "config", None):
        raw = read_config_file(ns.config)
        for k in raw:
            if k not in KEYS:
                raise ConfigError(f"unknown key {k!r} in {ns.config}")
        for k in set(raw) & set(flags):
            log.info("flag --%s overrides config file value %r", k.replace("_", "-"), raw[k])
    raw.update(flags)
    values = {}
    for key, (parse, default, _) in KEYS.items():
        if key in raw and raw[key] is not None:
            try:
                values[key] = parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})") from None
        else:
            values[key] = default
    cfg = ExperimentConfig(ns.subcommand, values)
    if cfg.subcommand in NEEDS_SEED and cfg.seed is None:
        raise ConfigError(f"missing key 'seed': --seed is required for {cfg.subcommand}")
    if cfg.subcommand == "pulling" and cfg.seed is None and "n" in raw:
        raise ConfigError("missing key 'seed': --seed is required to compute a pulled partition function")
    if cfg.pull is not None and len(cfg.pull) not in (1, cfg.d):
        raise ConfigError(f"bad value for 'pull': need 1 or {cfg.d} components")
    if cfg.subcommand == "sweep-beta" and not cfg.to > getattr(cfg, "from"):
        raise ConfigError("bad value for 'to': must exceed 'from'")
    return cfg


# ---------------------------------------------------------------------------
# output


def version_string() -> str:
    """``polyq <version>`` plus ``git describe`` of the source tree when available."""
    here = Path(__file__).resolve().parent
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                           capture_output=True, text=True, timeout=5)
        if r.returncode == 0 and r.stdout.strip():
            return f"polyq {__version__}+g{r.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"polyq {__version__}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(_fmt(x)) for x in v)
    return v


class RowWriter:
    """Collects rows and writes them as CSV (RFC 4180) or JSON lines."""

    def __init__(self, cfg: ExperimentConfig, meta: dict):
        self.cfg = cfg
        self.meta = meta
        self.rows = []

    def add(self, **row):
        self.rows.append({**row, **self.meta})

    def render(self) -> str:
        if self.cfg.format == "json":
            return "".join(json.dumps({k: _jsonable(v) for k, v in r.items()}, sort_keys=True) + "\n"
                           for r in self.rows)
        cols = []
        for r in self.rows:
            cols += [k for k in r if k not in cols]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()

    def write(self) -> None:
        text = self.render()
        if self.cfg.output == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
        else:
            Path(self.cfg.output).write_text(text, newline="")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def _meta(cfg: ExperimentConfig, spec=None) -> dict:
    m = {}
    if spec is not None:
        m.update(d=spec.d, N=spec.N, charges=spec.law.name, pull=tuple(spec.pull))
    m.update(seed=cfg.seed, version=version_string())
    return m


def _replica_seeds(seed: int, r: int):
    """Charge and chain seeds of replica r; independent of the replica count."""
    return [seed, r, 0], [seed, r, 1]


GNUPLOT = {
    "sweep-beta": ('set datafile separator ","\nset key autotitle columnhead\nset xlabel "beta"\n'
                   'plot "{out}" using 1:2:3 with yerrorbars title "F", '
                   '"" using 1:4 with linespoints title "E[H/N^2]"\n'),
    "rate-fn": ('set datafile separator ","\nset key autotitle columnhead\nset xlabel "eps"\n'
                'plot "{out}" using 1:2 with linespoints title "I(eps)"\n'),
}


def _emit_gnuplot(cfg: ExperimentConfig):
    if not cfg.emit_gnuplot:
        return
    if cfg.output == "-" or cfg.subcommand not in GNUPLOT:
        log.warning("--emit-gnuplot needs a file output and applies to sweep-beta and rate-fn")
        return
    Path(cfg.output + ".gp").write_text(GNUPLOT[cfg.subcommand].format(out=Path(cfg.output).name))


# ---------------------------------------------------------------------------
# subcommands


def cmd_enumerate(cfg: ExperimentConfig) -> int:
    from .exact import ExactGibbs
    spec = cfg.spec(cfg.seed)
    out = RowWriter(cfg, _meta(cfg, spec))
    for r in range(cfg.replicas):
        qseed, _ = _replica_seeds(cfg.seed, r)
        q = spec.charges(qseed)
        if spec.pulled:
            from .pulling import log_tilted_partition
            out.add(replica=r, beta=spec.beta, observable="logZ",
                    value=log_tilted_partition(spec, q, cfg.budget))
            continue
        g = ExactGibbs(spec, q, cfg.budget)
        out.add(replica=r, beta=spec.beta, observable="logZ", value=g.log_Z)
        out.add(replica=r, beta=spec.beta, observable="F", value=g.free_energy)
        for name, v in g.expect_many(list(cfg.observables)).items():
            out.add(replica=r, beta=spec.beta, observable=name, value=v)
    out.write()
    return EXIT_OK


def cmd_mcmc(cfg: ExperimentConfig) -> int:
    from .mcmc import metropolis_run
    spec = cfg.spec(cfg.seed)
    out = RowWriter(cfg, _meta(cfg, spec))
    flagged = False
    per_obs = {o: [] for o in cfg.observables}
    for r in range(cfg.replicas):
        qseed, cseed = _replica_seeds(cfg.seed, r)
        q = spec.charges(qseed)
        tracing = r == 0 and cfg.trace is not None
        obs = tuple(cfg.observables)
        if tracing and "H/N2" not in obs:
            obs += ("H/N2",)
        res = metropolis_run(spec, q, cfg.sweeps, burn_in=cfg.burn_in, observables=obs,
                             seed=cseed, init=cfg.init, rewire=cfg.rewire, alpha=cfg.alpha,
                             keep_samples=tracing)
        if tracing:
            with open(cfg.trace, "wb") as fh:
                np.save(fh, np.asarray(res.samples["H/N2"], dtype="<f8"))
        flagged |= "unconverged" in res.flags
        for name in cfg.observables:
            e = res.estimates[name]
            per_obs[name].append(e.mean)
            out.add(replica=r, beta=spec.beta, observable=name, mean=e.mean, stderr=e.stderr,
                    tau=e.tau, n=e.n_samples, flags=tuple(res.flags), acceptance=res.acceptance,
                    burn_in=res.burn_in)
    if cfg.replicas > 1:
        for name, xs in per_obs.items():
            xs = np.asarray(xs)
            out.add(replica="mean", beta=spec.beta, observable=name, mean=float(xs.mean()),
                    stderr=float(xs.std(ddof=1) / math.sqrt(len(xs))), tau="", n=len(xs), flags=(),
                    acceptance="", burn_in="")
    out.write()
    return EXIT_UNCONVERGED if (cfg.strict and flagged) else EXIT_OK


SWEEP_COLUMNS = ("beta", "F", "F_stderr", "EH_over_N2", "P_S_alpha", "Lstar_frac_mean")


def cmd_sweep_beta(cfg: ExperimentConfig) -> int:
    from .exact import BudgetExceeded, ExactGibbs, check_budget
    from .mcmc import free_energy_ti
    spec = cfg.spec(cfg.seed)
    betas = np.linspace(getattr(cfg, "from"), cfg.to, cfg.steps)
    method = cfg.method
    if method == "auto":
        try:
            check_budget(spec.d, spec.N, cfg.budget)
            method = "exact" if not spec.pulled else "mcmc"
        except BudgetExceeded:
            method = "mcmc"
    s_name = f"S_alpha@{cfg.alpha}"
    out = RowWriter(cfg, _meta(cfg, spec))
    flagged = False
    for r in range(cfg.replicas):
        qseed, cseed = _replica_seeds(cfg.seed, r)
        q = spec.charges(qseed)
        if method == "exact":
            for b in betas:
                g = ExactGibbs(spec.with_beta(float(b)), q, cfg.budget)
                ex = g.expect_many(["H/N2", s_name, "Lstar/N"])
                out.add(beta=float(b), F=g.free_energy, F_stderr=0.0, EH_over_N2=ex["H/N2"],
                        P_S_alpha=ex[s_name], Lstar_frac_mean=ex["Lstar/N"], replica=r, method=method)
        else:
            if betas[0] != 0:
                raise ConfigError("bad value for 'from': the mcmc sweep integrates from beta = 0")
            curve = free_energy_ti(spec, q, betas, cfg.sweeps, seed=cseed, burn_in=cfg.burn_in,
                                   observables=(s_name, "Lstar/N"), init=cfg.init,
                                   rewire=cfg.rewire, alpha=cfg.alpha)
            flagged |= "unconverged" in curve.flags
            for k, b in enumerate(betas):
                out.add(beta=float(b), F=curve.F[k], F_stderr=curve.F_stderr[k],
                        EH_over_N2=curve.dF[k].mean, P_S_alpha=curve.extra[s_name][k].mean,
                        Lstar_frac_mean=curve.extra["Lstar/N"][k].mean, replica=r, method=method)
    out.write()
    _emit_gnuplot(cfg)
    return EXIT_UNCONVERGED if (cfg.strict and flagged) else EXIT_OK


def cmd_max_energy(cfg: ExperimentConfig) -> int:
    from .exact import brute_max_energy
    from .model import energy, occupation
    from .structure import best_d1_strategy, max_energy_formula, optimal_trajectory
    spec = cfg.spec(cfg.seed)
    out = RowWriter(cfg, _meta(cfg, spec))
    for r in range(cfg.replicas):
        qseed, _ = _replica_seeds(cfg.seed, r)
        q = spec.charges(qseed)
        row = {"replica": r, "formula": max_energy_formula(q), "formula_over_N2": max_energy_formula(q) / spec.N ** 2}
        if spec.d >= 2:
            row["optimal_trajectory_H"] = energy(occupation(q, optimal_trajectory(q, spec.d)))
        else:
            row["d1_strategy_H"] = best_d1_strategy(q)[1]
        if cfg.brute:
            row["brute_max"] = brute_max_energy(q, spec.d, budget=cfg.budget)[0]
        out.add(**row)
    out.write()
    return EXIT_OK


def cmd_rate_fn(cfg: ExperimentConfig) -> int:
    from .rate import rate_I
    eps = cfg.eps or tuple(np.round(np.linspace(0.02, 0.48, 24), 6))
    out = RowWriter(cfg, {"d": cfg.d, "version": version_string()})
    for e in eps:
        try:
            v = rate_I(float(e), cfg.d)
        except ValueError as exc:
            raise ConfigError(f"bad value for 'eps': {e} ({exc})") from None
        out.add(eps=float(e), I=v.value, u=v.u, per_return=v.per_return, flags=v.flags)
    out.write()
    _emit_gnuplot(cfg)
    return EXIT_OK


def cmd_pulling(cfg: ExperimentConfig) -> int:
    from .model import ChargeLaw
    from .pulling import beta_c_bounds, log_tilted_partition, step_normalizer
    law = ChargeLaw.from_name(cfg.charges)
    d = cfg.d
    lam_vals = cfg.values["lambda"]
    if len(lam_vals) % d and len(lam_vals) != 1:
        raise ConfigError(f"bad value for 'lambda': length must be a multiple of d={d}")
    lams = [lam_vals * d] if len(lam_vals) == 1 else [lam_vals[i:i + d] for i in range(0, len(lam_vals), d)]
    out = RowWriter(cfg, {"d": d, "charges": law.name, "seed": cfg.seed, "version": version_string()})
    for lam in lams:
        b = beta_c_bounds(lam, law, d)
        row = {"lambda": tuple(lam), "step_normalizer": step_normalizer(lam, d),
               "beta_c_lower": b.lower, "beta_c_upper": b.upper,
               "consistent": b.consistent, "note": b.metadata.get("note", "")}
        if cfg.seed is not None:
            spec = replace(cfg, values={**cfg.values, "pull": tuple(lam)}).spec(cfg.seed)
            q = spec.charges(_replica_seeds(cfg.seed, 0)[0])
            row.update(N=spec.N, beta=spec.beta, logZ=log_tilted_partition(spec, q, cfg.budget))
        out.add(**row)
    out.write()
    return EXIT_OK


def cmd_selftest(cfg: ExperimentConfig) -> int:
    from .acceptance import run_all
    results = run_all(quick=cfg.quick)
    ok = True
    for res in results:
        print(res.line())
        ok &= res.passed
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "enumerate": cmd_enumerate, "mcmc": cmd_mcmc, "sweep-beta": cmd_sweep_beta,
    "max-energy": cmd_max_energy, "rate-fn": cmd_rate_fn, "pulling": cmd_pulling,
    "selftest": cmd_selftest,
}


def run(cfg: ExperimentConfig) -> int:
    from .exact import BudgetExceeded
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except BudgetExceeded as exc:
        print(f"polyq: {cfg.subcommand}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ConfigError as exc:
        print(f"polyq: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="polyq: %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"polyq: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
