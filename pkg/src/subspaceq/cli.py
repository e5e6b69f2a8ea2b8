"""Configuration-driven command line front end.

Subcommands: run (Monte-Carlo learning curves, one metrics CSV per step
size), verify (build the network and report every combination-matrix check),
rate-distortion (steady-state sweep CSV across quantizer grids), and
quantizer-test (Monte-Carlo contract report for one scheme).

Configs are flat INI files; every value is validated against the library
preconditions before anything runs, and failures name the offending
section.key. Exit codes: 0 success, 1 config error, 2 contract or validation
failure, 3 divergence detected.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, analysis, graphs, learning, quantizers
from .learning import DataModel, RunConfig
from .streams import setup_rng

ETA_AUTO = "eta=auto"

# setup-rng labels for the independent one-off draws
_LABEL_VARIANCES = 1
_LABEL_TARGETS = 2

__all__ = ["ConfigError", "Experiment", "load_config", "build_setup", "main"]


class ConfigError(Exception):
    """Invalid or missing configuration value; message names section.key."""


@dataclass(frozen=True)
class Experiment:
    """Fully validated experiment description."""

    n: int
    connectivity: float | None
    topology_file: str | None
    seed: int
    combination: str
    l: int
    p_vectors: int
    tau: float
    su_range: tuple
    sv_range: tuple
    lap_weight: float
    mus: tuple
    gamma: float
    iterations: int
    runs: int
    quantizer_text: str
    b_hp: int
    out_dir: str
    per_agent: bool
    sweep_schemes: tuple = ()
    sweep_values: tuple = ()


_REQUIRED = object()


def _field(cp, section, key, conv, default=_REQUIRED):
    if not cp.has_option(section, key):
        if default is _REQUIRED:
            raise ConfigError(f"{section}.{key}: required")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from exc


def _floats(raw):
    vals = tuple(float(t) for t in raw.split(",") if t.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _range_pair(raw):
    vals = _floats(raw)
    if len(vals) != 2 or vals[0] > vals[1]:
        raise ValueError("need 'low, high' with low <= high")
    return vals


def _bool(raw):
    if raw.lower() in ("1", "true", "yes", "on"):
        return True
    if raw.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def load_config(path, seed_override=None, out_override=None) -> Experiment:
    """Parse and validate an INI experiment file."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    n = _field(cp, "network", "n", int)
    if n < 1:
        raise ConfigError("network.n: must be >= 1")
    topology_file = _field(cp, "network", "topology_file", str, None)
    connectivity = _field(cp, "network", "connectivity", float, None)
    if topology_file is None and connectivity is None:
        raise ConfigError("network.connectivity: required without topology_file")
    if topology_file is not None and connectivity is not None:
        raise ConfigError("network.connectivity: set either this or topology_file")
    if connectivity is not None and not 0.0 < connectivity <= 1.0:
        raise ConfigError("network.connectivity: must be in (0, 1]")
    seed = _field(cp, "network", "seed", int)
    if seed_override is not None:
        seed = seed_override
    combination = _field(cp, "network", "combination", str, "subspace-lsq")
    if combination not in ("subspace-lsq", "consensus-metropolis"):
        raise ConfigError("network.combination: unknown mode "
                          f"{combination!r}")

    l = _field(cp, "model", "l", int)
    if l < 1:
        raise ConfigError("model.l: must be >= 1")
    p_vectors = _field(cp, "model", "p_vectors", int, 2)
    if combination == "subspace-lsq" and n > 1 and not 1 <= p_vectors < n:
        raise ConfigError("model.p_vectors: must be in [1, n)")
    tau = _field(cp, "model", "tau", float, 3.0)
    if tau < 0:
        raise ConfigError("model.tau: must be >= 0")
    su_range = _field(cp, "model", "sigma_u_sq", _range_pair)
    if su_range[0] <= 0:
        raise ConfigError("model.sigma_u_sq: lower bound must be > 0")
    sv_range = _field(cp, "model", "sigma_v_sq", _range_pair)
    if sv_range[0] < 0:
        raise ConfigError("model.sigma_v_sq: must be >= 0")
    lap_weight = _field(cp, "model", "laplacian_weight", float, 0.1)
    if lap_weight <= 0:
        raise ConfigError("model.laplacian_weight: must be > 0")

    mus = _field(cp, "algorithm", "mu", _floats)
    if any(m <= 0 for m in mus):
        raise ConfigError("algorithm.mu: every value must be > 0")
    gamma = _field(cp, "algorithm", "gamma", float)
    if not 0.0 < gamma <= 1.0:
        raise ConfigError("algorithm.gamma: must be in (0, 1]")
    iterations = _field(cp, "algorithm", "iterations", int)
    if iterations < 1:
        raise ConfigError("algorithm.iterations: must be >= 1")
    runs = _field(cp, "algorithm", "runs", int, 1)
    if runs < 1:
        raise ConfigError("algorithm.runs: must be >= 1")
    quantizer_text = _field(cp, "algorithm", "quantizer", str)
    b_hp = _field(cp, "algorithm", "b_hp", int, 32)
    if b_hp < 1:
        raise ConfigError("algorithm.b_hp: must be >= 1")
    try:
        resolve_quantizer(quantizer_text, mus[0], l, b_hp)
    except quantizers.SpecError as exc:
        raise ConfigError(f"algorithm.quantizer: {exc}") from exc

    out_dir = _field(cp, "output", "directory", str, "out")
    if out_override is not None:
        out_dir = out_override
    per_agent = _field(cp, "output", "per_agent", _bool, False)

    sweep_schemes = ()
    sweep_values = ()
    if cp.has_section("sweep"):
        sweep_schemes = tuple(
            t.strip() for t in cp.get("sweep", "schemes").split(",") if t.strip()
        ) if cp.has_option("sweep", "schemes") else ()
        if cp.has_option("sweep", "values"):
            sweep_values = _field(cp, "sweep", "values", _floats)
        elif cp.has_option("sweep", "log_range"):
            triple = _field(cp, "sweep", "log_range", _floats)
            if len(triple) != 3:
                raise ConfigError("sweep.log_range: need 'lo, hi, count'")
            lo, hi, cnt = triple
            if lo <= 0 or hi <= lo or cnt < 2:
                raise ConfigError("sweep.log_range: need 0 < lo < hi, count >= 2")
            sweep_values = tuple(np.geomspace(lo, hi, int(cnt)))
        if sweep_schemes and not sweep_values:
            raise ConfigError("sweep.values: required when schemes are set")
        if any(v <= 0 for v in sweep_values):
            raise ConfigError("sweep.values: step-size grid must be > 0")

    return Experiment(
        n=n, connectivity=connectivity, topology_file=topology_file, seed=seed,
        combination=combination, l=l, p_vectors=p_vectors, tau=tau,
        su_range=su_range, sv_range=sv_range, lap_weight=lap_weight,
        mus=mus, gamma=gamma, iterations=iterations, runs=runs,
        quantizer_text=quantizer_text, b_hp=b_hp,
        out_dir=out_dir, per_agent=per_agent,
        sweep_schemes=sweep_schemes, sweep_values=sweep_values,
    )


def resolve_quantizer(text, mu, l, b_hp):
    """Parse a selection string, filling eta=auto with mu / sqrt(2 l)."""
    if ETA_AUTO in text:
        eta = mu / math.sqrt(2.0 * l)
        text = text.replace(ETA_AUTO, f"eta={eta:.17g}")
    return quantizers.parse_spec(text, l, b_hp)


def build_setup(exp: Experiment):
    """Topology, basis, combination matrix, and per-agent data models.

    A single-agent network has no proper subspace (the basis type requires
    P < M), so n = 1 returns basis and combination as None; cmd_run then uses
    the scalar recursion with A = 1, which is plain stochastic gradient
    descent.
    """
    if exp.n == 1:
        top = basis = comb = None
    elif exp.topology_file is not None:
        top = graphs.load_topology(exp.topology_file, exp.n)
    else:
        top = graphs.build_topology(exp.n, exp.connectivity, seed=exp.seed)

    if exp.n == 1:
        pass
    elif exp.combination == "consensus-metropolis":
        basis = graphs.subspace_consensus(exp.n, exp.l)
        comb = graphs.build_combination(top, basis, mode=exp.combination)
    else:
        basis = graphs.subspace_smooth(top, exp.p_vectors, exp.l,
                                       weight=exp.lap_weight)
        comb = graphs.build_combination(top, basis, mode=exp.combination)

    var_rng = setup_rng(exp.seed, _LABEL_VARIANCES)
    su = var_rng.uniform(*exp.su_range, exp.n)
    sv = var_rng.uniform(*exp.sv_range, exp.n)
    target_rng = setup_rng(exp.seed, _LABEL_TARGETS)
    raw = target_rng.normal(0.4, 1.0, exp.n * exp.l)
    if top is None:
        w_star = raw.reshape(exp.n, exp.l)
    else:
        lap = graphs.laplacian(top, exp.lap_weight)
        w_star = graphs.smooth_signal(lap, raw=raw, tau=exp.tau, l=exp.l)
        w_star = w_star.reshape(exp.n, exp.l)
    models = [DataModel(su[k], sv[k], w_star[k]) for k in range(exp.n)]
    return top, basis, comb, models


def _run_job(args):
    cfg, models, basis, comb = args
    if basis is None:
        return learning.run_diffusion(cfg, models, np.ones((1, 1)))
    return learning.run(cfg, models, basis, comb)


def _map_jobs(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _mu_tag(mu):
    return f"{mu:g}".replace(".", "p").replace("-", "m")


def cmd_run(exp: Experiment, workers=1) -> int:
    top, basis, comb, models = build_setup(exp)
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    jobs = []
    for mu in exp.mus:
        spec = resolve_quantizer(exp.quantizer_text, mu, exp.l, exp.b_hp)
        cfg = RunConfig(mu=mu, gamma=exp.gamma, iterations=exp.iterations,
                        runs=exp.runs, quantizer=spec, seed=exp.seed)
        jobs.append((cfg, models, basis, comb))

    try:
        results = _map_jobs(_run_job, jobs, workers)
    except learning.NonFinite as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3

    files = []
    for mu, res in zip(exp.mus, results):
        path = out / f"metrics_mu{_mu_tag(mu)}.csv"
        learning.save_metrics_csv(path, res, version=__version__, seed=exp.seed,
                                  per_agent=exp.per_agent)
        files.append(path.name)
        tail = learning.steady_mean(res.msd_db) \
            if res.msd.shape[0] > learning.STEADY_WINDOW else res.msd_db[-1]
        print(f"mu={mu:g}: wrote {path} (msd {tail:.2f} dB, "
              f"rate {res.rate[-1]:.2f} bits/component)")

    manifest = out / "manifest.txt"
    with open(manifest, "w") as fh:
        fh.write(f"# subspaceq {__version__}\n")
        fh.write(f"seed = {exp.seed}\n")
        for name in ("n", "connectivity", "topology_file", "combination", "l",
                     "p_vectors", "tau", "su_range", "sv_range", "lap_weight",
                     "gamma", "iterations", "runs", "quantizer_text", "b_hp",
                     "per_agent"):
            fh.write(f"{name} = {getattr(exp, name)}\n")
        fh.write(f"mus = {', '.join(f'{m:g}' for m in exp.mus)}\n")
        for mu in exp.mus:
            spec = resolve_quantizer(exp.quantizer_text, mu, exp.l, exp.b_hp)
            fh.write(f"quantizer[mu={mu:g}] = {quantizers.spec_string(spec)}\n")
        fh.write("sigma_u_sq = " + ", ".join(f"{m.sigma_u_sq:.17g}" for m in models) + "\n")
        fh.write("sigma_v_sq = " + ", ".join(f"{m.sigma_v_sq:.17g}" for m in models) + "\n")
        fh.write("files = " + ", ".join(files) + "\n")
    print(f"manifest: {manifest}")
    return 0


def cmd_verify(exp: Experiment) -> int:
    try:
        top, basis, comb, models = build_setup(exp)
    except (graphs.NotConnected, graphs.InvalidEdgeList,
            graphs.InfeasibleConstraints, graphs.SpectralViolation) as exc:
        print(f"FAIL construction: {type(exc).__name__}: {exc}")
        return 2
    if basis is None:
        print("PASS single-agent network: combination matrix is the scalar 1")
        return 0

    checks = graphs.validate_combination(comb.a, top, basis)
    ok = True
    res = checks["residual"]
    line = "PASS" if res <= graphs.TOL_CONSTRAINT else "FAIL"
    ok &= res <= graphs.TOL_CONSTRAINT
    print(f"{line} subspace constraints: max residual {res:.3e}")
    rho = checks["rho"]
    line = "PASS" if rho < 1.0 else "FAIL"
    ok &= rho < 1.0
    print(f"{line} complement contraction: rho {rho:.6f}")

    pattern_ok = True
    nl = exp.l
    for k in range(exp.n):
        for j in range(exp.n):
            if j not in top.neighborhoods[k]:
                blk = comb.a[k * nl:(k + 1) * nl, j * nl:(j + 1) * nl]
                pattern_ok &= bool(np.all(blk == 0.0))
    ok &= pattern_ok
    detail = "off-neighborhood blocks all zero" if pattern_ok else "nonzero block found"
    print(f"{'PASS' if pattern_ok else 'FAIL'} sparsity pattern: {detail}")

    rep = analysis.spectral_report(comb, basis)
    print(f"spectral report: rho_j={rep.rho_j:.6f} "
          f"rho_i_minus_j={rep.rho_i_minus_j:.6f} "
          f"v1={rep.v1:.6f} v2={rep.v2:.6f} epsilon={rep.epsilon_used:g}")
    spec = resolve_quantizer(exp.quantizer_text, exp.mus[0], exp.l, exp.b_hp)
    beta_sq = quantizers.noise_budget(spec).beta_sq
    bound = analysis.gamma_bound(rep, beta_sq)
    print(f"gamma_bound: {bound:.6g} (beta_sq={beta_sq:.6g}, "
          f"configured gamma={exp.gamma:g})")
    if exp.gamma > bound:
        print("note: configured gamma exceeds the sufficient bound")
    return 0 if ok else 2


def _sweep_grid(exp: Experiment):
    grids = []
    for scheme in exp.sweep_schemes:
        points = []
        for v in exp.sweep_values:
            if scheme == "uniform":
                spec = quantizers.uniform(v, exp.l, exp.b_hp)
            elif scheme.startswith("anq:"):
                base = quantizers.parse_spec(
                    scheme + f",eta={v / 2.0:.17g}", exp.l, exp.b_hp)
                spec = base
            elif scheme == "identity":
                spec = quantizers.identity(exp.l, exp.b_hp)
            else:
                raise ConfigError(
                    f"sweep.schemes: cannot sweep scheme {scheme!r}")
            points.append((v, spec))
        grids.append((scheme, points))
    return grids


def _sweep_job(args):
    template, models, basis, comb, point = args
    return analysis.rate_distortion_sweep(template, models, basis, comb, [point])[0]


def cmd_rate_distortion(exp: Experiment, workers=1) -> int:
    if not exp.sweep_schemes or not exp.sweep_values:
        raise ConfigError("sweep.schemes: required for rate-distortion")
    if exp.n == 1:
        raise ConfigError("network.n: rate-distortion sweeps need n >= 2")
    top, basis, comb, models = build_setup(exp)
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    mu = exp.mus[0]
    template = RunConfig(mu=mu, gamma=exp.gamma, iterations=exp.iterations,
                         runs=exp.runs, quantizer=quantizers.identity(exp.l),
                         seed=exp.seed, on_divergence="flag")
    grids = _sweep_grid(exp)
    jobs = [(template, models, basis, comb, point)
            for _, points in grids for point in points]
    flat = _map_jobs(_sweep_job, jobs, workers)

    curves = {}
    i = 0
    for scheme, points in grids:
        curves[scheme] = flat[i:i + len(points)]
        i += len(points)

    path = out / "rate_distortion.csv"
    with open(path, "w") as fh:
        fh.write(f"# subspaceq {__version__} seed={exp.seed}\n")
        fh.write("scheme,param_value,rate_bits,msd,msd_db,diverged_flag\n")
        for scheme, pts in curves.items():
            for p in pts:
                fh.write(f"{scheme},{p.param_value:.10g},{p.rate_bits:.10g},"
                         f"{p.msd:.10g},{p.msd_db:.10g},{int(p.diverged)}\n")
    print(f"wrote {path} ({sum(len(p) for p in curves.values())} rows)")

    if "uniform" in curves and len(curves) > 1:
        base = [(p.rate_bits, p.msd_db) for p in curves["uniform"]
                if not p.diverged]
        base.sort()
        rates = [r for r, _ in base]
        msds = [m for _, m in base]
        for scheme, pts in curves.items():
            if scheme == "uniform":
                continue
            above = total = 0
            for p in pts:
                if p.diverged or not rates or not rates[0] <= p.rate_bits <= rates[-1]:
                    continue
                ref = float(np.interp(p.rate_bits, rates, msds))
                total += 1
                above += p.msd_db >= ref - 0.5
            if total:
                print(f"dominance: {scheme} at or above the uniform curve at "
                      f"{above}/{total} matched rates")
    return 0


def _canned_inputs(dim, rng):
    base = [np.zeros(dim), np.linspace(-1.0, 2.0, dim),
            rng.normal(0.0, 1.0, dim)]
    return base + [100.0 * base[1], 0.01 * base[1]]


def cmd_quantizer_test(spec_text, trials, dim, b_hp, seed) -> int:
    try:
        spec = quantizers.parse_spec(spec_text, dim, b_hp)
    except quantizers.SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    budget = quantizers.noise_budget(spec)
    rng = setup_rng(seed, 3)
    failures = 0
    print(f"scheme {quantizers.spec_string(spec)}  dim={dim}  trials={trials}")
    print(f"declared budget: beta_sq={budget.beta_sq:.6g} "
          f"sigma_sq={budget.sigma_sq:.6g}")
    for idx, x in enumerate(_canned_inputs(dim, rng)):
        mom = quantizers.empirical_moments(spec, x, rng, trials)
        bias_ok = bool(np.all(np.abs(mom["mean_err"]) <= 4 * mom["se_mean"] + 1e-12))
        cap = budget.beta_sq * float(x @ x) + budget.sigma_sq
        mse_ok = mom["mse"] <= cap + 4 * mom["se_mse"] + 1e-12
        failures += (not bias_ok) + (not mse_ok)
        print(f"input {idx}: |x|={np.linalg.norm(x):.4g} "
              f"mse={mom['mse']:.6g} cap={cap:.6g} "
              f"bias {'PASS' if bias_ok else 'FAIL'} "
              f"mse {'PASS' if mse_ok else 'FAIL'}")
    if failures:
        print(f"{failures} contract violations", file=sys.stderr)
        return 2
    print("all contract checks passed")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="subspaceq",
        description="decentralized subspace-constrained learning simulator")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("run", "verify", "rate-distortion"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)

    qt = sub.add_parser("quantizer-test")
    qt.add_argument("spec")
    qt.add_argument("--trials", type=int, default=100_000)
    qt.add_argument("--dim", type=int, default=5)
    qt.add_argument("--b-hp", type=int, default=32)
    qt.add_argument("--seed", type=int, default=0)

    args = ap.parse_args(argv)

    if args.command == "quantizer-test":
        return cmd_quantizer_test(args.spec, args.trials, args.dim,
                                  args.b_hp, args.seed)

    try:
        exp = load_config(args.config, seed_override=args.seed,
                          out_override=args.out)
        if args.command == "run":
            return cmd_run(exp, workers=args.workers)
        if args.command == "verify":
            return cmd_verify(exp)
        return cmd_rate_distortion(exp, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (graphs.NotConnected, graphs.InvalidEdgeList,
            graphs.InfeasibleConstraints, graphs.SpectralViolation,
            analysis.DefectiveMatrix) as exc:
        print(f"validation failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except learning.NonFinite as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
