"""Command-line experiment runner.

    aklab run CONFIG.json [--seed N] [--out DIR] [--threads N] [--check]

``CONFIG.json`` is an experiment configuration or a ``manifest.json`` written
by an earlier run.  Every run writes ``manifest.json`` (artifact version and
the fully resolved configuration), ``checks.csv``, ``summary.txt`` and the
experiment's CSV/SVG outputs into the output directory, which defaults to
``$AKLAB_OUT`` or ``./aklab-out``.

Exit status: 0 when every check passes, 1 when a check fails, 2 for an
invalid configuration, 3 for filesystem errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import DEFAULT_SEED, __version__
from . import ayed_kuo, ldp, lsde, nearmart
from .ayed_kuo import Factor, IntegrandSpec
from .functions import DeterministicFn
from .paths import brownian_matrix, make_grid
from .report import svg_plot, write_csv

OUT_ENV = "AKLAB_OUT"
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

_CONSTANT_MODEL = {
    "sigma": {"kind": "constant", "coefficients": [1.0]},
    "gamma": {"kind": "constant", "coefficients": [0.0]},
    "f": {"kind": "constant", "coefficients": [0.0]},
    "xi": {"kind": "constant", "kappa": 1.0},
    "epsilon": 1.0,
}

_SMOOTH_MODEL = {
    "sigma": {"kind": "piecewise-linear", "coefficients": [[0.0, 0.5], [1.0, 1.0]]},
    "gamma": {"kind": "constant", "coefficients": [1.0]},
    "f": {"kind": "tanh", "coefficients": [1.0, 1.0, 0.0, 0.0]},
    "xi": {"kind": "constant", "kappa": 1.0},
    "epsilon": 1.0,
}

_PENALTY = {"mu0": 10.0, "factor": 10.0, "stages": 6, "max_iter": 5000}

DEFAULTS: dict[str, dict[str, Any]] = {
    "integral-refinement": {
        "integrand": "terminal-value",
        "levels": [2**k for k in range(6, 15)],
        "n_paths": 100,
        "oracle": None,
        "t_end": 1.0,
        "max_final_error": None,
    },
    "solve": {
        "model": _SMOOTH_MODEL,
        "n": 16,
        "n_paths": 10,
        "partition_n": None,
        "agreement_tol": None,
        "identity_tol": 1e-10,
    },
    "nearmart": {
        "fixture": "ak-future",
        "n": 64,
        "n_paths": 100_000,
        "s": 0.25,
        "t": 0.75,
        "basis": list(nearmart.DEFAULT_BASIS),
        "feature_gamma": {"kind": "polynomial", "coefficients": [0.0, 1.0]},
        "transform": None,
        "stop": None,
        "xi_low": 0.5,
        "xi_high": 1.5,
    },
    "optional-stopping": {
        "fixture": "gbm-xi",
        "n": 256,
        "n_paths": 100_000,
        "tau": {"kind": "hitting", "level": 1.0, "cap": 1.0},
        "sigma_stop": None,
        "mode": "martingale",
        "nonnegative": True,
        "xi_low": 0.5,
        "xi_high": 1.5,
    },
    "ldp-rate": {
        "model": _CONSTANT_MODEL,
        "n": 64,
        "y": 2.0,
        "target": None,
        "rho": None,
        "eps": 0.0,
        "rate_levels": None,
        "gradient_points": 10,
        "gradient_tol": 1e-5,
        "expected_J": None,
        "J_tol": 1e-4,
        "penalty": _PENALTY,
    },
    "ldp-mc": {
        "model": _CONSTANT_MODEL,
        "n": 32,
        "n_paths": 100_000,
        "event": {"kind": "endpoint", "y": 2.0},
        "eps_list": [0.05, 0.02, 0.01],
        "tilt": False,
        "relative_tol": None,
        "slope_tol": None,
        "penalty": _PENALTY,
    },
    "exp-equiv": {
        "model": {**_SMOOTH_MODEL, "xi": {"kind": "eps-exp", "kappa": 1.0}},
        "n": 32,
        "n_paths": 10_000,
        "delta": 0.1,
        "eps_list": [0.3, 0.2, 0.1, 0.05],
        "moment_threshold": None,
    },
}


class ConfigError(ValueError):
    pass


# configuration --------------------------------------------------------------------


def load_schema() -> dict:
    return json.loads(resources.files("aklab").joinpath("config.schema.json").read_text(encoding="utf-8"))


def _validate(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ConfigError("invalid configuration\n  " + "\n  ".join(lines))


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Schema-validate, reject fields foreign to the experiment and fill defaults."""
    if "config" in raw and "version" in raw:
        raw = raw["config"]
    _validate(raw)
    kind = raw["experiment"]
    allowed = set(DEFAULTS[kind]) | {"experiment", "seed"}
    foreign = sorted(set(raw) - allowed)
    if foreign:
        raise ConfigError(f"invalid configuration\n  fields not used by {kind}: {', '.join(foreign)}")
    cfg = {"experiment": kind, "seed": DEFAULT_SEED}
    cfg.update(copy.deepcopy(DEFAULTS[kind]))
    for key, value in raw.items():
        if key in ("model", "penalty") and isinstance(value, dict):
            merged = dict(cfg[key])
            merged.update(copy.deepcopy(value))
            cfg[key] = merged
        else:
            cfg[key] = copy.deepcopy(value)
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(cfg)
    try:
        _semantic_checks(cfg)
    except ValueError as exc:
        raise ConfigError(f"invalid configuration\n  {exc}") from exc
    return cfg


def _semantic_checks(cfg: dict) -> None:
    if "model" in cfg:
        model_from(cfg)
    kind = cfg["experiment"]
    if kind == "nearmart" and not cfg["s"] < cfg["t"]:
        raise ValueError("s: must be smaller than t")
    if kind == "ldp-rate":
        if (cfg["y"] is None) == (cfg["target"] is None):
            raise ValueError("y/target: give exactly one of an endpoint or a ball constraint")
        if cfg["target"] is not None and cfg["rho"] is None:
            raise ValueError("rho: required with target")


def model_from(cfg: dict) -> lsde.ModelSpec:
    return lsde.ModelSpec.from_dict(cfg["model"])


def integrand_from(value: Any) -> IntegrandSpec:
    if isinstance(value, str):
        return {"terminal-value": ayed_kuo.terminal_value, "future-tail": ayed_kuo.future_tail, "ito-w": ayed_kuo.itos_w}[value]()
    return IntegrandSpec.from_dict(value)


# run bookkeeping -----------------------------------------------------------------


@dataclass
class Run:
    cfg: dict
    out: Path
    threads: int = 1
    checks: list[dict] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def check(self, name: str, value: Any, threshold: Any, passed: bool) -> None:
        self.checks.append({"check": name, "value": value, "threshold": threshold, "pass": bool(passed)})

    def csv(self, name: str, rows: list[dict], columns: list[str]) -> None:
        write_csv(self.out / name, rows, columns)

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)


def _exp_integral_refinement(run: Run) -> None:
    cfg = run.cfg
    spec = integrand_from(cfg["integrand"])
    oracle = cfg["oracle"]
    if oracle is None and isinstance(cfg["integrand"], str):
        oracle = {"terminal-value": "w1-squared-minus-one", "future-tail": "future-tail", "ito-w": "ito-w"}[cfg["integrand"]]
        if oracle == "w1-squared-minus-one" and cfg["t_end"] != 1.0:
            oracle = None
    rep = ayed_kuo.refinement_study(spec, cfg["seed"], cfg["levels"], cfg["n_paths"], cfg["t_end"], oracle)
    run.csv("refinement.csv", rep.rows(), ["path_index", "n", "mesh", "value", "error"])
    summary = []
    for j, n in enumerate(rep.levels):
        summary.append(
            {
                "n": int(n),
                "mesh": float(rep.mesh[j]),
                "median_abs_difference": None if j == 0 else float(rep.median_abs_difference[j - 1]),
                "median_abs_error": None if rep.median_abs_error is None else float(rep.median_abs_error[j]),
            }
        )
    run.csv("summary.csv", summary, ["n", "mesh", "median_abs_difference", "median_abs_error"])
    series = [("median |S_n - S_2n|", np.log2(rep.levels[1:]), np.log10(rep.median_abs_difference))]
    if rep.median_abs_error is not None:
        series.append(("median |S_n - oracle|", np.log2(rep.levels), np.log10(rep.median_abs_error)))
        dec = bool(np.all(np.diff(rep.median_abs_error) < 0))
        run.check("median error decreasing in n", int(dec), 1, dec)
        if cfg["max_final_error"] is not None:
            final = float(rep.median_abs_error[-1])
            run.check("median error at finest level", final, cfg["max_final_error"], final < cfg["max_final_error"])
    svg_plot(run.out / "refinement.svg", series, "Riemann-sum refinement", "log2 n", "log10 median", ())
    run.notes.append(f"observed order of successive differences: {rep.order:.4f}")


def _solve_one(model: lsde.ModelSpec, path, xi: float | None, partition) -> lsde.BraidTrace:
    return lsde.braid_solve(model, path, 1.0, xi, partition)


def _exp_solve(run: Run) -> None:
    cfg = run.cfg
    model = model_from(cfg)
    grid = make_grid(cfg["n"])
    P = cfg["n_paths"]
    seed = cfg["seed"]
    w = brownian_matrix(grid, seed, P)
    xi = lsde.realize_xi(model, seed, 0, P) if model.xi.independent else None
    z_closed = lsde.skorokhod_closed_form(model, w, grid, xi)
    part = make_grid(cfg["partition_n"]) if cfg["partition_n"] else grid
    pidx = grid.coarsen_index(part)
    paths = [nearmart.Ensemble(z_closed, grid, w, seed).path(p) for p in range(P)]
    with ThreadPoolExecutor(max_workers=max(1, run.threads)) as pool:
        traces = list(pool.map(lambda p: _solve_one(model, paths[p], None if xi is None else float(xi[p]), part), range(P)))
    residual = None
    if xi is not None:
        residual = lsde.step_residuals(model, w, grid, xi, range(grid.n), 1, 2.0, z_closed, range(grid.n + 1))
    rows, summary = [], []
    worst_identity, worst_gap = 0.0, 0.0
    start_ok, positive = True, True
    for p, tr in enumerate(traces):
        braid = dict(zip(pidx.tolist(), tr.X))
        for k, t in enumerate(grid.nodes):
            zc = float(z_closed[p, k])
            rows.append(
                {
                    "path_index": p,
                    "t": float(t),
                    "Z_closed": zc,
                    "Z_braid": braid.get(k),
                    "V": zc * zc,
                    "residual": None if residual is None or k == 0 else float(residual[p, k - 1]),
                }
            )
        gap = float(np.max(np.abs(tr.X - z_closed[p, pidx]) / np.abs(z_closed[p, pidx])))
        worst_identity = max(worst_identity, tr.identity_error)
        worst_gap = max(worst_gap, gap)
        start_ok &= bool(tr.X[0] == z_closed[p, 0])
        if tr.X[0] > 0:
            positive &= bool(np.all(tr.X > 0) and np.all(z_closed[p] > 0))
        summary.append({"path_index": p, "identity_error": tr.identity_error, "sup_rel_discrepancy": gap, "final_closed": float(z_closed[p, -1]), "final_braid": tr.final})
    run.csv("trajectories.csv", rows, ["path_index", "t", "Z_closed", "Z_braid", "V", "residual"])
    run.csv("paths_summary.csv", summary, ["path_index", "identity_error", "sup_rel_discrepancy", "final_closed", "final_braid"])
    run.check("braiding product identity (max rel)", worst_identity, cfg["identity_tol"], worst_identity <= cfg["identity_tol"])
    run.check("both solvers start at xi", int(start_ok), 1, start_ok)
    run.check("positivity for positive xi", int(positive), 1, positive)
    if cfg["agreement_tol"] is not None:
        run.check("braid vs closed form (sup rel)", worst_gap, cfg["agreement_tol"], worst_gap < cfg["agreement_tol"])
    run.notes.append(f"max sup-node relative discrepancy braid vs closed form: {worst_gap:.6e}")


def _fixture(cfg: dict) -> nearmart.Ensemble:
    return nearmart.make_fixture(cfg["fixture"], make_grid(cfg["n"]), cfg["seed"], cfg["n_paths"], 0, cfg["xi_low"], cfg["xi_high"])


def _exp_nearmart(run: Run) -> None:
    cfg = run.cfg
    N = _fixture(cfg)
    if cfg["transform"] is not None:
        N = nearmart.nm_transform(Factor.from_dict(cfg["transform"]), N)
    if cfg["stop"] is not None:
        tau = nearmart.StoppingTime.from_dict(cfg["stop"])
        N = nearmart.stopped(N, nearmart.stopping_indices(tau, N.w, N.grid))
    rep = nearmart.conditional_mean_test(N, cfg["s"], cfg["t"], cfg["basis"], DeterministicFn.from_dict(cfg["feature_gamma"]))
    run.csv("regression.csv", rep.rows(), ["feature", "coefficient", "se", "z", "pass"])
    for r in rep.rows():
        run.check(f"|coef {r['feature']}| <= 3 se", r["coefficient"], 3.0 * r["se"], r["pass"])
    run.notes.append(rep.summary())


def _exp_optional_stopping(run: Run) -> None:
    cfg = run.cfg
    N = _fixture(cfg)
    tau = nearmart.StoppingTime.from_dict(cfg["tau"])
    sig = nearmart.StoppingTime.from_dict(cfg["sigma_stop"]) if cfg["sigma_stop"] else None
    rep = nearmart.optional_stopping_check(N, tau, sig, cfg["mode"], cfg["nonnegative"])
    row = rep.rows()[0]
    if tau.kind == "hitting":
        k = nearmart.stopping_indices(tau, N.w, N.grid)
        row["p_stop_before_cap"] = float(np.mean(k < N.grid.index_of(tau.cap)))
        row["p_stop_oracle"] = nearmart.prob_hit_discrete(tau.level, N.grid.mesh, tau.cap)
    cols = ["mode", "difference", "se", "effect", "n", "mean_tau", "pass", "p_stop_before_cap", "p_stop_oracle"]
    run.csv("stopping.csv", [row], cols)
    if rep.regression is not None:
        run.csv("regression.csv", rep.regression.rows(), ["feature", "coefficient", "se", "z", "pass"])
        for r in rep.regression.rows():
            run.check(f"|coef {r['feature']}| <= 3 se", r["coefficient"], 3.0 * r["se"], r["pass"])
    elif cfg["mode"] == "submartingale":
        run.check("E[N_tau] - E[N_0] >= -3 se", rep.difference, -3.0 * rep.se, rep.passed)
    else:
        run.check("|E[N_tau] - E[N_0]| <= 3 se", abs(rep.difference), 3.0 * rep.se, rep.passed)


def _rate_problem(cfg: dict, model: lsde.ModelSpec, grid, y: float | None = None) -> ldp.RateProblem:
    pen = cfg["penalty"]
    target = DeterministicFn.from_dict(cfg["target"]) if cfg.get("target") else None
    return ldp.RateProblem(
        model, grid, y=y if y is not None else cfg.get("y"), target=target, rho=cfg.get("rho"), eps=cfg.get("eps", 0.0),
        mu0=pen["mu0"], mu_factor=pen["factor"], stages=pen["stages"], max_iter=pen["max_iter"],
    )


def _exp_ldp_rate(run: Run) -> None:
    cfg = run.cfg
    model = model_from(cfg)
    grid = make_grid(cfg["n"])
    problem = _rate_problem(cfg, model, grid)
    res = ldp.rate_endpoint(problem)
    theta = ldp.theta_trajectory(res.path, model, problem.eps)
    run.csv("argmin.csv", [{"t": float(t), "h": float(h), "theta": float(th)} for t, h, th in zip(grid.nodes, res.path.values, theta)], ["t", "h", "theta"])
    run.csv("stages.csv", res.stages, ["stage", "mu", "value", "iterations", "success"])
    rows = [{"n": grid.n, "J": res.J, "violation": res.violation, "converged": res.converged}]
    run.check("constraint met", res.violation, 1e-6, res.converged)
    if cfg["gradient_points"]:
        errs = ldp.gradient_check(problem, cfg["gradient_points"], cfg["seed"])
        run.csv("gradient_check.csv", [{"point": i, "relative_error": float(e)} for i, e in enumerate(errs)], ["point", "relative_error"])
        run.check("gradient vs central differences", float(errs.max()), cfg["gradient_tol"], float(errs.max()) < cfg["gradient_tol"])
    if cfg["expected_J"] is not None:
        err = abs(res.J - cfg["expected_J"])
        run.check("|J - expected|", err, cfg["J_tol"], err <= cfg["J_tol"])
    if cfg["rate_levels"]:
        ref = ldp.rate_refinement(problem, cfg["rate_levels"])
        rows = [dict(r, converged=None) for r in ref.rows()]
        run.check("J non-increasing under refinement", int(ref.non_increasing()), 1, ref.non_increasing())
        run.notes.append(f"Richardson extrapolated J: {ref.extrapolated:.12g} (observed order {ref.order:.4f})")
    run.csv("rate.csv", rows, ["n", "J", "violation", "converged"])
    run.notes.append(f"J = {res.J:.12g}, theta(h)(1) = {res.theta_end:.12g}")


def _exp_ldp_mc(run: Run) -> None:
    cfg = run.cfg
    model = model_from(cfg)
    grid = make_grid(cfg["n"])
    ev = cfg["event"]
    event = ldp.TailEvent(
        ev["kind"], ev.get("y", 2.0), ev.get("delta", 0.1),
        DeterministicFn.from_dict(ev["reference"]) if ev.get("reference") else None,
    )
    J = None
    tilt = None
    if event.kind == "endpoint":
        res = ldp.rate_endpoint(_rate_problem({**cfg, "eps": 0.0}, model, grid, y=event.y))
        J = res.J
        tilt = res.path if cfg["tilt"] else None
    elif cfg["tilt"]:
        raise ConfigError("invalid configuration\n  tilt: only endpoint events have a tilting path")
    table = ldp.mc_tail(model, event, cfg["eps_list"], cfg["n_paths"], cfg["seed"], grid, tilt)
    rows = table.dicts()
    sig, f = model.sigma, model.f
    oracle_ok = event.kind == "endpoint" and sig.kind == "constant" and f.kind == "constant"
    for r in rows:
        r["oracle_eps_log_p"] = (
            r["eps"] * ldp.gaussian_tail_log_prob(event.y, r["eps"], ldp.kappa_of(model), sig.params[0], f.params[0]) if oracle_ok else None
        )
        r["minus_J"] = None if J is None else -J
    cols = ["eps", "n", "hits", "p_hat", "ci_low", "ci_high", "eps_log_p", "upper_bound", "method", "oracle_eps_log_p", "minus_J"]
    run.csv("tail.csv", rows, cols)
    series = [("eps log p", [r["eps"] for r in rows], [r["eps_log_p"] for r in rows])]
    if oracle_ok:
        series.append(("exact", [r["eps"] for r in rows], [r["oracle_eps_log_p"] for r in rows]))
    svg_plot(run.out / "tail.svg", series, "Monte Carlo tail exponents", "eps", "eps log p", [("-J", -J)] if J is not None else [])
    if J is not None and cfg["relative_tol"] is not None:
        for r in rows:
            if r["upper_bound"]:
                run.check(f"eps={r['eps']:g}: eps log p within rel tol of -J (no hits)", r["eps_log_p"], cfg["relative_tol"], False)
            else:
                rel = abs(r["eps_log_p"] + J) / J
                run.check(f"eps={r['eps']:g}: |eps log p + J| / J", rel, cfg["relative_tol"], rel < cfg["relative_tol"])
    if J is not None and cfg["slope_tol"] is not None:
        slope = table.slope()
        rel = abs(slope + J) / J if np.isfinite(slope) else float("inf")
        run.check("|slope + J| / J", rel, cfg["slope_tol"], rel < cfg["slope_tol"])
        run.notes.append(f"slope of log p against 1/eps: {slope:.6g}")
    if J is not None:
        run.notes.append(f"J = {J:.12g}")


def _exp_exp_equiv(run: Run) -> None:
    cfg = run.cfg
    model = model_from(cfg)
    rep = ldp.exp_equiv_check(model, cfg["delta"], cfg["eps_list"], cfg["n_paths"], cfg["seed"], make_grid(cfg["n"]))
    rows = rep.dicts()
    run.csv("exp_equiv.csv", rows, ["eps", "n", "exceedances", "eps_log_p", "upper_bound", "eps_log_moment"])
    svg_plot(
        run.out / "exp_equiv.svg",
        [("eps log E[(xi-kappa)^2]", [r["eps"] for r in rows], [r["eps_log_moment"] for r in rows]),
         ("eps log P (or bound)", [r["eps"] for r in rows], [r["eps_log_p"] for r in rows])],
        "Initial-condition closeness", "eps", "exponent",
    )
    run.check("no exceedance at any eps", sum(r["exceedances"] for r in rows), 0, rep.no_exceedance)
    run.check("moment exponent strictly decreasing", int(rep.strictly_decreasing), 1, rep.strictly_decreasing)
    if cfg["moment_threshold"] is not None:
        smallest = min(rep.rows, key=lambda r: r.eps)
        run.check(
            f"moment exponent at eps={smallest.eps:g} below threshold",
            smallest.eps_log_moment, cfg["moment_threshold"], smallest.eps_log_moment < cfg["moment_threshold"],
        )


EXPERIMENTS: dict[str, Callable[[Run], None]] = {
    "integral-refinement": _exp_integral_refinement,
    "solve": _exp_solve,
    "nearmart": _exp_nearmart,
    "optional-stopping": _exp_optional_stopping,
    "ldp-rate": _exp_ldp_rate,
    "ldp-mc": _exp_ldp_mc,
    "exp-equiv": _exp_exp_equiv,
}


def manifest(cfg: dict) -> dict:
    return {"artifact": "aklab", "version": __version__, "config": cfg}


def run_experiment(cfg: dict, out: Path, threads: int = 1) -> Run:
    """Execute a resolved configuration and write every output file into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    run = Run(cfg, out, threads)
    EXPERIMENTS[cfg["experiment"]](run)
    run.csv("checks.csv", run.checks, ["check", "value", "threshold", "pass"])
    lines = [f"experiment: {cfg['experiment']}", f"seed: {cfg['seed']}", f"version: {__version__}"]
    lines += [f"[{'PASS' if c['pass'] else 'FAIL'}] {c['check']}: {c['value']} (threshold {c['threshold']})" for c in run.checks]
    lines += run.notes
    lines.append("overall: " + ("PASS" if run.passed else "FAIL"))
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aklab", description="Anticipating stochastic calculus experiments.")
    parser.add_argument("--version", action="version", version=f"aklab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config or manifest")
    run.add_argument("config", type=Path)
    run.add_argument("--seed", type=int, default=None, help="override the configured seed")
    run.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or ./aklab-out)")
    run.add_argument("--threads", type=int, default=1, help="worker threads for per-path solves")
    run.add_argument("--check", action="store_true", help="validate the configuration and exit")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = json.loads(args.config.read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: {args.config} is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(raw, args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.check:
        print(f"{args.config}: valid {cfg['experiment']} configuration")
        return EXIT_OK
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(os.environ.get(OUT_ENV, "aklab-out"))
    try:
        run = run_experiment(cfg, out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK if run.passed else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
