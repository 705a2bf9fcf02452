"""Command-line driver: ``sgame {simulate,fit,bounds,verify,experiment}``.

Every command reads an optional JSON config (``--config``), lets flags
override it, logs the resolved settings, and writes JSON or CSV artifacts.
Exit status is 0 on success (including fits that hit the iteration cap),
1 when a verification suite fails and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds as cb
from . import verify as vf
from .divergence import MonteCarlo, Quadrature
from .estimator import FitConfig, fit_ball_constrained, fit_lasso, lambda_max
from .exceptions import SgameError
from .io import dump_json, load_params, read_dataset_csv, write_dataset_csv
from .model import Dataset, ParameterBounds, SgameParams, check_in_class, random_params, sample

logger = logging.getLogger("sgame")

SUITES = ("gradient", "tail", "entropy", "product", "weyl", "em", "oracle")

DEFAULT_BOUNDS = {"a_gamma_sup": 1.0, "a_beta_sup": 2.0, "a_sigma_min": 0.5, "a_sigma_max": 4.0}
FIT_KEYS = ("max_em_iters", "em_tol", "inner_iters", "restarts", "init_strategy", "cd_tol", "cd_max_sweeps")

# keys accepted in --config files, per command; flags share the same names
CONFIG_KEYS = {
    "simulate": {"seed", "out", "n", "p", "q", "k", "bounds", "truth", "sparsity"},
    "fit": {"seed", "out", "data", "k", "lambda", "ball_m", "bounds", *FIT_KEYS},
    "bounds": {"out", "n", "p", "q", "k", "bounds", "kappa", "allow_small_kappa", "m_grid", "lambda", "l1_norm_psi0"},
    "verify": {"seed", "out", "trials", "mc_reps", "threads", "n_grid", "replications", "kappa"},
    "experiment": {"seed", "out", "truth", "p", "q", "k", "n_grid", "replications", "kappa", "lambda_grid",
                   "kl_method", "kl_samples", "quadrature_nodes", "threads", *FIT_KEYS},
}


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("SGAME_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level not in levels:
        raise UsageError(f"SGAME_LOG must be one of {sorted(levels)}, got {level!r}")
    logging.basicConfig(level=levels[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _load_config(args, command: str) -> dict:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(cfg) - CONFIG_KEYS[command])
        if unknown:
            raise UsageError(f"unknown config key(s) for '{command}': {', '.join(unknown)}")
    for key in CONFIG_KEYS[command]:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            cfg[key] = v
    return cfg


def _bounds(cfg: dict, k: int) -> ParameterBounds:
    b = dict(DEFAULT_BOUNDS)
    b.update(cfg.get("bounds") or {})
    b.pop("k", None)
    unknown = set(b) - set(DEFAULT_BOUNDS)
    if unknown:
        raise UsageError(f"unknown bounds key(s): {', '.join(sorted(unknown))}")
    return ParameterBounds(k=k, **b)


def _truth(spec, fallback) -> SgameParams:
    if spec is None:
        return fallback()
    if isinstance(spec, dict):
        return SgameParams.from_dict(spec)
    return load_params(spec)


def _write_text(path, text: str):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _json_text(obj) -> str:
    return json.dumps(vf._jsonable(obj), indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict) -> int:
    seed = int(cfg.get("seed", 0))
    n = int(cfg.get("n", 100))
    if n < 1:
        raise UsageError("n must be >= 1")
    root = np.random.SeedSequence(seed)
    truth_seq, design_seq, y_seq = root.spawn(3)

    def generated():
        k, p, q = int(cfg.get("k", 2)), int(cfg.get("p", 5)), int(cfg.get("q", 1))
        return random_params(_bounds(cfg, k), p, q, np.random.default_rng(truth_seq),
                             sparsity=float(cfg.get("sparsity", 0.5)))

    truth = check_in_class(_truth(cfg.get("truth"), generated))
    for key in ("p", "q", "k"):
        if key in cfg and cfg[key] != getattr(truth, key):
            raise UsageError(f"{key}={cfg[key]} disagrees with the supplied truth ({getattr(truth, key)})")
    design = np.random.default_rng(design_seq).random((n, truth.p))
    y = sample(truth, design, np.random.default_rng(y_seq))
    out = Path(cfg.get("out", "data.csv"))
    logger.info("simulate: n=%d p=%d q=%d k=%d seed=%d -> %s", n, truth.p, truth.q, truth.k, seed, out)
    write_dataset_csv(Dataset(design, y), out)
    dump_json({"seed": seed, "n": n, "truth": truth.to_dict()}, out.with_suffix(".json"))
    return 0


def cmd_fit(cfg: dict) -> int:
    if "data" not in cfg:
        raise UsageError("fit needs --data <csv>")
    data = read_dataset_csv(cfg["data"])
    k = int(cfg.get("k", 2))
    bounds = _bounds(cfg, k)
    fc = FitConfig(seed=int(cfg.get("seed", 0)), **{key: cfg[key] for key in FIT_KEYS if key in cfg})
    if "ball_m" in cfg and "lambda" in cfg:
        raise UsageError("--lambda and --ball-m are mutually exclusive")
    logger.info("fit: data=%s k=%d bounds=%s config=%s", cfg["data"], k, bounds.to_dict(), fc.to_dict())
    if "ball_m" in cfg:
        res = fit_ball_constrained(data, k, float(cfg["ball_m"]), bounds, fc)
    else:
        res = fit_lasso(data, k, float(cfg.get("lambda", 0.0)), bounds, fc)
    if not res.converged:
        logger.warning("EM stopped after %d iterations without meeting the tolerance", res.iterations)
    out = res.to_dict()
    out["config"] = {"k": k, "bounds": bounds.to_dict(), "fit": fc.to_dict(), "data": str(cfg["data"]),
                     "lambda_max": lambda_max(data, bounds, k)}
    _write_text(cfg.get("out"), _json_text(out))
    return 0


def bounds_report(cfg: dict) -> dict:
    try:
        n, p, q, k = (int(cfg[key]) for key in ("n", "p", "q", "k"))
    except KeyError as exc:
        raise UsageError(f"bounds needs --{exc.args[0]}") from exc
    inputs = cb.BoundInputs(n, p, q, k, _bounds(cfg, k), kappa=float(cfg.get("kappa", cb.KAPPA_MIN)),
                            allow_small_kappa=bool(cfg.get("allow_small_kappa", False)))
    return cb.constants_report(inputs, m_grid=tuple(cfg.get("m_grid", (1, 2, 4, 8))), lam=cfg.get("lambda"),
                               l1_norm_psi0=float(cfg.get("l1_norm_psi0", 0.0)))


def cmd_bounds(cfg: dict) -> int:
    report = bounds_report(cfg)
    if not report["theorem_regime"]:
        logger.warning("kappa below %g: constants are reported outside the theorem's regime", cb.KAPPA_MIN)
    text = _json_text(report)
    sys.stdout.write(text)
    if cfg.get("out"):
        Path(cfg["out"]).write_text(text)
    return 0


def _em_datasets(seed: int):
    truth = vf.default_truth(p=5)
    rng = np.random.default_rng(seed)
    out = []
    for n in (150, 300):
        x = rng.random((n, truth.p))
        out.append(Dataset(x, sample(truth, x, rng)))
    return truth.bounds, out


def run_suite(name: str, cfg: dict) -> vf.LemmaReport | vf.OracleReport:
    seed = int(cfg.get("seed", 0))
    trials = cfg.get("trials")
    if name == "gradient":
        b = ParameterBounds(2.0, 3.0, 0.5, 4.0, 1)
        reports = [vf.verify_gradient_envelope(b, q, k, p, trials=int(trials or 1000), seed=seed + i, fd_check=True)
                   for i, (q, k, p) in enumerate(((1, 2, 5), (2, 3, 8)))]
        return vf.LemmaReport("gradient", sum(r.trials for r in reports), sum(r.violations for r in reports),
                              max(r.worst_case for r in reports),
                              next((r.witness for r in reports if r.witness), None),
                              {"configs": [r.details for r in reports]})
    if name == "tail":
        psi, design, m_n = vf.default_tail_config(seed)
        rep = vf.verify_tail_bound(psi, design, m_n, int(cfg.get("mc_reps", 100_000)), seed)
        chern = vf.chernoff_table()
        rep.details["chernoff"] = chern.details["table"]
        rep.violations += chern.violations
        return rep
    if name == "entropy":
        psi, design, _ = vf.default_tail_config(seed)
        return vf.verify_entropy_bound(psi, design, int(cfg.get("mc_reps", 20_000)), seed)
    if name == "product":
        return vf.verify_product_constant(int(trials or 50), seed)
    if name == "weyl":
        return vf.verify_weyl(int(trials or 1000), 4, seed)
    if name == "em":
        bounds, datasets = _em_datasets(seed)
        lmax = max(lambda_max(d, bounds, bounds.k) for d in datasets)
        return vf.verify_em_monotonicity(datasets, [0.0, lmax / 10, lmax], bounds.k, bounds,
                                         FitConfig(restarts=1, seed=seed))
    if name == "oracle":
        ec = vf.ExperimentConfig(truth=vf.default_truth(), n_grid=tuple(cfg.get("n_grid", (100,))),
                                 replications=int(cfg.get("replications", 10)),
                                 lambda_policy=vf.TheoremMinimum(float(cfg.get("kappa", cb.KAPPA_MIN))),
                                 kl_method=MonteCarlo(5000, seed), seed=seed,
                                 fit_cfg=FitConfig(restarts=1), threads=int(cfg.get("threads", 1)))
        return vf.run_oracle_experiment(ec)
    raise UsageError(f"unknown suite {name!r}")


def _suite_summary(name, rep):
    if isinstance(rep, vf.OracleReport):
        bad = sum(not r.holds for r in rep.rows)
        worst = max(r.lhs_mean + 2 * r.lhs_se - r.rhs.total for r in rep.rows)
        return {"suite": name, "trials": len(rep.rows), "violations": bad, "worst_case": worst,
                "passed": bad == 0, "rows": [dict(zip(vf.ORACLE_COLUMNS, r.csv_values())) for r in rep.rows]}
    return rep.to_dict()


def cmd_verify(cfg: dict, suite: str) -> int:
    names = SUITES if suite == "all" else (suite,)
    logger.info("verify: suites=%s config=%s", names, cfg)
    summaries = [_suite_summary(name, run_suite(name, cfg)) for name in names]
    lines = [f"{'suite':<10} {'trials':>8} {'violations':>10} {'worst_case':>14}  status"]
    for s in summaries:
        lines.append(f"{s['suite']:<10} {s['trials']:>8d} {s['violations']:>10d} {s['worst_case']:>14.6g}  "
                     f"{'PASS' if s['passed'] else 'FAIL'}")
    print("\n".join(lines))
    if cfg.get("out"):
        Path(cfg["out"]).write_text(_json_text(summaries if suite == "all" else summaries[0]))
    return 0 if all(s["passed"] for s in summaries) else 1


def experiment_config(cfg: dict) -> vf.ExperimentConfig:
    truth = _truth(cfg.get("truth"), lambda: vf.default_truth(int(cfg.get("p", 10)), int(cfg.get("q", 1)),
                                                              int(cfg.get("k", 2))))
    check_in_class(truth)
    seed = int(cfg.get("seed", 0))
    if "lambda_grid" in cfg:
        policy = vf.LambdaGrid(tuple(float(v) for v in cfg["lambda_grid"]))
    else:
        policy = vf.TheoremMinimum(float(cfg.get("kappa", cb.KAPPA_MIN)))
    method = cfg.get("kl_method", "monte_carlo")
    if method == "monte_carlo":
        kl = MonteCarlo(int(cfg.get("kl_samples", 20_000)), seed)
    elif method == "quadrature":
        kl = Quadrature(int(cfg.get("quadrature_nodes", 2048)))
    else:
        raise UsageError("kl_method must be 'monte_carlo' or 'quadrature'")
    fc = FitConfig(**{"restarts": 2, **{key: cfg[key] for key in FIT_KEYS if key in cfg}})
    return vf.ExperimentConfig(truth=truth, n_grid=tuple(int(n) for n in cfg.get("n_grid", (100, 200, 400))),
                               replications=int(cfg.get("replications", 50)), lambda_policy=policy,
                               kl_method=kl, seed=seed, fit_cfg=fc, threads=int(cfg.get("threads", 1)))


def cmd_experiment(cfg: dict) -> int:
    ec = experiment_config(cfg)
    logger.info("experiment: n_grid=%s replications=%d policy=%s seed=%d", ec.n_grid, ec.replications,
                ec.lambda_policy, ec.seed)
    rep = vf.run_oracle_experiment(ec)
    out = cfg.get("out")
    _write_text(out, rep.to_csv())
    if out:
        dump_json(vf._jsonable({"constants": rep.constants,
                                "theorem_applies": [r.theorem_applies for r in rep.rows],
                                "failed_replications": [r.failures for r in rep.rows]}),
                  Path(out).with_suffix(".json"))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _float_list(text):
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgame", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with command settings; flags take precedence")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output path (stdout when omitted, where applicable)")
    common.add_argument("--threads", type=int)
    sizes = argparse.ArgumentParser(add_help=False)
    sizes.add_argument("--n", type=int)
    sizes.add_argument("--p", type=int)
    sizes.add_argument("--q", type=int)
    sizes.add_argument("--k", type=int)
    sizes.add_argument("--bounds", type=_json_arg,
                       help='JSON object, e.g. \'{"a_gamma_sup": 1, "a_beta_sup": 2, "a_sigma_min": 0.5, "a_sigma_max": 4}\'')

    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, sizes], help="draw a dataset from a truth")
    s.add_argument("--truth", help="parameter JSON file for the truth (random sparse truth if omitted)")
    s.add_argument("--sparsity", type=float)

    f = sub.add_parser("fit", parents=[common], help="fit the penalized or ball-constrained estimator")
    f.add_argument("--data")
    f.add_argument("--k", type=int)
    f.add_argument("--bounds", type=_json_arg)
    f.add_argument("--lambda", dest="lambda", type=float)
    f.add_argument("--ball-m", dest="ball_m", type=float)
    f.add_argument("--max-em-iters", dest="max_em_iters", type=int)
    f.add_argument("--em-tol", dest="em_tol", type=float)
    f.add_argument("--restarts", type=int)
    f.add_argument("--init-strategy", dest="init_strategy", choices=("kmeans", "random"))

    b = sub.add_parser("bounds", parents=[common, sizes], help="report every constant of the oracle inequality")
    b.add_argument("--kappa", type=float)
    b.add_argument("--allow-small-kappa", dest="allow_small_kappa", action="store_true")
    b.add_argument("--m-grid", dest="m_grid", type=_float_list)
    b.add_argument("--lambda", dest="lambda", type=float)
    b.add_argument("--l1-norm-psi0", dest="l1_norm_psi0", type=float)

    v = sub.add_parser("verify", parents=[common], help="run verification suites")
    v.add_argument("suite", choices=(*SUITES, "all"))
    v.add_argument("--trials", type=int)
    v.add_argument("--mc-reps", dest="mc_reps", type=int)
    v.add_argument("--n-grid", dest="n_grid", type=_int_list)
    v.add_argument("--replications", type=int)
    v.add_argument("--kappa", type=float)

    e = sub.add_parser("experiment", parents=[common], help="oracle-inequality experiment, CSV output")
    e.add_argument("--truth")
    e.add_argument("--p", type=int)
    e.add_argument("--q", type=int)
    e.add_argument("--k", type=int)
    e.add_argument("--n-grid", dest="n_grid", type=_int_list)
    e.add_argument("--replications", type=int)
    e.add_argument("--kappa", type=float)
    e.add_argument("--lambda-grid", dest="lambda_grid", type=_float_list)
    e.add_argument("--kl-method", dest="kl_method", choices=("monte_carlo", "quadrature"))
    e.add_argument("--kl-samples", dest="kl_samples", type=int)
    e.add_argument("--restarts", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        cfg = _load_config(args, args.command)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "bounds":
            return cmd_bounds(cfg)
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        return cmd_experiment(cfg)
    except (UsageError, SgameError, ValueError, KeyError, TypeError) as exc:
        print(f"sgame {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sgame {args.command}: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
