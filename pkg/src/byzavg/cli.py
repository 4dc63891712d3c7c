"""Experiment harness: protocol runs, learning runs, verification suites.

Subcommands::

    byzavg avg    --config cfg.ini [--trials K] [--seed S] [--out out.csv]
    byzavg learn  --config cfg.ini [--trials K] [--seed S] [--out out.csv]
    byzavg verify SUITE [--seed S]

Config files are flat INI key-value text with sections ``[run]``,
``[protocol]``, ``[family]``, ``[adversary]``, ``[learn]``, ``[output]``;
all numeric fields are decimal.  Flags override config values.  Every CSV
records the full configuration and seed in its comment header, so replaying
the same config and seed reproduces it byte-for-byte.

Exit codes: 0 all bounds hold, 1 bound violation, 2 infeasible or invalid
configuration, 3 adversary model violation.
"""

from __future__ import annotations

import argparse
import configparser
import sys

import numpy as np

from . import __version__, protocols, verify
from .adversaries import lower_bound_attack, plumbing_attacks
from .aggregation import FIRST_LEX
from .errors import ConfigurationError, DeliveryViolation, InfeasibleConfigError
from .learning import (
    LearnConfig,
    ProtocolAveraging,
    QuadraticModel,
    avg_via_learn,
    hom_learn_run,
    learn_run,
    make_linear_regression_model,
)
from .netsim import derive_seed, substream
from .protocols import check_avg_bounds, derive_mda_config, derive_rbtm_config, holds, run_avg
from .report import render_avg_figure, render_learn_figure, write_csv
from .vectors import diameter_cw, diameter_l2, family_mean

EXIT_OK = 0
EXIT_BOUNDS = 1
EXIT_CONFIG = 2
EXIT_ADVERSARY = 3

_FAMILY_TAG = 41
_TRIAL_TAG = 42

AVG_COLUMNS = (
    "row_type", "trial", "round", "node",
    "delta2", "delta_cw2", "mean_deviation", "value",
    "check", "lhs", "rhs", "ok",
)
LEARN_COLUMNS = (
    "row_type", "trial", "t", "batch", "agreement", "node",
    "delta2_theta", "grad_norm_at_mean", "loss_at_mean", "value",
    "check", "lhs", "rhs", "ok",
)


def _load_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    found = cp.read(path)
    if not found:
        raise ConfigurationError(f"config file not found: {path}")
    return cp


def _get(cp, section, key, cast=str, default=None, required=False):
    if cp.has_option(section, key):
        raw = cp.get(section, key).strip()
        try:
            return cast(raw)
        except ValueError as exc:
            raise ConfigurationError(f"[{section}] {key} = {raw!r}: {exc}") from None
    if required:
        raise ConfigurationError(f"missing required config key [{section}] {key}")
    return default


def _parse_family_values(raw: str) -> np.ndarray:
    rows = [r for r in raw.replace("\n", ";").split(";") if r.strip()]
    if len(rows) == 1 and ";" not in raw:
        # A single whitespace row without separators means scalar nodes.
        return np.array([float(x) for x in rows[0].split()], dtype=float).reshape(-1, 1)
    return np.array([[float(x) for x in r.split()] for r in rows], dtype=float)


def _config_meta(cp, extra: dict) -> dict:
    meta = {"tool": f"byzavg {__version__}"}
    for section in cp.sections():
        for key, value in cp.items(section):
            meta[f"{section}.{key}"] = value
    meta.update(extra)
    return meta


def _protocol_config(cp) -> protocols.ProtocolConfig:
    variant = _get(cp, "protocol", "variant", str, required=True).lower()
    n = _get(cp, "protocol", "n", int, required=True)
    f = _get(cp, "protocol", "f", int, required=True)
    epsilon = _get(cp, "protocol", "epsilon", float, None)
    if variant == protocols.MDA:
        return derive_mda_config(n, f, epsilon)
    if variant == protocols.RBTM:
        return derive_rbtm_config(n, f, epsilon)
    raise ConfigurationError(f"[protocol] variant must be mda or rbtm, got {variant!r}")


def _adversary(cp):
    kind = _get(cp, "adversary", "kind", str, "null").lower()
    if kind in ("lower-bound-split", "six-f-breaker"):
        return kind, None
    params = {}
    if cp.has_option("adversary", "scale"):
        params["scale"] = cp.getfloat("adversary", "scale")
    if cp.has_option("adversary", "crashed"):
        params["crashed"] = tuple(int(x) for x in cp.get("adversary", "crashed").split())
    return kind, plumbing_attacks(kind, **params)


def _family_for_trial(cp, h: int, seed: int, trial: int) -> np.ndarray:
    kind = _get(cp, "family", "kind", str, "random-normal")
    if kind == "given":
        fam = _parse_family_values(_get(cp, "family", "values", str, required=True))
        if fam.shape[0] != h:
            raise ConfigurationError(f"[family] values has {fam.shape[0]} rows, expected h = {h}")
        return fam
    if kind != "random-normal":
        raise ConfigurationError(f"[family] kind must be random-normal or given, got {kind!r}")
    dim = _get(cp, "family", "dim", int, 1)
    scale = _get(cp, "family", "scale", float, 1.0)
    rng = substream(seed, _FAMILY_TAG, trial)
    return scale * rng.standard_normal((h, dim)) + scale * rng.standard_normal(dim)


def _emit(args, cp, columns, rows, meta_extra, renderer):
    if not args.out:
        return
    meta = _config_meta(cp, meta_extra)
    write_csv(args.out, meta, columns, rows)
    print(f"wrote {args.out}")
    figures = _get(cp, "output", "figures", str, "yes").lower() not in ("no", "false", "0")
    if figures and not args.no_figures:
        out = renderer()
        if out:
            print(f"wrote {out}")


def _summary_rows(trial, checks):
    return [
        {"row_type": "summary", "trial": trial, "check": c.name, "lhs": c.lhs, "rhs": c.rhs, "ok": c.ok}
        for c in checks
    ]


def cmd_avg(args) -> int:
    cp = _load_config(args.config)
    trials = args.trials if args.trials is not None else _get(cp, "run", "trials", int, 1)
    seed = args.seed if args.seed is not None else _get(cp, "run", "seed", int, 0)
    N = _get(cp, "protocol", "agreement", int, 1)
    adv_kind, adversary = _adversary(cp)

    if adv_kind == "six-f-breaker":
        return _cmd_avg_sixf(args, cp, seed, N)

    cfg = _protocol_config(cp)
    tie_mode = _get(cp, "protocol", "tie_mode", str, FIRST_LEX)

    rows, traces, all_ok = [], [], True
    halving_rhs, dev_rhs = None, None
    for trial in range(trials):
        if adv_kind == "lower-bound-split":
            policy, family = lower_bound_attack(cfg)
        else:
            policy, family = adversary, _family_for_trial(cp, cfg.h, seed, trial)
        run = run_avg(
            cfg, family, N, policy,
            seed=derive_seed(seed, _TRIAL_TAG, trial),
            tie_mode=tie_mode,
            full_trace=args.full_trace or adv_kind == "lower-bound-split",
        )
        d2 = [diameter_l2(family)] + [s.delta2 for s in run.trace]
        dev = [0.0] + [s.mean_deviation for s in run.trace]
        traces.append({"delta2": d2, "mean_deviation": dev})
        halving_rhs = diameter_l2(family) / 2**N
        dev_rhs = cfg.averaging_constant * diameter_l2(family)

        cw0 = diameter_cw(family)
        rows.append({
            "row_type": "round", "trial": trial, "round": 0,
            "delta2": diameter_l2(family), "delta_cw2": float(np.sqrt((cw0 * cw0).sum())),
            "mean_deviation": 0.0,
        })
        for s in run.trace:
            rows.append({
                "row_type": "round", "trial": trial, "round": s.round_index,
                "delta2": s.delta2, "delta_cw2": s.delta_cw2, "mean_deviation": s.mean_deviation,
            })
        if args.full_trace and run.families:
            for r, fam in enumerate(run.families):
                for node, vec in enumerate(fam, start=1):
                    rows.append({
                        "row_type": "node", "trial": trial, "round": r, "node": node,
                        "value": " ".join(f"{x:.17g}" for x in vec),
                    })

        checks = check_avg_bounds(run)
        if adv_kind == "lower-bound-split":
            forced = cfg.q - 2 * cfg.f
            worst = max(float(np.abs(fam[:forced]).max()) for fam in run.families[1:]) if run.families else 0.0
            floor = (cfg.h + 2 * cfg.f - cfg.q) / cfg.h - 2.0 ** (-N)
            final_dev = run.trace[-1].mean_deviation if run.trace else 0.0
            checks = checks + [
                protocols.BoundCheck("blocked-group-pinned-to-zero", worst, 0.0, worst <= 1e-12),
                protocols.BoundCheck("forced-deviation-floor", floor, final_dev, final_dev >= floor - 1e-12),
            ]
        rows.extend(_summary_rows(trial, checks))
        all_ok = all_ok and all(c.ok for c in checks)

    _emit(
        args, cp, AVG_COLUMNS, rows,
        {"command": "avg", "trials": trials, "seed": seed, "agreement": N},
        lambda: render_avg_figure(args.out, traces, halving_rhs, dev_rhs, f"{cfg.variant} n={cfg.n} f={cfg.f} N={N}"),
    )
    print("bounds hold" if all_ok else "BOUND VIOLATION")
    return EXIT_OK if all_ok else EXIT_BOUNDS


def _cmd_avg_sixf(args, cp, seed: int, N: int) -> int:
    """Replay the diameter-stalling attack; exit 0 iff it reproduces."""
    f = _get(cp, "protocol", "f", int, required=True)
    n = _get(cp, "protocol", "n", int, required=True)
    if n != 6 * f:
        raise ConfigurationError(f"six-f-breaker needs n = 6f, got n={n}, f={f}")
    rows, traces = [], []
    run_stats = verify.replay_six_f(f=f, N=N, seed=seed)
    expected = run_stats["expected_ratio"]
    d0 = 2.0  # canonical family spans [-1, 1]
    rows.append({"row_type": "round", "trial": 0, "round": 0, "delta2": d0, "mean_deviation": 0.0})
    cur = d0
    curve = [d0]
    for r, ratio in enumerate(run_stats["ratios"], start=1):
        cur *= ratio
        curve.append(cur)
        rows.append({"row_type": "round", "trial": 0, "round": r, "delta2": cur, "mean_deviation": 0.0})
    traces.append({"delta2": curve, "mean_deviation": [0.0] * len(curve)})
    ratio_err = max(abs(r - expected) for r in run_stats["ratios"])
    checks = [
        protocols.BoundCheck("stall-multiplier-exact", ratio_err, 1e-9, ratio_err <= 1e-9),
        protocols.BoundCheck(
            "halving-violated", 1.0, run_stats["final_ratio_vs_halving"],
            run_stats["final_ratio_vs_halving"] > 1.0 + 1e-9,
        ),
    ]
    rows.extend(_summary_rows(0, checks))
    all_ok = all(c.ok for c in checks)
    _emit(
        args, cp, AVG_COLUMNS, rows,
        {"command": "avg", "trials": 1, "seed": seed, "agreement": N, "attack": "six-f-breaker",
         "delta": run_stats["delta"], "rounds": run_stats["T"]},
        lambda: render_avg_figure(args.out, traces, d0 / 2**N, None, f"six-f stall n={n} f={f} N={N}"),
    )
    print("attack reproduced" if all_ok else "ATTACK DID NOT REPRODUCE")
    return EXIT_OK if all_ok else EXIT_BOUNDS


def _learn_model(cp, cfg, sigma):
    model_kind = _get(cp, "learn", "model", str, "quadratic")
    dim = _get(cp, "learn", "dim", int, 2)
    if model_kind == "quadratic":
        if cp.has_option("learn", "centers"):
            centers = _parse_family_values(cp.get("learn", "centers"))
            if centers.shape[0] != cfg.h:
                raise ConfigurationError(f"[learn] centers has {centers.shape[0]} rows, expected h = {cfg.h}")
        else:
            spread = _get(cp, "learn", "center_spread", float, 1.0)
            rng = substream(_get(cp, "run", "seed", int, 0), 43)
            centers = spread * rng.standard_normal((cfg.h, dim))
        return QuadraticModel(centers, noise_scale=sigma)
    if model_kind == "least-squares":
        samples = _get(cp, "learn", "samples", int, 64)
        return make_linear_regression_model(
            cfg.h, dim, samples=samples, noise_scale=sigma, seed=_get(cp, "run", "seed", int, 0)
        )
    raise ConfigurationError(f"[learn] model must be quadratic or least-squares, got {model_kind!r}")


def cmd_learn(args) -> int:
    cp = _load_config(args.config)
    trials = args.trials if args.trials is not None else _get(cp, "run", "trials", int, 1)
    seed = args.seed if args.seed is not None else _get(cp, "run", "seed", int, 0)
    algorithm = _get(cp, "learn", "algorithm", str, "learn").lower()
    delta = _get(cp, "learn", "delta", float, 0.5)
    sigma = _get(cp, "learn", "sigma", float, 0.0)
    iterations = _get(cp, "learn", "iterations", int, 100)
    cfg = _protocol_config(cp)
    _, adversary = _adversary(cp)
    oracle = ProtocolAveraging(cfg)

    if algorithm == "avg-via-learn":
        return _cmd_avg_via_learn(args, cp, cfg, oracle, adversary, trials, seed, iterations)

    model = _learn_model(cp, cfg, sigma)
    runner = {"learn": learn_run, "hom-learn": hom_learn_run}.get(algorithm)
    if runner is None:
        raise ConfigurationError(f"[learn] algorithm must be learn, hom-learn, or avg-via-learn, got {algorithm!r}")

    rows, traces = [], []
    d2_sq, grad_sq = [], []
    for trial in range(trials):
        lcfg = LearnConfig(delta=delta, iterations=iterations, avg=oracle, seed=derive_seed(seed, 44, trial))
        res = runner(lcfg, model, adversary)
        trace = {
            "delta2_theta": [s.delta2_theta for s in res.trace],
            "grad_norm_at_mean": [s.grad_norm_at_mean for s in res.trace],
            "loss_at_mean": [s.loss_at_mean for s in res.trace],
        }
        traces.append(trace)
        for s in res.trace:
            rows.append({
                "row_type": "iter", "trial": trial, "t": s.t, "batch": s.batch, "agreement": s.agreement,
                "delta2_theta": s.delta2_theta, "grad_norm_at_mean": s.grad_norm_at_mean,
                "loss_at_mean": s.loss_at_mean,
            })
        if args.full_trace:
            for t, fam in enumerate(res.families, start=1):
                for node, vec in enumerate(fam, start=1):
                    rows.append({
                        "row_type": "node", "trial": trial, "t": t, "node": node,
                        "value": " ".join(f"{x:.17g}" for x in vec),
                    })
        d2_sq.append(diameter_l2(res.theta_star) ** 2)
        grad_sq.append(float(np.linalg.norm(model.mean_gradient(family_mean(res.theta_star))) ** 2))

    spread_bound = delta**2
    if algorithm == "hom-learn":
        grad_bound = delta**2
    else:
        grad_bound = (1 + delta) ** 2 * cfg.averaging_constant**2 * model.heterogeneity**2
    checks = [
        protocols.BoundCheck("mean-final-spread-squared", float(np.mean(d2_sq)), spread_bound,
                             holds(float(np.mean(d2_sq)), spread_bound)),
        protocols.BoundCheck("mean-final-gradient-squared", float(np.mean(grad_sq)), grad_bound,
                             holds(float(np.mean(grad_sq)), grad_bound)),
    ]
    rows.extend(_summary_rows("all", checks))
    all_ok = all(c.ok for c in checks)
    _emit(
        args, cp, LEARN_COLUMNS, rows,
        {"command": "learn", "trials": trials, "seed": seed, "eta": delta / (12 * model.lipschitz),
         "heterogeneity": model.heterogeneity, "averaging_constant": cfg.averaging_constant},
        lambda: render_learn_figure(args.out, traces, delta, f"{algorithm} delta={delta} sigma={sigma}"),
    )
    print("bounds hold" if all_ok else "BOUND VIOLATION")
    return EXIT_OK if all_ok else EXIT_BOUNDS


def _cmd_avg_via_learn(args, cp, cfg, oracle, adversary, trials, seed, iterations) -> int:
    N = _get(cp, "learn", "agreement", int, 2)
    family = _parse_family_values(_get(cp, "family", "values", str, required=True))
    if family.shape[0] != cfg.h:
        raise ConfigurationError(f"[family] values has {family.shape[0]} rows, expected h = {cfg.h}")
    spread = diameter_l2(family)
    diams, devs, delta = [], [], 0.0
    rows = []
    for trial in range(trials):
        res, delta = avg_via_learn(family, N, oracle, iterations, seed=derive_seed(seed, 45, trial), adversary=adversary)
        diams.append(diameter_l2(res.theta_star))
        devs.append(float(np.linalg.norm(family_mean(res.theta_star) - family_mean(family))))
        rows.append({"row_type": "trial", "trial": trial, "t": res.star,
                     "delta2_theta": diams[-1], "grad_norm_at_mean": devs[-1]})
    checks = [
        protocols.BoundCheck("mean-output-diameter", float(np.mean(diams)), spread / 2**N,
                             holds(float(np.mean(diams)), spread / 2**N)),
    ]
    if cfg.averaging_constant > 0:
        bound = (1 + delta) * cfg.averaging_constant * spread
        checks.append(protocols.BoundCheck("mean-output-mean-shift", float(np.mean(devs)), bound,
                                           holds(float(np.mean(devs)), bound)))
    rows.extend(_summary_rows("all", checks))
    all_ok = all(c.ok for c in checks)
    _emit(
        args, cp, LEARN_COLUMNS, rows,
        {"command": "learn", "algorithm": "avg-via-learn", "trials": trials, "seed": seed,
         "agreement": N, "delta": delta},
        lambda: None,
    )
    print("bounds hold" if all_ok else "BOUND VIOLATION")
    return EXIT_OK if all_ok else EXIT_BOUNDS


def cmd_verify(args) -> int:
    report = verify.run_suite(args.suite, seed=args.seed if args.seed is not None else 0)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_BOUNDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byzavg", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"byzavg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("avg", cmd_avg), ("learn", cmd_learn)):
        p = sub.add_parser(name, help=f"run the {name} experiment described by a config file")
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--trials", type=int, default=None, help="number of seeded trials")
        p.add_argument("--seed", type=int, default=None, help="base seed (recorded in the output)")
        p.add_argument("--out", default=None, help="CSV output path (figure written alongside)")
        p.add_argument("--full-trace", action="store_true", help="emit per-node rows as well")
        p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
        p.set_defaults(func=fn)

    p = sub.add_parser("verify", help="run a named property suite")
    p.add_argument("suite", help=f"one of: {', '.join(sorted(verify.SUITES))}")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleConfigError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DeliveryViolation as exc:
        print(f"adversary model violation: {exc}", file=sys.stderr)
        return EXIT_ADVERSARY


if __name__ == "__main__":
    sys.exit(main())
