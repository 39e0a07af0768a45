"""Command-line interface.

Verbs: train, fit-dmdc, simulate, batch, grid, oracle.  Resolution order for
settings: per-PDE defaults, then --config file values, then explicit flags.
Every verb that writes files also writes config.echo, which can be passed
back via --config to reproduce the run byte for byte.

Exit codes: 0 on success, 1 on runtime errors (one-line ``error: ...`` on
stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import bundles
from .config import (
    ConfigError,
    DISTURBANCE_KINDS,
    ExperimentConfig,
    default_config,
    load_config,
)
from .harness import (
    Artifacts,
    BatchResult,
    DisturbanceSpec,
    build_artifacts,
    build_full_simulator,
    build_law,
    fit_reduction,
    run_grid,
    run_policy_comparison,
    simulate_closed_loop,
    trial_initial_condition,
)
from .results import ResultSet, TrialRow, emit_results
from .riccati import LtiSystem, lqr_gain, riccati_residual, solve_are

GAIN_FILE = "gain.bundle"
REDUCED_FILE = "reduced_model.bundle"


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="config file to start from")
    p.add_argument("--pde", choices=("heat", "burgers"))
    p.add_argument("--model", choices=("full", "dmdc"))
    p.add_argument("--nu", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--d0", type=float)
    p.add_argument("--disturbance", choices=DISTURBANCE_KINDS, dest="dist_kind")
    p.add_argument("--trials", dest="n_trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--p", dest="p_points", type=int, help="grid points")
    p.add_argument("--m", dest="m_controls", type=int, help="control channels")
    p.add_argument("--particles", dest="enkf_particles", type=int)
    p.add_argument("--out", metavar="DIR", default="out", help="output directory")
    p.add_argument("--gain", metavar="FILE", help="load a trained gain bundle")
    p.add_argument("--reduced-model", metavar="FILE", help="load a fitted reduced model")
    p.add_argument("--dump-trials", action="store_true", help="also write per-trial ratios")


_OVERRIDE_FIELDS = {
    "model": "model",
    "nu": "nu",
    "lam": "lam",
    "d0": "d0",
    "dist_kind": "dist_kind",
    "n_trials": "n_trials",
    "seed": "seed",
    "p_points": "p",
    "m_controls": "m",
    "enkf_particles": "enkf_particles",
}


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {}
    base: dict = {}
    if args.config:
        cfg = load_config(args.config)
        base = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    pde = args.pde or base.pop("pde", None) or "heat"
    base.pop("pde", None)
    for arg_name, field_name in _OVERRIDE_FIELDS.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            overrides[field_name] = value
    return default_config(pde, **{**base, **overrides})


def _load_artifacts(cfg: ExperimentConfig, args: argparse.Namespace) -> Artifacts:
    gain = bundles.load_gain(args.gain) if args.gain else None
    reduction = bundles.load_reduced_model(args.reduced_model) if args.reduced_model else None
    return build_artifacts(cfg, gain=gain, reduction=reduction)


def _trial_rows(cfg, series: dict) -> list[TrialRow]:
    rows = []
    for policy, batch in series.items():
        lam = {"uncontrolled": 0.0, "optimal": 0.0}.get(policy, cfg.lam)
        for i, ratio in enumerate(batch.ratios):
            rows.append(
                TrialRow(
                    policy=policy, kind=cfg.dist_kind, d0=cfg.d0,
                    lam=lam, trial=i, terminal_ratio=float(ratio),
                )
            )
    return rows


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    art = _load_artifacts(cfg, args)
    os.makedirs(args.out, exist_ok=True)
    bundles.save_gain(art.gain, os.path.join(args.out, GAIN_FILE))
    written = [os.path.join(args.out, GAIN_FILE)]
    if art.reduction is not None:
        bundles.save_reduced_model(art.reduction, os.path.join(args.out, REDUCED_FILE))
        written.append(os.path.join(args.out, REDUCED_FILE))
    emit_results(ResultSet(config=cfg), args.out)
    print(f"trained gain (mode={art.gain.mode}, n={art.gain.n}) -> {written[0]}")
    return 0


def cmd_fit_dmdc(args) -> int:
    cfg = resolve_config(args)
    if cfg.model != "dmdc":
        cfg = replace(cfg, model="dmdc").validate()
    sim = build_full_simulator(cfg)
    model = fit_reduction(cfg, sim)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, REDUCED_FILE)
    bundles.save_reduced_model(model, path)
    emit_results(ResultSet(config=cfg), args.out)
    print(f"fitted reduced model (n={model.n}, p={model.p}) -> {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = resolve_config(args)
    art = _load_artifacts(cfg, args)
    policy = args.policy
    lam = {"uncontrolled": 0.0, "optimal": 0.0, "robust": cfg.lam}[policy]
    law = None if policy == "uncontrolled" else build_law(cfg, art, lam)
    disturbance = DisturbanceSpec(kind=cfg.dist_kind, d0=cfg.d0, channel=cfg.channel)
    z0 = trial_initial_condition(cfg, 0)
    res = simulate_closed_loop(cfg, law, z0, disturbance, art)
    batch = BatchResult(
        t=res.t, mean=res.l2, variance=np.zeros_like(res.l2),
        ratios=np.array([res.terminal_ratio]), failures=int(res.failed),
    )
    trials = _trial_rows(cfg, {policy: batch}) if args.dump_trials else None
    emit_results(ResultSet(config=cfg, timeseries={policy: batch}, trials=trials), args.out)
    print(f"{policy} trial terminal ratio: {res.terminal_ratio:.6g}")
    return 0


def cmd_batch(args) -> int:
    cfg = resolve_config(args)
    art = _load_artifacts(cfg, args)
    series = run_policy_comparison(cfg, art)
    trials = _trial_rows(cfg, series) if args.dump_trials else None
    emit_results(ResultSet(config=cfg, timeseries=series, trials=trials), args.out)
    for policy in ("uncontrolled", "optimal", "robust"):
        batch = series[policy]
        print(
            f"{policy}: mean terminal ratio {batch.mean_terminal_ratio:.6g}"
            + (f" ({batch.failures} failed trials)" if batch.failures else "")
        )
    return 0


def cmd_grid(args) -> int:
    cfg = resolve_config(args)
    d0_list = tuple(args.grid_d0) if args.grid_d0 else None
    lambda_list = tuple(args.grid_lambda) if args.grid_lambda else None
    kinds = tuple(args.grid_kinds) if args.grid_kinds else None
    art = _load_artifacts(cfg, args)
    cells = run_grid(cfg, art, d0_list=d0_list, lambda_list=lambda_list, kinds=kinds)
    trials = None
    if args.dump_trials:
        trials = [
            TrialRow(policy="robust", kind=c.kind, d0=c.d0, lam=c.lam,
                     trial=i, terminal_ratio=r)
            for c in cells
            for i, r in enumerate(c.ratios)
        ]
    emit_results(ResultSet(config=cfg, heatmap=cells, trials=trials), args.out)
    print(f"grid: {len(cells)} cells -> {os.path.join(args.out, 'heatmap.csv')}")
    return 0


def cmd_oracle(args) -> int:
    """Riccati reference benchmarks, printed for debugging."""
    scalar = LtiSystem(A=[[0.0]], B=[[1.0]], C=[[1.0]], R=[[1.0]], G=[[1.0]])
    P = solve_are(scalar)
    print(f"scalar benchmark: P = {P[0, 0]:.12g} (expected 1), "
          f"residual {riccati_residual(scalar, P):.3e}")
    n = 3
    diag = LtiSystem(A=-np.eye(n), B=np.eye(n), C=np.eye(n), R=np.eye(n), G=np.eye(n))
    P3 = solve_are(diag)
    expected = np.sqrt(2.0) - 1.0
    print(f"diagonal 3-state benchmark: max |P - (sqrt(2)-1) I| = "
          f"{np.max(np.abs(P3 - expected * np.eye(n))):.3e}")
    K = lqr_gain(diag, P3)
    print(f"closed-loop spectral abscissa: "
          f"{np.max(np.linalg.eigvals(diag.A - diag.B @ K).real):.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enkfcontrol",
        description="Robust stabilization of discretized PDEs via ensemble-Kalman control",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="run the dual EnKF and save the gain")
    _add_common_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("fit-dmdc", help="fit and save a reduced model")
    _add_common_flags(p)
    p.set_defaults(fn=cmd_fit_dmdc)

    p = sub.add_parser("simulate", help="single closed-loop trajectory")
    _add_common_flags(p)
    p.add_argument("--policy", choices=("uncontrolled", "optimal", "robust"),
                   default="robust")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("batch", help="trial batch under the three policies")
    _add_common_flags(p)
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("grid", help="(kind, d0, lambda) heat-map sweep")
    _add_common_flags(p)
    p.add_argument("--grid-d0", type=float, nargs="+", metavar="D0")
    p.add_argument("--grid-lambda", type=float, nargs="+", metavar="LAM")
    p.add_argument("--grid-kinds", choices=DISTURBANCE_KINDS, nargs="+", metavar="KIND")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("oracle", help="Riccati reference benchmarks")
    p.set_defaults(fn=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surfaced as a one-line machine-parsable error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
