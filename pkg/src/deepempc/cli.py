"""Command-line driver for the experiment pipelines.

Every subcommand reads one JSON config file, writes its artifacts into
the output directory, and is deterministic for a fixed (config, seed):
re-running overwrites byte-identical files. Artifact names are fixed so
that later stages can pick up earlier outputs.

Exit codes: 0 success, 2 precondition/config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .controllers import (
    ExactRepController,
    ExplicitMpcController,
    ImplicitMpcController,
    NetworkController,
    PolynomialController,
    SaturatedController,
)
from .dynamics import (
    Scenario,
    average_settling_time,
    builtin_scenario,
    relative_ast,
    rollout,
    settling_time,
)
from .errors import (
    ControllerInfeasible,
    NumericalError,
    PreconditionError,
    QpInfeasible,
)
from .geometry import Box
from .learn import (
    Polynomial,
    TrainConfig,
    fit_polynomial,
    fit_pwa_gains,
    memory_footprint_poly,
    train_mlp,
)
from .mpc import (
    condense,
    generate_dataset,
    load_dataset_csv,
    mpc_control,
    save_dataset_csv,
    scenario_fingerprint,
)
from .mpqp import EnumerationOptions, enumerate_explicit, memory_footprint_pwa
from .pwa import PwaFunction
from .relunet import (
    ExactRepresentation,
    ReluNetwork,
    exact_mpc_network,
    memory_footprint_net,
    param_count,
    representation_error,
)
from .verify import (
    EllipsoidSafeSet,
    LabeledInitialSet,
    fit_svm,
    generate_labeled_sets,
    hoeffding,
    metric_m_dir,
    metric_m_fp,
    metric_m_vol,
    mtl_label,
)

KB = 1024.0


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _read_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_config(path: str, seed_override: int | None, out_override: str | None) -> dict:
    cfg = _read_json(Path(path))
    if seed_override is not None:
        cfg["seed"] = seed_override
    if out_override is not None:
        cfg["out_dir"] = out_override
    cfg.setdefault("seed", 0)
    cfg.setdefault("out_dir", "out")
    return cfg


def load_scenario(cfg: dict) -> Scenario:
    spec = cfg.get("scenario", "oscillator")
    if isinstance(spec, str):
        return builtin_scenario(spec)
    if "file" in spec:
        return Scenario.load(spec["file"])
    if "name" in spec:
        overrides = {}
        for key in ("N", "k_end", "settle_tol"):
            if key in spec:
                overrides[key] = spec[key]
        for key in ("Q", "R", "P"):
            if key in spec:
                overrides[key] = np.asarray(spec[key], dtype=float)
        if "sample_box" in spec:
            overrides["sample_box"] = Box.from_json(spec["sample_box"])
        return builtin_scenario(spec["name"], **overrides)
    return Scenario.from_json(spec)


def _controller_from_spec(name: str, scenario: Scenario, out: Path, saturate: bool):
    base_name = name
    if name == "implicit":
        controller = ImplicitMpcController(condense(scenario))
        saturate = False
    elif name == "explicit":
        controller = ExplicitMpcController(PwaFunction.load(out / "explicit_law.json"))
        saturate = False
    elif name in ("net", "mlp"):
        controller = NetworkController(ReluNetwork.load(out / "mlp.json"))
    elif name == "exactnet":
        controller = ExactRepController(ExactRepresentation.load(out / "exactnet.json"))
    elif name == "poly":
        controller = PolynomialController(Polynomial.load(out / "poly.json"))
    elif name == "pwa_refit":
        controller = ExplicitMpcController(PwaFunction.load(out / "pwa_refit.json"))
    elif name.startswith("net:"):
        controller = NetworkController(ReluNetwork.load(name[4:]))
    elif name.startswith("poly:"):
        controller = PolynomialController(Polynomial.load(name[5:]))
    elif name.startswith("pwa:"):
        controller = ExplicitMpcController(PwaFunction.load(name[4:]))
    else:
        raise PreconditionError(f"unknown controller spec {name!r}")
    if saturate:
        controller = SaturatedController(controller, scenario.system, scenario.U)
    return base_name, controller


# -- subcommands ----------------------------------------------------------------


def cmd_generate(cfg: dict, audit: bool) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    n_train = int(cfg.get("dataset", {}).get("n_train", 1000))
    condensed = condense(scenario)
    fingerprint = scenario_fingerprint(scenario)
    ds = generate_dataset(condensed, n_train, int(cfg["seed"]), scenario.sample_box, fingerprint)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(ds, out / "dataset.csv")
    _write_json(out / "dataset_meta.json", {
        "n_train": n_train,
        "seed": ds.seed,
        "scenario_fingerprint": ds.fingerprint,
        "n_x": condensed.n_x,
        "n_u": condensed.n_u,
    })
    scenario.save(out / "scenario.json")
    if audit:
        n_audit = max(1, len(ds) // 100)
        stride = max(1, len(ds) // n_audit)
        for i in range(0, len(ds), stride):
            resolved = mpc_control(condensed, ds.X[i])
            if np.max(np.abs(resolved - ds.U[i])) > 1e-7:
                raise NumericalError(f"audit mismatch at row {i}")
    print(f"generate: wrote {len(ds)} labeled pairs to {out/'dataset.csv'}")


def cmd_explicit(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    opts_cfg = cfg.get("explicit", {})
    opts = EnumerationOptions(
        max_active_set_size=opts_cfg.get("max_active_set_size"),
        cheby_tol=float(opts_cfg.get("cheby_tol", 1e-7)),
    )
    law = enumerate_explicit(condense(scenario), opts)
    footprint = memory_footprint_pwa(law, alpha_bit=int(opts_cfg.get("alpha_bit", 8)))
    out.mkdir(parents=True, exist_ok=True)
    law.save(out / "explicit_law.json")
    _write_json(out / "explicit_report.json", {
        "n_r": law.n_regions,
        "n_h": footprint["n_h"],
        "n_f": footprint["n_f"],
        "bytes": footprint["bytes"],
        "kB": footprint["bytes"] / KB,
    })
    print(f"explicit: {law.n_regions} regions, {footprint['bytes']} bytes")


def cmd_exactnet(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    law = PwaFunction.load(out / "explicit_law.json")
    box = scenario.sample_box
    from .geometry import box_bounds_of

    u_bounds = box_bounds_of(scenario.U)
    if u_bounds is None:
        raise PreconditionError("input constraint set must be a box for output ranges")
    ranges = np.column_stack(u_bounds)
    rep = exact_mpc_network(law, box, ranges)
    n_samples = int(cfg.get("exactnet", {}).get("samples", 10_000))
    err = representation_error(rep, law, box, n_samples=n_samples)
    rep.save(out / "exactnet.json")
    _write_json(out / "exactnet_report.json", {
        "e_prox": err,
        "width": rep.pairs[0][0].width,
        "depths_positive_part": [gp.depth for gp, _ in rep.pairs],
        "depths_negative_part": [gn.depth for _, gn in rep.pairs],
        "samples": n_samples,
    })
    print(f"exactnet: width {rep.pairs[0][0].width}, e_prox {err:.3e}")


def cmd_train(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    train_cfg = dict(cfg.get("train", {}))
    train_cfg.setdefault("seed", int(cfg["seed"]))
    tcfg = TrainConfig(**train_cfg)
    ds = load_dataset_csv(out / "dataset.csv", scenario.n_x)
    result = train_mlp(ds.X, ds.U, tcfg)
    result.net.save(out / "mlp.json")
    with open(out / "train_loss.csv", "w") as fh:
        fh.write("epoch,mse\n")
        for epoch, mse in enumerate(result.loss_history):
            fh.write(f"{epoch},{mse:.17g}\n")
    _write_json(out / "train_report.json", {
        "final_mse": result.final_mse,
        "params": param_count(result.net),
        "bytes": memory_footprint_net(result.net),
        "kB": memory_footprint_net(result.net) / KB,
        "config": tcfg.to_json(),
    })
    print(f"train: final mse {result.final_mse:.3e}, {param_count(result.net)} parameters")


def cmd_baselines(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    ds = load_dataset_csv(out / "dataset.csv", scenario.n_x)
    bl = cfg.get("baselines", {})
    report = {}

    degree = int(bl.get("poly_degree", 3))
    poly = fit_polynomial(ds.X, ds.U, degree)
    poly.save(out / "poly.json")
    report["poly"] = {
        "degree": degree,
        "bytes": memory_footprint_poly(poly),
        "kB": memory_footprint_poly(poly) / KB,
    }

    refit_horizon = bl.get("refit_horizon")
    if refit_horizon is not None:
        coarse = Scenario(
            system=scenario.system, Q=scenario.Q, R=scenario.R, P=scenario.P,
            N=int(refit_horizon), X=scenario.X, U=scenario.U, Xf=scenario.Xf,
            sample_box=scenario.sample_box, settle_tol=scenario.settle_tol,
            k_end=scenario.k_end,
        )
        partition = enumerate_explicit(condense(coarse))
        refit = fit_pwa_gains(partition, ds.X, ds.U)
        refit.save(out / "pwa_refit.json")
        footprint = memory_footprint_pwa(refit)
        report["pwa_refit"] = {
            "horizon": int(refit_horizon),
            "n_r": refit.n_regions,
            "bytes": footprint["bytes"],
            "kB": footprint["bytes"] / KB,
        }
    _write_json(out / "baselines_report.json", report)
    print(f"baselines: {', '.join(report)} written")


def _shared_initial_states(scenario: Scenario, condensed, n: int, seed: int) -> np.ndarray:
    """Oracle-feasible evaluation states, one rejection stream per index."""
    states = np.empty((n, scenario.n_x))
    for i in range(n):
        rng = np.random.default_rng([seed, 43, i])
        while True:
            x = scenario.sample_box.sample(rng, 1)[0]
            try:
                mpc_control(condensed, x)
            except QpInfeasible:
                continue
            states[i] = x
            break
    return states


def _evaluate_one(controller, scenario: Scenario, states: np.ndarray):
    from .dynamics import Trajectory

    settle_steps = []
    violations = 0
    unsettled = 0
    example = None
    for x0 in states:
        xs = [np.asarray(x0, dtype=float)]
        us = []
        failed = False
        for _ in range(scenario.k_end):
            try:
                u = np.asarray(controller(xs[-1]), dtype=float).reshape(-1)
            except ControllerInfeasible:
                failed = True
                break
            us.append(u)
            xs.append(scenario.system.A @ xs[-1] + scenario.system.B @ u)
        traj = Trajectory(np.array(xs), np.array(us)) if us else None
        if example is None and traj is not None:
            example = traj
        if failed:
            settle_steps.append(scenario.k_end)
            violations += 1
            unsettled += 1
            continue
        if mtl_label(traj, scenario.X, scenario.U) < 0:
            violations += 1
        st = settling_time(traj, scenario.settle_tol)
        if st is None:
            unsettled += 1
            settle_steps.append(scenario.k_end)
        else:
            settle_steps.append(st)
    ast = float(np.mean(settle_steps))
    return ast, violations, unsettled, example, settle_steps


def cmd_evaluate(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    ev = cfg.get("evaluate", {})
    n_rollouts = int(ev.get("n_rollouts", 100))
    saturate = bool(ev.get("saturate", True))
    names = ev.get("controllers", ["implicit"])
    condensed = condense(scenario)
    seed = int(cfg["seed"])
    states = _shared_initial_states(scenario, condensed, n_rollouts, seed)

    oracle = ImplicitMpcController(condensed)
    ref_ast, _, _, _, _ = _evaluate_one(oracle, scenario, states)

    out.mkdir(parents=True, exist_ok=True)
    report = {"n_rollouts": n_rollouts, "seed": seed, "reference_ast": ref_ast,
              "controllers": {}}
    for name in names:
        label, controller = _controller_from_spec(name, scenario, out, saturate)
        ast, violations, unsettled, example, settle_steps = _evaluate_one(
            controller, scenario, states
        )
        report["controllers"][label] = {
            "ast": ast,
            "rast": relative_ast(ast, ref_ast),
            "violations": violations,
            "unsettled": unsettled,
        }
        safe_label = label.replace(":", "_").replace("/", "_")
        with open(out / f"settling_{safe_label}.csv", "w") as fh:
            fh.write("trajectory,settle_step\n")
            for idx, st in enumerate(settle_steps):
                fh.write(f"{idx},{st}\n")
        if example is not None:
            with open(out / f"trajectory_{safe_label}.csv", "w") as fh:
                cols = [f"x{i}" for i in range(scenario.n_x)] + [f"u{i}" for i in range(scenario.n_u)]
                fh.write("step," + ",".join(cols) + "\n")
                for k in range(len(example)):
                    vals = list(example.states[k]) + list(example.inputs[k])
                    fh.write(f"{k}," + ",".join(f"{v:.17g}" for v in vals) + "\n")
    _write_json(out / "evaluate_report.json", report)
    summary = ", ".join(f"{k}: rAST {v['rast']:.3f}" for k, v in report["controllers"].items())
    print(f"evaluate: reference AST {ref_ast:.2f}; {summary}")


def cmd_verify(cfg: dict) -> None:
    scenario = load_scenario(cfg)
    out = Path(cfg["out_dir"])
    vf = cfg.get("verify", {})
    sizes = vf.get("sizes", {"g": 2000, "t": 1000, "v": 4000})
    seed = int(cfg["seed"])
    delta = float(vf.get("delta", 0.02))
    epsilon = float(vf.get("epsilon", 0.05))
    floor = float(vf.get("floor", 1e-6))
    c_penalty = float(vf.get("C", 10.0))
    nu = vf.get("nu")

    _, approx = _controller_from_spec(vf.get("controller", "net"), scenario, out,
                                      bool(vf.get("saturate", True)))
    _, oracle = _controller_from_spec(vf.get("oracle", "implicit"), scenario, out, False)

    approx_sets = generate_labeled_sets(approx, scenario, sizes, seed, provenance="approximate")
    t_exp = generate_labeled_sets(oracle, scenario, {"g": 1, "t": sizes["t"], "v": 1},
                                  seed, provenance="oracle")["t"]

    ell = EllipsoidSafeSet(epsilon=epsilon, floor=floor).fit(approx_sets["g"].negatives)
    svm = fit_svm(approx_sets["g"], C=c_penalty, nu=None if nu is None else float(nu))

    v_set = approx_sets["v"]
    in_ell = np.asarray(ell.contains(v_set.X))
    in_svm = np.asarray(svm.contains(v_set.X))
    n_ell = int(np.sum(in_ell))
    n_svm = int(np.sum(in_svm))
    report = {
        "m_dir": metric_m_dir(approx_sets["t"], t_exp),
        "m_vol_ell": metric_m_vol(ell, approx_sets["t"], t_exp),
        "m_vol_svm": metric_m_vol(svm, approx_sets["t"], t_exp),
        "m_fp_ell": metric_m_fp(ell, v_set),
        "m_fp_svm": metric_m_fp(svm, v_set),
        "r_emp_ell": float(np.sum(in_ell & (v_set.y == 1))) / n_ell if n_ell else 0.0,
        "r_emp_svm": float(np.sum(in_svm & (v_set.y == 1))) / n_svm if n_svm else 0.0,
        "delta": delta,
        "confidence": hoeffding(len(v_set), delta),
    }
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "ellipsoid.json", ell.to_json())
    _write_json(out / "svm.json", svm.to_json())
    approx_sets["g"].save_csv(out / "labeled_g.csv")
    approx_sets["t"].save_csv(out / "labeled_t_approx.csv")
    t_exp.save_csv(out / "labeled_t_oracle.csv")
    v_set.save_csv(out / "labeled_v.csv")
    _write_json(out / "verify_report.json", report)
    print(
        "verify: m_dir {m_dir:.3f}, m_vol ell/svm {m_vol_ell:.3f}/{m_vol_svm:.3f}, "
        "m_fp ell/svm {m_fp_ell:.3f}/{m_fp_svm:.3f}, confidence {confidence:.5f}".format(**report)
    )


def cmd_report(cfg: dict) -> None:
    out = Path(cfg["out_dir"])
    combined = {}
    for name in ("dataset_meta", "explicit_report", "exactnet_report", "train_report",
                 "baselines_report", "evaluate_report", "verify_report"):
        path = out / f"{name}.json"
        if path.exists():
            combined[name] = _read_json(path)
    _write_json(out / "report.json", combined)
    lines = ["artifact            kB        rAST"]
    train = combined.get("train_report")
    if train:
        rast = combined.get("evaluate_report", {}).get("controllers", {}).get("net", {}).get("rast")
        lines.append(f"mlp            {train['kB']:10.2f}  {rast if rast is not None else '-'}")
    base = combined.get("baselines_report", {})
    if "poly" in base:
        rast = combined.get("evaluate_report", {}).get("controllers", {}).get("poly", {}).get("rast")
        lines.append(f"poly           {base['poly']['kB']:10.2f}  {rast if rast is not None else '-'}")
    expl = combined.get("explicit_report")
    if expl:
        lines.append(f"explicit law   {expl['kB']:10.2f}  1.0 (reference law)")
    text = "\n".join(lines) + "\n"
    with open(out / "report.txt", "w") as fh:
        fh.write(text)
    print(text, end="")


COMMANDS = {
    "generate": cmd_generate,
    "explicit": cmd_explicit,
    "exactnet": cmd_exactnet,
    "train": cmd_train,
    "baselines": cmd_baselines,
    "evaluate": cmd_evaluate,
    "verify": cmd_verify,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepempc",
                                     description="MPC controller pipelines")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override config seed")
        cmd.add_argument("--out", default=None, help="override output directory")
        cmd.add_argument("--audit", action="store_true", help="spot-check generated labels")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "generate":
            cmd_generate(cfg, args.audit)
        else:
            COMMANDS[args.command](cfg)
    except (PreconditionError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
