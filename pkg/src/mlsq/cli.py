"""Configuration-driven experiment runner.

Usage: ``mlsq <subcommand> --config <path> [--out <dir>] [--no-figures]``.

Each run writes a JSON summary, CSV detail tables, and PNG figures into the
output directory.  Identical configurations reproduce identical JSON/CSV
bytes: all randomness flows through the config seed and summation orders
are fixed.  Exit code 0 means every checked inequality passed, 1 means at
least one failed, 2 means the configuration or invocation was invalid.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from fractions import Fraction
from importlib import resources

import jsonschema
import numpy as np

from . import accretive, avgops, carleson, dyadic, gridfn, kernels, paraproduct
from . import reports, sqfn, stopping

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class ConfigError(ValueError):
    pass


def _require(cfg: dict, field: str, subcommand: str):
    if field not in cfg:
        raise ConfigError(f"{subcommand}: missing required field {field!r}")
    return cfg[field]


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    schema = json.loads(
        resources.files("mlsq").joinpath("config.schema.json").read_text()
    )
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        path_str = "/".join(str(p) for p in exc.absolute_path) or "(root)"
        raise ConfigError(f"config field {path_str}: {exc.message}") from exc
    return cfg


# ---------------------------------------------------------------------------
# builders from config fragments
# ---------------------------------------------------------------------------


def build_kernel(spec: dict) -> kernels.KernelFamily:
    kw = {k: v for k, v in spec.items() if k not in ("name", "m", "n")}
    return kernels.builtin_kernel(spec["name"], m=spec["m"], n=spec["n"], **kw)


def build_scales(spec: dict) -> sqfn.ScaleGrid:
    return sqfn.ScaleGrid(
        float(spec["t_min"]), float(spec["t_max"]), int(spec.get("per_octave", 8))
    )


def build_systems(spec: dict):
    systems = accretive.builtin_system(
        spec["name"], m=spec["m"], n=spec.get("n", 1), q=spec.get("q", 2)
    )
    if "slot" in spec:
        systems = [systems[spec["slot"]]]
    return systems


def build_function(spec: dict, window: dict, h_log2: int) -> gridfn.SampledFunction:
    lo, hi = window["lo"], window["hi"]
    name = spec.get("name", "gaussian")
    amp = float(spec.get("amplitude", 1.0))
    if name == "sum":
        parts = [build_function(p, window, h_log2) for p in spec["parts"]]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    if name == "gaussian":
        sigma = float(spec.get("sigma", 1.0))
        center = np.asarray(spec.get("center", [0.0] * len(lo)), dtype=float)

        def fn(*mesh):
            r2 = sum((g - center[a]) ** 2 for a, g in enumerate(mesh))
            return amp * np.exp(-r2 / (2 * sigma**2))

    elif name == "bump":
        radius = float(spec.get("radius", 1.0))
        center = np.asarray(spec.get("center", [0.0] * len(lo)), dtype=float)

        def fn(*mesh):
            r2 = sum((g - center[a]) ** 2 for a, g in enumerate(mesh))
            return amp * np.clip(1.0 - r2 / radius**2, 0.0, None) ** 4

    elif name == "characteristic":
        box_lo = np.asarray(spec.get("lo", [0.0] * len(lo)), dtype=float)
        box_hi = np.asarray(spec.get("hi", [1.0] * len(lo)), dtype=float)

        def fn(*mesh):
            inside = np.ones_like(mesh[0], dtype=bool)
            for a, g in enumerate(mesh):
                inside &= (g >= box_lo[a]) & (g < box_hi[a])
            return amp * inside.astype(float)

    else:
        raise ConfigError(f"unknown function {name!r}")
    return gridfn.from_callable(fn, lo, hi, h_log2)


def build_cube(key) -> dyadic.DyadicCube:
    return dyadic.cube_from_key(key)


def build_cube_family(spec: dict) -> list[dyadic.DyadicCube]:
    if "cubes" in spec:
        return [build_cube(k) for k in spec["cubes"]]
    root = build_cube(_require(spec, "root", "cube_family"))
    depth = int(spec.get("depth", 2))
    return dyadic.subcubes(root, depth)


# ---------------------------------------------------------------------------
# subcommand runners; each returns (summary, tables, figures, passed)
# ---------------------------------------------------------------------------


def run_check_system(cfg: dict):
    sys_spec = _require(cfg, "system", "check-system")
    Q = build_cube(_require(cfg, "cube", "check-system"))
    h_log2 = int(_require(cfg, "h_log2", "check-system"))
    systems = build_systems(sys_spec)
    report = accretive.check_system(
        systems, Q, h_log2, cfg.get("floor_generation"), cfg.get("budgets")
    )
    data = accretive.SystemOnCube(systems, Q, h_log2)
    means = [data.avg_slot(i, Q) for i in range(data.m)]
    summary = {
        "subcommand": "check-system",
        "system": sys_spec,
        "cube": list(Q.key()),
        "B1_est": report.B1_est,
        "B2_est": report.B2_est,
        "B3_est": report.B3_est,
        "q": report.q,
        "q_slots": list(report.q_slots),
        "slot_means": [[m.real, m.imag] for m in means],
        "method": report.method,
        "floor_generation": report.floor_generation,
        "passes": report.passes,
        "witnesses": report.witnesses,
        "budgets": report.budgets,
        "error_budget": {"h_log2": h_log2, "quadrature": report.method},
    }
    passed = all(report.passes.values())

    if "theta_cancel" in cfg:
        tc = cfg["theta_cancel"]
        K = build_kernel(_require(tc, "kernel", "theta_cancel"))
        scales = build_scales(_require(tc, "scales", "theta_cancel"))
        res = accretive.check_theta_cancel(
            K, systems, Q, report.q, scales, h_log2, tc.get("budget")
        )
        summary["theta_cancel"] = res
        passed = passed and res["passed"]

    rows = []
    depth = report.floor_generation - Q.generation
    for R in dyadic.subcubes(Q, depth):
        num = abs(data.avg_prod(R))
        den = 1.0
        for i in range(data.m):
            den *= abs(data.avg_slot(i, R))
        rows.append(
            (list(R.key()), R.generation, num, den, num / den if den > 0 else math.inf)
        )
    tables = {
        "subcubes": (
            ["cube", "generation", "abs_avg_product", "prod_abs_avgs", "ratio"],
            rows,
        )
    }
    figs = {}
    if Q.dim == 1:
        xs = [r[1] for r in rows]
        ratios = [min(r[4], 1e6) for r in rows]
        figs["compatibility"] = reports.figure_profile(
            xs,
            {"ratio": ratios},
            "compatibility ratio per subcube generation",
            xlabel="generation",
        )
    summary["passed"] = passed
    return summary, tables, figs, passed


def run_decompose(cfg: dict):
    sys_spec = _require(cfg, "system", "decompose")
    Q = build_cube(_require(cfg, "cube", "decompose"))
    h_log2 = int(_require(cfg, "h_log2", "decompose"))
    systems = build_systems(sys_spec)
    data = accretive.SystemOnCube(systems, Q, h_log2)
    report = accretive.check_system(systems, Q, h_log2, cfg.get("floor_generation"))
    d = stopping.decompose(data, cfg.get("floor_generation"))
    eta_bound = stopping.eta_lower_bound(report.B1_est, data.m, report.q)
    eta_ok = d.eta_observed >= eta_bound
    summary = {
        "subcommand": "decompose",
        "system": sys_spec,
        "decomposition": d.to_json(),
        "B1_est": report.B1_est,
        "eta_bound": eta_bound,
        "eta_ok": bool(eta_ok),
        "error_budget": {"h_log2": h_log2, "floor_generation": d.floor_generation},
    }
    passed = bool(eta_ok)
    if "verify_lower_bound" in cfg:
        vb = cfg["verify_lower_bound"]
        res = stopping.verify_lower_bound(
            d,
            data,
            report.B2_est,
            report.B3_est,
            samples=int(vb.get("samples", 1000)),
            seed=int(vb.get("seed", cfg.get("seed", 0))),
        )
        summary["lower_bound"] = res
        passed = passed and res["ok"]
    tables = {
        "selected": (
            ["cube", "generation", "side", "volume"],
            [(list(c.key()), c.generation, c.side, c.volume) for c in d.selected],
        )
    }
    figs = {"decomposition": reports.figure_decomposition(d, "stopping-time decomposition")}
    summary["passed"] = passed
    return summary, tables, figs, passed


def run_carleson(cfg: dict):
    K = build_kernel(_require(cfg, "kernel", "carleson"))
    scales = build_scales(_require(cfg, "scales", "carleson"))
    window = _require(cfg, "window", "carleson")
    h_log2 = int(_require(cfg, "h_log2", "carleson"))
    family = build_cube_family(_require(cfg, "cube_family", "carleson"))
    ref = gridfn.from_callable(
        lambda *mesh: np.zeros_like(mesh[0]), window["lo"], window["hi"], h_log2
    )
    rep = carleson.theta_carleson(
        K, family, scales, ref, eps_tail=float(cfg.get("eps_tail", 1e-8))
    )
    gen_masses = carleson.generation_masses(rep)
    budget = cfg.get("budget")
    passed = True if budget is None else rep["value"] <= budget
    summary = {
        "subcommand": "carleson",
        "kernel": cfg["kernel"],
        "carleson_norm": rep["value"],
        "witness": rep["witness"],
        "generation_masses": {str(g): v for g, v in gen_masses.items()},
        "family_size": rep["family_size"],
        "budget": budget,
        "passed": bool(passed),
        "error_budget": {
            "eps_tail": float(cfg.get("eps_tail", 1e-8)),
            "t_min": scales.t_min,
            "t_max": scales.t_max,
            "per_octave": scales.per_octave,
            "h_log2": h_log2,
        },
    }
    tables = {
        "tents": (
            ["cube", "tent_mass", "ratio"],
            [(r["cube"], r["tent_mass"], r["ratio"]) for r in rep["per_cube"]],
        )
    }
    figs = {"tent_masses": reports.figure_cube_masses(rep["per_cube"], "tent masses")}
    return summary, tables, figs, passed


def run_sqfn(cfg: dict):
    K = build_kernel(_require(cfg, "kernel", "sqfn"))
    scales = build_scales(_require(cfg, "scales", "sqfn"))
    window = _require(cfg, "window", "sqfn")
    h_log2 = int(_require(cfg, "h_log2", "sqfn"))
    idx_spec = _require(cfg, "index", "sqfn")
    idx = sqfn.IndexTuple(
        Fraction(str(idx_spec["p"])), tuple(Fraction(str(s)) for s in idx_spec["slots"])
    )
    fn_specs = _require(cfg, "functions", "sqfn")
    if len(fn_specs) != K.m:
        raise ConfigError("sqfn: need one function per kernel slot")
    dilations = cfg.get("dilations", [1])
    if any(
        lam <= 0 or 2.0 ** round(math.log2(lam)) != lam for lam in dilations
    ):
        raise ConfigError("sqfn: dilations must be powers of two")

    ratios = []
    profile_curve = None
    for lam in dilations:
        shift = int(round(math.log2(lam)))
        wl = {"lo": [v * lam for v in window["lo"]], "hi": [v * lam for v in window["hi"]]}
        fs = []
        for spec in fn_specs:
            spec_l = dict(spec)
            if "sigma" in spec_l:
                spec_l["sigma"] = float(spec_l["sigma"]) * lam
            if "radius" in spec_l:
                spec_l["radius"] = float(spec_l["radius"]) * lam
            if "center" in spec_l:
                spec_l["center"] = [v * lam for v in spec_l["center"]]
            if "lo" in spec_l:
                spec_l["lo"] = [v * lam for v in spec_l["lo"]]
                spec_l["hi"] = [v * lam for v in spec_l["hi"]]
            fs.append(build_function(spec_l, wl, h_log2 + shift))
        ratio = sqfn.bound_ratio(K, fs, idx, scales.shifted(shift))
        ratios.append((lam, ratio))
        if lam == dilations[0] and fs[0].dim == 1:
            S = sqfn.square_function(K, fs, scales.shifted(shift))
            profile_curve = (S.axis_centers(0), S.values.real)

    base = ratios[0][1]
    spread = max(abs(r - base) / base for _, r in ratios)
    budget = float(cfg.get("stability_budget", 0.03))
    passed = spread <= budget
    summary = {
        "subcommand": "sqfn",
        "kernel": cfg["kernel"],
        "index": {"p": str(idx.p), "slots": [str(s) for s in idx.slots]},
        "ratios": [[lam, r] for lam, r in ratios],
        "dilation_spread": spread,
        "stability_budget": budget,
        "passed": bool(passed),
        "error_budget": {
            "h_log2": h_log2,
            "t_min": scales.t_min,
            "t_max": scales.t_max,
            "per_octave": scales.per_octave,
        },
    }
    tables = {"ratios": (["dilation", "ratio"], [(lam, r) for lam, r in ratios])}
    figs = {}
    if profile_curve is not None:
        figs["square_function"] = reports.figure_profile(
            profile_curve[0], {"S": profile_curve[1]}, "square function profile"
        )
    return summary, tables, figs, passed


def run_paraproduct(cfg: dict):
    window = _require(cfg, "window", "paraproduct")
    h_log2 = int(_require(cfg, "h_log2", "paraproduct"))
    scales = build_scales(_require(cfg, "scales", "paraproduct"))
    m = int(cfg.get("m", 2))
    n = len(window["lo"])
    beta = build_function(_require(cfg, "beta", "paraproduct"), window, h_log2)
    psi, c = avgops.calderon_normalize(
        avgops.mollifier(cfg.get("psi", "polywavelet"), dim=n)
    )
    phi = avgops.mollifier(cfg.get("phi", "polybump"), dim=n)
    P = paraproduct.Paraproduct(beta=beta, psi=psi, phi=phi, scales=scales, m=m)

    budgets = cfg.get("budgets", {})
    pairing_budget = float(budgets.get("pairing_rel", 0.05))
    transpose_factor = float(budgets.get("transpose_factor", 1e-3))

    phi_test = build_function(_require(cfg, "phi_test", "paraproduct"), window, h_log2)
    canc = paraproduct.test_cancellation(P, phi_test)
    transpose_budget = transpose_factor * canc["beta_sup"] * canc["phi_l1"]
    canc_ok = canc["pairing_rel"] <= pairing_budget and all(
        r <= transpose_budget for r in canc["transpose_residuals"]
    )

    cz_cfg = cfg.get("cz", {})
    cz_rows = []
    cz_results = {}
    cz_ok = True
    for mode in cz_cfg.get("modes", ["size", "reg_x"]):
        res = paraproduct.cz_sweep(
            P,
            mode=mode,
            per_octave=int(cz_cfg.get("per_octave", 4)),
            seed=int(cz_cfg.get("seed", cfg.get("seed", 0))),
        )
        cz_results[mode] = res
        cz_ok = cz_ok and res["passed"]
        for d, v in zip(res["d_ladder"], res["per_octave_max"]):
            cz_rows.append((mode, d, v))

    passed = bool(canc_ok and cz_ok)
    summary = {
        "subcommand": "paraproduct",
        "calderon_constant": c,
        "cancellation": {
            "pairing_rel": canc["pairing_rel"],
            "pairing_error": canc["pairing_error"],
            "target": [canc["target"].real, canc["target"].imag],
            "transpose_residuals": canc["transpose_residuals"],
            "transpose_budget": transpose_budget,
            "pairing_budget": pairing_budget,
            "passed": bool(canc_ok),
        },
        "cz": cz_results,
        "passed": passed,
        "error_budget": {
            "h_log2": h_log2,
            "t_min": scales.t_min,
            "t_max": scales.t_max,
            "per_octave": scales.per_octave,
        },
    }
    tables = {"cz_sweep": (["mode", "d", "max_quotient"], cz_rows)}
    figs = {}
    size_rows = [
        {"d": d, "q": v} for mode, d, v in cz_rows if mode == "size" and v > 0
    ]
    if size_rows:
        figs["cz_size"] = reports.figure_loglog(
            size_rows, "d", "q", "kernel size quotient |ell| d^{mn}"
        )
    return summary, tables, figs, passed


def run_tb_condition(cfg: dict):
    window = _require(cfg, "window", "tb-condition")
    h_log2 = int(_require(cfg, "h_log2", "tb-condition"))
    scales = build_scales(_require(cfg, "scales", "tb-condition"))
    Q = build_cube(_require(cfg, "cube", "tb-condition"))
    q = float(cfg.get("q", 2.0))
    sys_spec = _require(cfg, "system", "tb-condition")
    systems = build_systems(sys_spec)
    n = len(window["lo"])

    # b_Q^i live on the working window (zero outside Q).
    ref = gridfn.from_callable(
        lambda *mesh: np.zeros_like(mesh[0]), window["lo"], window["hi"], h_log2
    )
    bs = []
    for s in systems:
        on_cube = s.sample(Q, h_log2)
        vals = np.zeros(ref.shape, dtype=on_cube.values.dtype)
        sls = ref.cube_slices(Q)
        vals[sls] = on_cube.values
        bs.append(gridfn.SampledFunction(h_log2, ref.lo, vals))

    op_spec = _require(cfg, "operator", "tb-condition")
    psi, _ = avgops.calderon_normalize(
        avgops.mollifier(cfg.get("psi", "polywavelet"), dim=n)
    )
    phi = avgops.mollifier(cfg.get("phi", "polybump"), dim=n)
    if op_spec.get("type") == "zero":
        def T_eval(fs):
            return gridfn.zeros_like(fs[0])

    elif op_spec.get("type") == "paraproduct":
        beta = build_function(_require(op_spec, "beta", "operator"), window, h_log2)
        P = paraproduct.Paraproduct(
            beta=beta, psi=psi, phi=phi, scales=scales, m=len(bs)
        )

        def T_eval(fs):
            return paraproduct.eval_L(P, fs)

    else:
        raise ConfigError("operator.type must be 'zero' or 'paraproduct'")

    res = paraproduct.tb_condition(
        T_eval, bs, Q, q, scales, psi, phi, cfg.get("budget")
    )
    summary = {
        "subcommand": "tb-condition",
        "operator": op_spec,
        "system": sys_spec,
        "cube": list(Q.key()),
        "tb": res,
        "passed": bool(res["passed"]),
        "error_budget": {
            "h_log2": h_log2,
            "t_min": scales.t_min,
            "t_max": scales.t_max,
            "per_octave": scales.per_octave,
        },
    }
    return summary, {}, {}, res["passed"]


RUNNERS = {
    "check-system": run_check_system,
    "decompose": run_decompose,
    "carleson": run_carleson,
    "sqfn": run_sqfn,
    "paraproduct": run_paraproduct,
    "tb-condition": run_tb_condition,
}


def run_config(cfg: dict, outdir: str, figures: bool = True) -> int:
    runner = RUNNERS[cfg["subcommand"]]
    summary, tables, figs, passed = runner(cfg)
    summary.setdefault("label", cfg.get("label", cfg["subcommand"]))
    summary["seed"] = cfg.get("seed", 0)
    os.makedirs(outdir, exist_ok=True)
    reports.write_summary(outdir, summary)
    for name, (header, rows) in tables.items():
        reports.write_csv(outdir, name, header, rows)
    if figures:
        for name, fig in figs.items():
            reports.save_figure(fig, outdir, name)
    else:
        for fig in figs.values():
            import matplotlib.pyplot as plt

            plt.close(fig)
    return EXIT_PASS if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlsq",
        description="multilinear square function workbench",
    )
    parser.add_argument(
        "subcommand",
        choices=sorted(RUNNERS),
        help="experiment family to run (must match the config)",
    )
    parser.add_argument("--config", required=True, help="path to JSON config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        cfg = load_config(args.config)
        if cfg["subcommand"] != args.subcommand:
            raise ConfigError(
                f"config subcommand {cfg['subcommand']!r} does not match "
                f"invocation {args.subcommand!r}"
            )
        return run_config(cfg, args.out, figures=not args.no_figures)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
