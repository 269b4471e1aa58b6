"""Command-line front end: simulate, fit, mc, two-sample, moments.

Configs are strict JSON: any unknown key aborts before computation.
Exit codes: 0 success, 1 config/input error, 2 too many replication
failures in an mc run.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, kernels, mc, randfield
from .basis import parse_index
from .dataset import (
    Region,
    SamplingDensity,
    SpatialDataset,
    generate_sites,
    load_csv,
    save_csv,
    save_metadata,
)
from .inference import (
    confidence_interval,
    make_residual_provider,
    two_sample_test,
    two_sample_variance,
    variance_hat,
)
from .lpfit import FitConfig, FitError, estimate_bias, fit_at


class ConfigError(Exception):
    pass


def _load_config(path, allowed: set) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at byte {exc.pos}: {exc.msg}")
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    return cfg


def _density(cfg) -> SamplingDensity:
    if cfg is None:
        return SamplingDensity("uniform")
    return SamplingDensity(kind=cfg.get("kind", "uniform"), params=cfg.get("params", {}))


def _kernel(cfg, d) -> kernels.KernelSpec:
    cfg = cfg or {}
    return kernels.KernelSpec(
        family=cfg.get("family", "product-triangular"),
        support_halfwidth=cfg.get("C_K", 1.0),
        d=d,
    )


def _provenance(cfg) -> dict:
    return {"version": __version__, "config": cfg}


SIMULATE_KEYS = {"n", "A", "density", "mean", "error", "seed"}


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, SIMULATE_KEYS)
    region = Region(A=tuple(cfg["A"]))
    density = _density(cfg.get("density"))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    spec = mc.ExperimentSpec(
        reps=1,
        n=cfg["n"],
        A=tuple(cfg["A"]),
        density=density,
        mean=cfg.get("mean", "paper_mean"),
        error=_error_case(cfg.get("error")),
        master_seed=seed,
    )
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    sites = generate_sites(region, density, cfg["n"], rng)
    y = mc.simulate_responses(spec, sites, rng)
    dataset = SpatialDataset(region=region, sites=sites, responses=y)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(dataset, out / "data.csv")
    save_metadata(
        out / "data.meta.json", region=region, n=cfg["n"], seed=seed, density=density
    )
    (out / "provenance.json").write_text(json.dumps(_provenance(cfg), indent=2))
    return 0


def _error_case(cfg) -> mc.ErrorCase:
    if cfg is None:
        return mc.ErrorCase("iid", sigma2=1.0)
    kind = cfg.get("kind", "iid")
    if kind == "iid":
        return mc.ErrorCase("iid", sigma2=cfg.get("sigma2", 1.0))
    return mc.ErrorCase(
        "car1",
        sigma2=cfg.get("sigma2", 0.01),
        lam=cfg.get("lambda", 1.0),
        tau2=cfg.get("tau2", 0.01),
        n_knots=cfg.get("n_knots", 800),
        buffer=cfg.get("buffer", 2.0),
    )


FIT_KEYS = {"p", "kernel", "h", "z", "z_grid", "pilot_h", "variance_h", "taper_b", "tau"}


def cmd_fit(args) -> int:
    cfg = _load_config(args.config, FIT_KEYS)
    dataset = load_csv(args.data)
    d = dataset.d
    kern = _kernel(cfg.get("kernel"), d)
    config = FitConfig(
        p=cfg.get("p", 1),
        kernel=kern,
        h=tuple(cfg["h"]),
        pilot_h=tuple(cfg["pilot_h"]) if "pilot_h" in cfg else None,
    )
    if "z" in cfg:
        zs = [tuple(cfg["z"])]
    elif "z_grid" in cfg:
        axes = [np.asarray(a, dtype=float) for a in cfg["z_grid"]]
        mesh = np.meshgrid(*axes, indexing="ij")
        zs = list(zip(*(m.ravel() for m in mesh)))
    else:
        raise ConfigError("fit config needs 'z' or 'z_grid'")

    with_ci = "taper_b" in cfg
    tau = cfg.get("tau", 0.05)
    taper = kernels.TaperSpec(widths=tuple(cfg["taper_b"])) if with_ci else None
    variance_h = tuple(cfg.get("variance_h", cfg["h"]))
    mom = config.moments()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for z in zs:
        zarr = np.asarray(z, dtype=float)
        try:
            fit = fit_at(dataset, config, zarr)
            bias = (
                estimate_bias(dataset, config, zarr) if config.pilot_h else None
            )
            fit.bias_hat = bias
            varest = None
            if with_ci:
                res_cfg = FitConfig(p=config.p, kernel=kern, h=variance_h)
                mhat = make_residual_provider(dataset, res_cfg)
                varest = variance_hat(dataset, mhat, kern, variance_h, taper, zarr)
            for k, idx in enumerate(fit.layout.indices):
                row = {
                    "z": ";".join(f"{v:g}" for v in z),
                    "index": "".join(map(str, idx)),
                    "estimate": fit.derivative(idx),
                    "bias": (
                        ""
                        if bias is None
                        else _deriv_bias(config, bias, idx)
                    ),
                    "boundary": int(fit.boundary_flag),
                    "error": "",
                }
                if varest is not None:
                    lo, hi = confidence_interval(fit, varest, mom, idx, tau)
                    row["W_hat"] = varest.W_hat
                    row["ci_lo"], row["ci_hi"] = lo, hi
                rows.append(row)
        except (FitError, ValueError) as exc:
            rows.append(
                {
                    "z": ";".join(f"{v:g}" for v in z),
                    "index": "",
                    "estimate": "",
                    "bias": "",
                    "boundary": "",
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
    fields = ["z", "index", "estimate", "bias", "boundary", "error"]
    if with_ci:
        fields += ["W_hat", "ci_lo", "ci_hi"]
    with (out / "fits.csv").open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)
    (out / "provenance.json").write_text(json.dumps(_provenance(cfg), indent=2))
    return 0


def _deriv_bias(config, bias_vec, idx):
    from .lpfit import derivative_bias

    return derivative_bias(config, bias_vec, idx)


MC_KEYS = {
    "reps", "n", "A", "density", "mean", "mean_offset", "error", "p", "kernel",
    "fit_h", "pilot_h", "variance_h", "taper_b", "z", "tau", "master_seed",
    "outlier_threshold", "max_failure_fraction",
}


def cmd_mc(args) -> int:
    cfg = _load_config(args.config, MC_KEYS)
    kern_cfg = cfg.get("kernel", {})
    spec = mc.ExperimentSpec(
        reps=cfg["reps"],
        n=cfg["n"],
        A=tuple(cfg["A"]),
        density=_density(cfg.get("density")),
        mean=cfg.get("mean", "paper_mean"),
        mean_offset=cfg.get("mean_offset", 0.0),
        error=_error_case(cfg.get("error")),
        p=cfg.get("p", 1),
        kernel_family=kern_cfg.get("family", "product-triangular"),
        C_K=kern_cfg.get("C_K", 1.0),
        fit_h=tuple(cfg.get("fit_h", (0.2, 0.2))),
        pilot_h=tuple(cfg.get("pilot_h", (0.25, 0.25))),
        variance_h=tuple(cfg.get("variance_h", (0.25, 0.25))),
        taper_b=tuple(cfg.get("taper_b", (8.0, 8.0))),
        z=tuple(cfg.get("z", (0.0,) * len(cfg["A"]))),
        tau=cfg.get("tau", 0.05),
        master_seed=args.seed if args.seed is not None else cfg.get("master_seed", 0),
        outlier_threshold=cfg.get("outlier_threshold", -10.0),
    )
    summary = mc.run_experiment(spec, threads=args.threads)
    summary.metadata["provenance"] = _provenance(cfg)
    mc.write_outputs(summary, args.out)
    max_frac = cfg.get("max_failure_fraction", 0.05)
    if len(summary.failures) > max_frac * spec.reps:
        print(
            f"warning: {len(summary.failures)} of {spec.reps} replications failed",
            file=sys.stderr,
        )
        return 2
    return 0


TWO_SAMPLE_KEYS = {"p", "kernel", "h", "variance_h", "taper_b", "z", "idx", "tau"}


def cmd_two_sample(args) -> int:
    cfg = _load_config(args.config, TWO_SAMPLE_KEYS)
    ds1 = load_csv(args.data1)
    ds2 = load_csv(args.data2)
    if ds1.region != ds2.region:
        raise ConfigError("datasets declare different sampling regions")
    d = ds1.d
    kern = _kernel(cfg.get("kernel"), d)
    h = tuple(cfg["h"])
    config = FitConfig(p=cfg.get("p", 1), kernel=kern, h=h)
    z = np.asarray(cfg.get("z", (0.0,) * d), dtype=float)
    idx = parse_index(cfg.get("idx", ""))
    tau = cfg.get("tau", 0.05)
    taper = kernels.TaperSpec(widths=tuple(cfg["taper_b"]))
    variance_h = tuple(cfg.get("variance_h", h))

    fit1 = fit_at(ds1, config, z)
    fit2 = fit_at(ds2, config, z)
    res_cfg = FitConfig(p=config.p, kernel=kern, h=variance_h)
    mhat1 = make_residual_provider(ds1, res_cfg)
    mhat2 = make_residual_provider(ds2, res_cfg)
    V = two_sample_variance(ds1, ds2, kern, variance_h, taper, z, mhat1, mhat2)
    report = two_sample_test(fit1, fit2, V, config.moments(), idx, tau)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = asdict(report)
    payload["idx"] = "".join(map(str, report.idx))
    payload["provenance"] = _provenance(cfg)
    (out / "report.json").write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps({k: payload[k] for k in ("T", "V_check", "p_value", "decision")}))
    return 0


MOMENTS_KEYS = {"d", "p", "kernel"}


def cmd_moments(args) -> int:
    cfg = _load_config(args.config, MOMENTS_KEYS)
    d, p = cfg.get("d", 2), cfg.get("p", 1)
    kern = _kernel(cfg.get("kernel"), d)
    config = FitConfig(p=p, kernel=kern, h=(0.1,) * d)
    mom = config.moments()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "S": mom.S.tolist(),
        "Kcal": mom.Kcal.tolist(),
        "B": mom.B.tolist(),
        "kappa0_r2": mom.kappa0_r2,
        "indices": ["".join(map(str, i)) for i in config.layout().indices],
        "top_indices": ["".join(map(str, i)) for i in config.layout().top_indices],
        "provenance": _provenance(cfg),
    }
    (out / "moments.json").write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="spatial-lp",
        description="Local polynomial trend regression for spatial data",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit the trend surface at points")
    common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mc", help="run a Monte Carlo coverage experiment")
    common(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("two-sample", help="test equality of derivatives")
    common(p)
    p.add_argument("--data1", required=True)
    p.add_argument("--data2", required=True)
    p.set_defaults(func=cmd_two_sample)

    p = sub.add_parser("moments", help="emit kernel moment matrices")
    common(p)
    p.set_defaults(func=cmd_moments)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
