"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure
(divergence, blow-up, degenerate data), 4 missing upstream artifact.
The worker count for trajectory integration comes from ``ZK_WORKERS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys as _sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import pipeline, roa, smooth
from .errors import ConfigError, MissingArtifactError, ZKError
from .integrate import clip_to_region, simulate_augmented, write_trajectory_csv
from .systems import builtin, normalize_id

log = logging.getLogger("zkroa")


def _ints(text: str) -> list:
    try:
        return [int(v) for v in str(text).lower().replace("x", ",").split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc


def _floats(text: str) -> list:
    try:
        return [float(v) for v in str(text).split(",") if v]
    except ValueError as exc:
        raise ConfigError(f"cannot parse number list {text!r}") from exc


def add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (flags override the config file)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--system", help="benchmark id, e.g. cubic1d, vdp-reversed, stiff-vdp-6")
    g.add_argument("--dt", type=float)
    g.add_argument("--steps", type=int, help="points per trajectory")
    g.add_argument("--samples", help="grid points per axis, e.g. 1001 or 60x60")
    g.add_argument("--random-samples", type=int, metavar="COUNT",
                   help="uniform random samples instead of a grid")
    g.add_argument("--seed", type=int, help="sampling seed")
    g.add_argument("--family", choices=["cos_gauss_1d", "cos_gauss_nd", "complex_fourier_nd"])
    g.add_argument("--freq-count", type=int)
    g.add_argument("--period-scale", type=float)
    g.add_argument("--gauss-scale", type=float, help="envelope scale; 0 disables it")
    g.add_argument("--svd-tol", type=float)
    g.add_argument("--tol", type=float, help="iteration stopping tolerance")
    g.add_argument("--K", type=int, help="maximum number of iterations")
    g.add_argument("--mode", choices=["matrix", "vector"])
    g.add_argument("--resolution", help="ROA grid cells per axis, e.g. 601 or 200x200")
    g.add_argument("--threshold", type=float, help="superlevel threshold c")
    g.add_argument("--floor", type=float)
    g.add_argument("--exclusion-radius", type=float)
    g.add_argument("--margin", type=float)
    g.add_argument("--smooth", dest="smooth_enabled", action="store_true", default=None)
    g.add_argument("--no-smooth", dest="smooth_enabled", action="store_false")
    g.add_argument("--widths", help="hidden widths, e.g. 15,15")
    g.add_argument("--epochs", type=int)
    g.add_argument("--mse-tol", type=float)
    g.add_argument("--lr", type=float)
    g.add_argument("--smooth-samples", help="smoothing grid points per axis")
    g.add_argument("--spectrum-top-k", type=int)
    g.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress")


def flag_overrides(a: argparse.Namespace) -> dict:
    o: dict = {}

    def put(path, value):
        if value is None:
            return
        node = o
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value

    if a.system is not None:
        key, embedded = normalize_id(a.system)
        put(("system", "id"), key)
        put(("system", "overrides"), embedded)
    put(("dt",), a.dt)
    put(("steps",), a.steps)
    if a.samples is not None:
        put(("sampling", "kind"), "grid")
        put(("sampling", "per_axis"), _ints(a.samples))
    if a.random_samples is not None:
        put(("sampling", "kind"), "random")
        put(("sampling", "count"), a.random_samples)
    put(("sampling", "seed"), a.seed)
    put(("dictionary", "family"), a.family)
    put(("dictionary", "freq_count"), a.freq_count)
    put(("dictionary", "period_scale"), a.period_scale)
    if a.gauss_scale is not None:
        o.setdefault("dictionary", {})["gauss_scale"] = a.gauss_scale or None
    put(("svd_tol",), a.svd_tol)
    put(("iteration", "tol"), a.tol)
    put(("iteration", "K"), a.K)
    put(("iteration", "mode"), a.mode)
    if a.resolution is not None:
        put(("roa", "resolution"), _ints(a.resolution))
    put(("roa", "threshold"), a.threshold)
    put(("roa", "floor"), a.floor)
    put(("roa", "exclusion_radius"), a.exclusion_radius)
    put(("roa", "margin"), a.margin)
    put(("smooth", "enabled"), a.smooth_enabled)
    if a.widths is not None:
        put(("smooth", "widths"), _ints(a.widths))
    put(("smooth", "epochs"), a.epochs)
    put(("smooth", "mse_tol"), a.mse_tol)
    put(("smooth", "lr"), a.lr)
    if a.smooth_samples is not None:
        put(("smooth", "per_axis"), _ints(a.smooth_samples))
    put(("spectrum_top_k",), a.spectrum_top_k)
    put(("output",), a.out)
    return o


def resolve_config(a: argparse.Namespace, base: dict | None = None) -> dict:
    # --system alone starts from that benchmark's preset, not the 1D defaults
    if base is None and a.system is not None:
        base = cfgmod.benchmark_config(a.system)
    return cfgmod.load_config(a.config, flag_overrides(a), base=base)


def _open_run(cfg: dict) -> pipeline.Run:
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    return pipeline.Run(out)


def _finish(run: pipeline.Run, name: str) -> None:
    path = run.out / f"{name}_report.json"
    body = {**run.report, "timings": run.timings, "manifest": run.manifest}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    print(json.dumps(run.report, sort_keys=True))


# ----------------------------------------------------------- subcommands

def cmd_run(a, base=None):
    cfg = resolve_config(a, base)
    report = pipeline.run_all(cfg, cfg["output"])
    summary = {k: report.get(k) for k in (
        "k", "final_residual", "u_at_eq", "volume_fraction", "verified_fraction",
        "imag_residue", "roa_interval")}
    print(json.dumps(summary, sort_keys=True))
    print(f"artifacts written to {cfg['output']}")


def cmd_benchmark(a):
    return cmd_run(a, base=cfgmod.benchmark_config(a.id))


def cmd_simulate(a):
    cfg = resolve_config(a)
    sys = builtin(cfg["system"]["id"], **cfg["system"].get("overrides", {}))
    x0 = np.array(_floats(a.x0))
    if x0.shape != (sys.dim,):
        raise ConfigError(f"--x0 needs {sys.dim} comma-separated values")
    traj = clip_to_region(simulate_augmented(sys, x0, float(cfg["dt"]), int(cfg["steps"])), sys)
    path = Path(a.csv) if a.csv else Path(cfg["output"]) / "trajectory.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(path, traj)
    info = {"exited": bool(traj.exited), "exit_index": traj.exit_index,
            "boundary_point": None if traj.boundary_point is None else list(map(float, traj.boundary_point)),
            "final_integral": float(traj.integrals[-1])}
    print(json.dumps(info))


def cmd_learn(a):
    cfg = resolve_config(a)
    run = _open_run(cfg)
    pipeline.learn(cfg, run)
    _finish(run, "learn")


def _output_dir(a) -> Path:
    """Output directory before full config resolution: flag, then file, then default."""
    if a.out:
        return Path(a.out)
    if a.config:
        return Path(cfgmod.load_config(a.config)["output"])
    return Path(cfgmod.DEFAULTS["output"])


def _downstream_config(a, meta: dict) -> dict:
    """Config for a stage that consumes an artifact: the artifact's system
    and dictionary replace the defaults, and the file and flags still win."""
    base = dict(cfgmod.DEFAULTS)
    if meta.get("system"):
        base = cfgmod.merge(base, {"system": meta["system"]})
    if meta.get("dictionary"):
        d = meta["dictionary"]
        base = cfgmod.merge(base, {"dictionary": {k: d[k] for k in
                                                  ("family", "freq_count", "period_scale", "gauss_scale")}})
    cfg = resolve_config(a, base)
    cfg["output"] = str(_output_dir(a))
    return cfg


def cmd_iterate(a):
    from .edmd import read_operator

    path = Path(a.operator) if a.operator else _output_dir(a) / pipeline.OPERATOR_FILE
    op = read_operator(pipeline._require(path))
    cfg = _downstream_config(a, op.meta)
    run = _open_run(cfg)
    pipeline.iterate(cfg, run, op)
    _finish(run, "iterate")


def _load_u(a) -> roa.UApprox:
    path = Path(a.u) if a.u else _output_dir(a) / pipeline.U_FILE
    return roa.read_u(pipeline._require(path))


def _u_meta(u: roa.UApprox) -> dict:
    return {"system": u.meta.get("system"), "dictionary": u.dictionary.descriptor()}


def _load_model(a, run):
    path = Path(a.model) if a.model else run.out / pipeline.MODEL_FILE
    if a.model or a.use_smooth:
        return smooth.read_model(pipeline._require(path))
    return None


def cmd_predict(a):
    u = _load_u(a)
    cfg = _downstream_config(a, _u_meta(u))
    run = _open_run(cfg)
    x_eq = pipeline.system_from_descriptor(u.meta.get("system")).x_eq
    run.report["u_at_eq"] = float(u.value(x_eq[None, :])[0])
    pipeline.predict(cfg, run, u, _load_model(a, run))
    _finish(run, "predict")


def cmd_smooth(a):
    u = _load_u(a)
    cfg = _downstream_config(a, _u_meta(u))
    run = _open_run(cfg)
    pipeline.fit_smooth(cfg, run, u)
    _finish(run, "smooth")


def cmd_verify(a):
    """Lie-derivative check of U_ZK (or the smooth model) over a mask.

    Uses ``--mask`` if given or present in the output directory, otherwise
    extracts the mask from U_ZK at the configured threshold.
    """
    u = _load_u(a)
    cfg = _downstream_config(a, _u_meta(u))
    run = _open_run(cfg)
    sys = pipeline.system_from_descriptor(u.meta.get("system"))
    model = _load_model(a, run)
    r = cfg["roa"]
    with run.stage("verify"):
        mask_path = Path(a.mask) if a.mask else run.out / pipeline.MASK_FILE
        if a.mask or mask_path.exists():
            mask = pipeline.read_mask_csv(mask_path, sys, float(r["threshold"]))
            source = str(mask_path)
        else:
            mask = roa.extract_roa(u, sys, r["resolution"], float(r["threshold"]))
            source = "extracted"
        field = model if model is not None else u
        frac = roa.verified_fraction(sys, field, mask, float(r["exclusion_radius"]), float(r["margin"]))
    run.report.update({
        "verified_fraction": frac,
        "verified_source": "smooth" if model is not None else "u_zk",
        "mask_source": source,
        "exclusion_radius": float(r["exclusion_radius"]),
        "margin": float(r["margin"]),
    })
    _finish(run, "verify")


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zkroa", description=(
        "Region-of-attraction estimation by learning a weighted Koopman "
        "operator from short trajectories."))
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        add_config_flags(sp)
        sp.set_defaults(func=func)
        return sp

    add("run", cmd_run, "full pipeline")
    sp = add("benchmark", cmd_benchmark, "canned desk-scale benchmark run")
    sp.add_argument("id", help="benchmark id")
    sp = add("simulate", cmd_simulate, "dump one clipped trajectory as CSV")
    sp.add_argument("--x0", required=True, help="initial state, comma separated")
    sp.add_argument("--csv", help="output CSV path")
    add("learn", cmd_learn, "sample, stack and fit the operator")
    sp = add("iterate", cmd_iterate, "iterate the operator into U_ZK")
    sp.add_argument("--operator", help="operator file (default OUT/operator.txt)")
    for name, func, text in (("predict-roa", cmd_predict, "grid evaluation and ROA extraction"),
                             ("smooth", cmd_smooth, "fit the smooth surrogate"),
                             ("verify", cmd_verify, "grid Lyapunov check")):
        sp = add(name, func, text)
        sp.add_argument("--u", help="U_ZK file (default OUT/u_zk.txt)")
        if name != "smooth":
            sp.add_argument("--model", help="smooth model file")
            sp.add_argument("--use-smooth", action="store_true",
                            help="use OUT/smooth_model.txt")
        if name == "verify":
            sp.add_argument("--mask", help="mask CSV (default OUT/mask.csv if present)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a.func(a)
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return exc.exit_code
    except ZKError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    _sys.exit(main())
