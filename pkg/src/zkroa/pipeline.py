"""End-to-end stages shared by the CLI: sample, stack, fit, iterate,
extract, smooth, verify. Each stage writes its artifact as soon as it
finishes so a later failure leaves the earlier files in place."""
from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import edmd, roa, smooth
from .dictionary import Dictionary, make_dictionary
from .errors import MissingArtifactError, ZKError
from .systems import SystemSpec, builtin

log = logging.getLogger(__name__)

OPERATOR_FILE = "operator.txt"
U_FILE = "u_zk.txt"
MODEL_FILE = "smooth_model.txt"
FIELD_FILE = "field.csv"
MASK_FILE = "mask.csv"
SPECTRUM_FILE = "spectrum.csv"
REPORT_FILE = "report.json"
CONFIG_FILE = "config.json"


class StageError(ZKError):
    """Wraps a failure with the name of the stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


@dataclass
class Run:
    out: Path
    timings: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)
    report: dict = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        log.info("stage %s", name)
        try:
            yield
        except ZKError as exc:
            raise StageError(name, exc) from exc
        finally:
            self.timings[name] = time.perf_counter() - t0

    def record(self, filename: str) -> Path:
        if filename not in self.manifest:
            self.manifest.append(filename)
        return self.out / filename

    def write_report(self, **extra) -> Path:
        body = {**self.report, **extra, "timings": self.timings, "manifest": self.manifest}
        path = self.out / REPORT_FILE
        path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
        return path


def fmt(x) -> str:
    return f"{float(x):.17g}"


def system_descriptor(cfg: dict) -> dict:
    return {"id": cfg["system"]["id"], "overrides": dict(cfg["system"].get("overrides", {}))}


def system_from_descriptor(desc: dict) -> SystemSpec:
    if not desc:
        raise MissingArtifactError("artifact carries no system descriptor")
    return builtin(desc["id"], **desc.get("overrides", {}))


def dictionary_from_config(cfg: dict, sys: SystemSpec) -> Dictionary:
    d = cfg["dictionary"]
    return make_dictionary(d["family"], int(d["freq_count"]), sys.dim,
                           period_scale=d.get("period_scale"),
                           gauss_scale=d.get("gauss_scale"),
                           center=sys.x_eq)


def uniform_grid(sys: SystemSpec, per_axis) -> np.ndarray:
    """Tensor grid of ``per_axis`` points per axis, endpoints included."""
    axes = [np.linspace(lo, hi, int(n)) for lo, hi, n in zip(sys.lo, sys.hi, per_axis)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, sys.dim)


def make_samples(cfg: dict, sys: SystemSpec) -> np.ndarray:
    s = cfg["sampling"]
    if s["kind"] == "grid":
        return uniform_grid(sys, s["per_axis"])
    rng = np.random.default_rng(int(s["seed"]))
    return sys.lo + (sys.hi - sys.lo) * rng.random((int(s["count"]), sys.dim))


def _require(path: Path) -> Path:
    if not Path(path).is_file():
        raise MissingArtifactError(f"missing artifact {path}; run the upstream stage first")
    return Path(path)


# ------------------------------------------------------------------ stages

def learn(cfg: dict, run: Run) -> edmd.OperatorMatrix:
    sys = builtin(cfg["system"]["id"], **cfg["system"].get("overrides", {}))
    dictionary = dictionary_from_config(cfg, sys)
    with run.stage("sample"):
        samples = make_samples(cfg, sys)
    with run.stage("stack"):
        data = edmd.stack_data(sys, dictionary, samples, float(cfg["dt"]), int(cfg["steps"]))
    with run.stage("fit"):
        op = edmd.fit_operator(data, float(cfg["svd_tol"]))
        op.meta["system"] = system_descriptor(cfg)
        edmd.write_operator(run.record(OPERATOR_FILE), op)
    run.report.update({
        "samples": int(len(samples)),
        "basis_size": dictionary.size,
        "exited_samples": int(data.meta["exited"]),
        "fit_residual": op.residual,
        "rank": op.rank,
    })
    top_k = int(cfg.get("spectrum_top_k", 0))
    if top_k > 0:
        with run.stage("spectrum"):
            pairs = edmd.spectrum(op.T, min(top_k, op.size), dt=float(cfg["dt"]))
            edmd.write_spectrum_csv(run.record(SPECTRUM_FILE), pairs)
        run.report["leading_mu"] = [[p.mu.real, p.mu.imag] for p in pairs]
    return op


def iterate(cfg: dict, run: Run, op: edmd.OperatorMatrix | None = None) -> roa.UApprox:
    if op is None:
        op = edmd.read_operator(_require(run.out / OPERATOR_FILE))
    sys = system_from_descriptor(op.meta.get("system"))
    dictionary = Dictionary.from_descriptor(op.meta["dictionary"])
    it = cfg["iteration"]
    with run.stage("iterate"):
        u = roa.build_u_zk(op.T, dictionary, sys.x_eq, float(it["tol"]), int(it["K"]), it["mode"])
        u.meta["system"] = op.meta.get("system")
        roa.write_u(run.record(U_FILE), u)
    run.report.update({
        "k": u.iterations,
        "final_residual": u.final_residual,
        "residuals": list(u.residuals),
        "mode": u.mode,
        "u_at_eq": float(u.value(sys.x_eq[None, :])[0]),
    })
    return u


def predict(cfg: dict, run: Run, u: roa.UApprox | None = None,
            model: smooth.SmoothModel | None = None) -> roa.RoaMask:
    """Grid evaluation, ROA extraction and the field/mask CSV dumps."""
    if u is None:
        u = roa.read_u(_require(run.out / U_FILE))
    sys = system_from_descriptor(u.meta.get("system"))
    r = cfg["roa"]
    with run.stage("extract"):
        grid = roa.make_grid(sys, r["resolution"])
        pts = grid.centers()
        z = u.complex_value(pts)
        values = z.real.reshape(grid.resolution)
        mask = roa.extract_roa(u, sys, grid.resolution, float(r["threshold"]), values=values)
        sens = roa.threshold_sensitivity(u, sys, grid.resolution, float(r["threshold"]), values=values)
        lie = roa.lie_derivative(sys, u, pts)
        top = np.abs(z.real).max()
        residue = float(np.abs(z.imag).max() / top) if top > 0 else float("inf")
    run.report.update({
        "resolution": list(grid.resolution),
        "threshold": float(r["threshold"]),
        "volume_fraction": mask.volume_fraction,
        "sensitivity": sens,
        "imag_residue": residue,
        "roa_interval": [list(mask.interval(d)) for d in range(sys.dim)],
        "exclusion_radius": float(r["exclusion_radius"]),
        "margin": float(r["margin"]),
    })
    if not residue <= 0.1:
        log.warning("imaginary residue %.3g exceeds 0.1 of max |U|", residue)

    extra = {}
    if model is not None:
        extra["smooth_u"] = model.value(pts)
        extra["smooth_lie"] = roa.lie_derivative(sys, model, pts)

    with run.stage("verify"):
        vf_u = roa.verified_fraction(sys, u, mask, float(r["exclusion_radius"]),
                                     float(r["margin"]), lie=lie)
        run.report["verified_fraction_u"] = vf_u
        run.report["verified_fraction"] = vf_u
        run.report["verified_source"] = "u_zk"
        if model is not None:
            vf_s = roa.verified_fraction(sys, model, mask, float(r["exclusion_radius"]),
                                         float(r["margin"]), lie=extra["smooth_lie"])
            run.report["verified_fraction_smooth"] = vf_s
            run.report["verified_fraction"] = vf_s
            run.report["verified_source"] = "smooth"
    run.report["accepted"] = bool(residue <= 0.1 and 0.9 <= run.report.get("u_at_eq", 1.0) <= 1.1)

    with run.stage("dump"):
        write_field_csv(run.record(FIELD_FILE), pts, z, lie, mask.mask.ravel(), extra)
        write_mask_csv(run.record(MASK_FILE), pts, mask.mask.ravel())
    return mask


def fit_smooth(cfg: dict, run: Run, u: roa.UApprox | None = None) -> smooth.SmoothModel:
    if u is None:
        u = roa.read_u(_require(run.out / U_FILE))
    sys = system_from_descriptor(u.meta.get("system"))
    s = cfg["smooth"]
    with run.stage("smooth"):
        pts = uniform_grid(sys, s["per_axis"])
        model = smooth.train(pts, u.value(pts), [int(w) for w in s["widths"]],
                             int(s["epochs"]), float(s["mse_tol"]), seed=int(s["seed"]),
                             lr=float(s["lr"]), momentum=float(s["momentum"]))
        smooth.write_model(run.record(MODEL_FILE), model)
    run.report.update({"smooth_epochs": model.epochs, "smooth_mse": model.final_mse})
    return model


def run_all(cfg: dict, out) -> dict:
    """Full pipeline; returns the report dict (also written to disk)."""
    run = Run(Path(out))
    run.out.mkdir(parents=True, exist_ok=True)
    (run.out / CONFIG_FILE).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    run.record(CONFIG_FILE)
    run.report["system"] = system_descriptor(cfg)
    try:
        op = learn(cfg, run)
        u = iterate(cfg, run, op)
        model = fit_smooth(cfg, run, u) if cfg["smooth"]["enabled"] else None
        predict(cfg, run, u, model)
    except StageError as exc:
        run.write_report(status="failed", failed_stage=exc.stage, error=str(exc.cause))
        raise
    run.write_report(status="ok")
    return json.loads((run.out / REPORT_FILE).read_text())


# ------------------------------------------------------------------- CSVs

def write_field_csv(path, pts, z, lie, mask, extra: dict | None = None) -> None:
    """One row per grid cell: coordinates, Re/Im U, Lie derivative, mask
    bit and any extra named columns."""
    extra = extra or {}
    dim = pts.shape[1]
    cols = [f"x_{d + 1}" for d in range(dim)] + ["u", "u_imag", "lie", "mask"] + list(extra)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(pts)):
            row = [fmt(v) for v in pts[i]]
            row += [fmt(z[i].real), fmt(z[i].imag), fmt(lie[i]), str(int(mask[i]))]
            row += [fmt(extra[k][i]) for k in extra]
            fh.write(",".join(row) + "\n")


def write_mask_csv(path, pts, mask) -> None:
    dim = pts.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join([f"x_{d + 1}" for d in range(dim)] + ["mask"]) + "\n")
        for p, m in zip(pts, mask):
            fh.write(",".join([fmt(v) for v in p] + [str(int(m))]) + "\n")


def read_mask_csv(path, sys: SystemSpec, threshold: float = float("nan")) -> roa.RoaMask:
    data = np.loadtxt(_require(path), delimiter=",", skiprows=1, ndmin=2)
    resolution = tuple(len(np.unique(data[:, d])) for d in range(sys.dim))
    grid = roa.make_grid(sys, resolution)
    if not np.allclose(grid.centers(), data[:, :sys.dim], rtol=0, atol=1e-9):
        raise ValueError(f"{path}: cell centres do not match the system region")
    mask = data[:, sys.dim].astype(bool).reshape(resolution)
    return roa.RoaMask(grid, mask, threshold, np.full(resolution, np.nan))
