"""Re-derive the numbers in a run's report.json from the other artifacts.

Usage: python scripts/check_report.py OUTPUT_DIR

Uses only numpy and the standard library, and its own implementation of
the dictionary formulas, iteration loop and flood fill, so agreement is a
genuine cross-check of the pipeline. Exits 1 on any mismatch.
"""
import csv
import json
import sys
from collections import deque
from pathlib import Path

import numpy as np


def read_header_file(path):
    head, rows = {}, []
    with open(path) as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if line == "data":
                break
            key, _, value = line.partition(" ")
            head[key] = value
        for line in fh:
            re_, im_ = line.split(",")
            rows.append(complex(float(re_), float(im_)))
    return head, np.array(rows)


def read_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return cols, data


def basis(desc, x):
    """Dictionary values at the rows of x, straight from the formulas."""
    dim, n = desc["dim"], desc["freq_count"]
    c = np.array(desc["center"])
    ks = np.array(np.meshgrid(*[np.arange(-(n - 1), n)] * dim, indexing="ij")).reshape(dim, -1).T
    d = x - c
    theta = 2 * np.pi * d @ ks.T / desc["period_scale"]
    env = 1.0 if desc["gauss_scale"] is None else np.exp(-np.sum(d * d, axis=1) / desc["gauss_scale"])[:, None]
    if desc["family"] == "complex_fourier_nd":
        return np.exp(1j * theta) * env
    return np.cos(theta) * env + 0j


def component(region, seed):
    out = np.zeros_like(region)
    if not region[seed]:
        return out
    out[seed] = True
    todo = deque([seed])
    while todo:
        cell = todo.popleft()
        for d in range(region.ndim):
            for s in (-1, 1):
                nb = list(cell)
                nb[d] += s
                nb = tuple(nb)
                if 0 <= nb[d] < region.shape[d] and region[nb] and not out[nb]:
                    out[nb] = True
                    todo.append(nb)
    return out


def main(out):
    out = Path(out)
    rep = json.loads((out / "report.json").read_text())
    cfg = json.loads((out / "config.json").read_text())
    results = []

    def check(name, got, want, tol=1e-9):
        ok = got == want if isinstance(want, (bool, str)) else bool(np.allclose(got, want, rtol=tol, atol=tol))
        results.append(ok)
        if np.size(want) > 2:
            shown = f"max deviation {np.max(np.abs(np.asarray(got) - np.asarray(want))):.3g}"
        else:
            shown = f"report={want} recomputed={np.asarray(got).tolist()}"
        print(f"{'ok  ' if ok else 'FAIL'} {name}: {shown}")

    ohead, T = read_header_file(out / "operator.txt")
    n = int(ohead["size"])
    T = T.reshape(n, n)
    check("basis_size", n, rep["basis_size"])
    check("rank", int(ohead["rank"]), rep["rank"])
    check("fit_residual", float(ohead["residual"]), rep["fit_residual"])

    desc = json.loads(ohead["dictionary"])
    unit = n // 2  # zero frequency sits in the middle of the symmetric index set
    tol, K, mode = cfg["iteration"]["tol"], cfg["iteration"]["K"], cfg["iteration"]["mode"]
    prev = np.eye(n, dtype=complex) if mode == "matrix" else np.eye(n, dtype=complex)[:, unit]
    k, diffs = 0, []
    while True:
        cur = T @ prev
        k += 1
        diffs.append(float(np.linalg.norm(cur - prev)))
        if diffs[-1] <= tol or k >= K:
            break
        prev = cur
    coeffs = cur[:, unit] if mode == "matrix" else cur
    check("k", k, rep["k"])
    check("final_residual", diffs[-1], rep["final_residual"], 1e-7)

    uhead, ucoef = read_header_file(out / "u_zk.txt")
    check("u_zk coefficients", ucoef, coeffs, 1e-7)
    x_eq = np.array(desc["center"])[None, :]
    check("u_at_eq", float((basis(desc, x_eq) @ ucoef).real[0]), rep["u_at_eq"])

    cols, field = read_csv(out / "field.csv")
    dim = desc["dim"]
    pts = field[:, :dim]
    u = field[:, cols.index("u")]
    ui = field[:, cols.index("u_imag")]
    mask = field[:, cols.index("mask")].astype(bool)
    rows = np.linspace(0, len(pts) - 1, min(len(pts), 500)).astype(int)
    z = basis(desc, pts[rows]) @ ucoef
    check("field u column", z.real, u[rows], 1e-8)

    check("volume_fraction", float(mask.mean()), rep["volume_fraction"])
    _, mcsv = read_csv(out / "mask.csv")
    check("mask.csv agrees with field.csv", bool(np.array_equal(mcsv[:, dim].astype(bool), mask)), True)
    check("imag_residue", float(np.abs(ui).max() / np.abs(u).max()), rep["imag_residue"])

    res = tuple(rep["resolution"])
    grid_u = u.reshape(res)
    axes = [np.unique(pts[:, d]) for d in range(dim)]
    seed = tuple(int(np.argmin(np.abs(a - c))) for a, c in zip(axes, desc["center"]))
    c = rep["threshold"]
    check("mask is the seeded component", bool(np.array_equal(component(grid_u >= c, seed).ravel(), mask)), True)
    for label, level in (("half", c / 2), ("base", c), ("double", 2 * c)):
        check(f"sensitivity {label}", float(component(grid_u >= level, seed).mean()), rep["sensitivity"][label])
    for d in range(dim):
        hit = pts[mask, d]
        check(f"roa_interval axis {d + 1}", [hit.min(), hit.max()], rep["roa_interval"][d])

    col = "smooth_lie" if rep["verified_source"] == "smooth" else "lie"
    lie = field[:, cols.index(col)]
    sel = mask & (np.linalg.norm(pts - x_eq, axis=1) > rep["exclusion_radius"])
    vf = float(np.mean(lie[sel] > rep["margin"])) if sel.any() else 0.0
    check("verified_fraction", vf, rep["verified_fraction"])

    print(f"{sum(results)}/{len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    sys.exit(main(sys.argv[1]))
