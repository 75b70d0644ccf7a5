#!/usr/bin/env python3
"""Cross-check the numerical pipeline against exact hyperbolic models.

Sweeps the scattering map, renormalized lengths (both evaluation routes),
and renormalized boundary distances over the half-plane and disc models,
where every quantity has a closed form, and prints worst-case errors.
Writes a CSV table per sweep under --out.
"""
import argparse
import math
import time
from pathlib import Path

import numpy as np

from ahx.cli import write_csv
from ahx.flow import scattering_map, trace_geodesic
from ahx.metric import disc_family, halfplane_family
from ahx.renorm import boundary_distance, mellin_length, renormalized_length


def sweep_scattering(out: Path) -> float:
    fam = halfplane_family()
    rows = []
    worst = 0.0
    for y in np.linspace(-3.0, 3.0, 7):
        for eta in (-4.0, -2.0, -1.0, 0.5, 1.0, 2.0, 4.0):
            res = scattering_map(fam, (y, eta), tol=1e-11)
            exact_y = y + 2.0 / eta
            err = max(abs(float(res.y[0]) - exact_y),
                      abs(float(res.eta[0]) - eta))
            worst = max(worst, err)
            rows.append({"y": float(y), "eta": eta,
                         "y_out": float(res.y[0]),
                         "eta_out": float(res.eta[0]),
                         "exact_y_out": exact_y, "err": err})
    write_csv(out / "oracle_scattering.csv",
              ["y", "eta", "y_out", "eta_out", "exact_y_out", "err"],
              rows, "oracle-sweep")
    return worst


def sweep_lengths(out: Path) -> float:
    fam = halfplane_family()
    rows = []
    worst = 0.0
    for eta in (0.5, 1.0, 2.0, 4.0):
        traj = trace_geodesic(fam, (0.0, eta), tol=1e-12)
        exact = 2.0 * math.log(2.0 / eta)
        reg = renormalized_length(traj)
        mel = mellin_length(traj)
        err = max(abs(reg.value - exact), abs(mel.value - exact))
        worst = max(worst, err)
        rows.append({"eta": eta, "regularized": reg.value,
                     "mellin": mel.value, "residue": mel.residue,
                     "exact": exact, "err": err})
    write_csv(out / "oracle_lengths.csv",
              ["eta", "regularized", "mellin", "residue", "exact", "err"],
              rows, "oracle-sweep")
    return worst


def sweep_distances(out: Path) -> float:
    fam = disc_family()
    rows = []
    worst = 0.0
    for theta in np.linspace(0.4, math.pi, 10):
        res = boundary_distance(fam, 0.0, float(theta))
        exact = 2.0 * math.log(2.0 * math.sin(0.5 * theta))
        err = abs(res.value - exact)
        worst = max(worst, err)
        rows.append({"theta": float(theta), "distance": res.value,
                     "exact": exact, "err": err})
    write_csv(out / "oracle_distances.csv",
              ["theta", "distance", "exact", "err"], rows, "oracle-sweep")
    return worst


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="oracle_out")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    e1 = sweep_scattering(out)
    print(f"scattering worst error:      {e1:.3e}")
    e2 = sweep_lengths(out)
    print(f"renormalized-length worst:   {e2:.3e}")
    e3 = sweep_distances(out)
    print(f"boundary-distance worst:     {e3:.3e}")
    print(f"done in {time.time() - t0:.1f}s; tables in {out}/")


if __name__ == "__main__":
    main()
