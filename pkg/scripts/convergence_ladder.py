"""Time-step convergence of the integrators on the harmonic companion and a lattice model."""

import argparse
import math

from bundlerqm.evolution import METHODS
from bundlerqm.harness import convergence_study
from bundlerqm.lattice import make_grid
from bundlerqm.models import PhysicalParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="harmonic", help="harmonic or a lattice model name")
    ap.add_argument("--points", type=int, default=32)
    ap.add_argument("--dt", type=float, nargs="+", default=[0.02, 0.01, 0.005, 0.0025])
    args = ap.parse_args()

    kwargs = {"params": PhysicalParams()}
    if args.model != "harmonic":
        kwargs["grid"] = make_grid(1, args.points, 2 * math.pi)
    for method in METHODS:
        try:
            report, data = convergence_study(args.model, args.dt, method, **kwargs)
        except ValueError as exc:
            print(f"{method}: skipped ({exc})")
            continue
        print(f"{method}: fitted order {data['order']:.3f}, {'pass' if report.passed else 'FAIL'}")
        for dt, err, drift in zip(data["dt"], data["error"], data["norm_drift"]):
            print(f"  dt={dt:<8g} error={err:.3e} norm drift={drift:.1e}")


if __name__ == "__main__":
    main()
