"""Two-component Klein-Gordon approaching the Schrodinger limit as c grows.

For each speed of light the script compares the lattice positive-energy
branch with mc^2 + hbar^2 k~^2 / 2m, and measures how much weight a
packet started in the upper component leaks into the lower one.  Both
shrink like 1/c^2.
"""

import argparse

import numpy as np

from bundlerqm.evolution import propagate
from bundlerqm.harness import all_mode_oracles, gaussian_packet
from bundlerqm.lattice import make_grid
from bundlerqm.models import PhysicalParams, kg_feshbach_villars


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=64)
    ap.add_argument("--length", type=float, default=20.0)
    ap.add_argument("--speeds", type=float, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--kmax", type=float, default=1.0, help="largest |k~| in the energy comparison")
    args = ap.parse_args()

    grid = make_grid(1, args.points, args.length)
    print(f"{'c':>6} {'energy dev':>12} {'lower weight':>13}")
    prev = None
    for c in args.speeds:
        p = PhysicalParams(mass=1.0, c=c)
        H = kg_feshbach_villars(grid, p)
        worst = 0.0
        for o in all_mode_oracles(H, p):
            kt = grid.discrete_momentum(o.mode)
            k2 = float(np.sum(kt ** 2))
            if k2 > args.kmax ** 2:
                continue
            nonrel = p.rest_energy + p.hbar ** 2 * k2 / (2 * p.mass)
            worst = max(worst, abs(o.sorted_energies()[-1].real - nonrel))
        psi0 = gaussian_packet(grid, 2, width=2.0, momentum=0.5, spinor=np.array([1.0, 0.0]))
        period = 2 * np.pi * p.hbar / p.rest_energy
        traj = propagate(H, psi0, 0.0, 5 * period, 500, keep_every=50)
        ns = grid.n_sites
        lower = max(float(np.sum(np.abs(s[ns:]) ** 2) / np.sum(np.abs(s) ** 2)) for s in traj.states)
        ratio = "" if prev is None else f"  (x{prev / worst:.2f})"
        print(f"{c:6.1f} {worst:12.3e} {lower:13.3e}{ratio}")
        prev = worst


if __name__ == "__main__":
    main()
