"""Time the compiled and pure-Python stepping loops on the worked example.

    python benchmarks/bench_kernels.py [--nx 100 200 400] [--steps 4000] [--repeat 3]

The backends sum in different orders, and the step matrix has a condition
number near ``dt lambda / h^4``, so trajectories agree to rounding only; the
script checks agreement to ``AGREE`` relative to the state size first.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from beamstab.certify import make_certificate
from beamstab.model import REFERENCE_P, REFERENCE_S, reference_gains, reference_initial_condition, reference_system
from beamstab.pdesim import BACKENDS, get_model, get_stepper


AGREE = 1e-5


def best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scenario", default="c")
    args = ap.parse_args(argv)

    sys_, g, ic = reference_system(), reference_gains(), reference_initial_condition()
    cert = make_certificate(sys_, g, REFERENCE_P, REFERENCE_S)
    if "compiled" not in BACKENDS:
        print("compiled backend not built; only the python loop is available")
    print(f"{'nx':>6}{'dim':>7}{'steps':>8}" + "".join(f"{b + ' [s]':>16}" for b in BACKENDS) + f"{'speedup':>10}")
    for nx in args.nx:
        model = get_model(sys_, g, args.scenario, nx)
        stepper = get_stepper(model, 5e-4)
        y0 = model.initial_vector(ic)
        R = model.energy_root(cert.P, cert.S)
        runs = {b: stepper.run(y0, args.steps, 50, R, b) for b in BACKENDS}
        ref = runs[BACKENDS[0]]
        for b, (Y, E) in runs.items():
            scale = np.abs(ref[0]).max()
            if np.abs(Y - ref[0]).max() > AGREE * scale or np.abs(E - ref[1]).max() > AGREE * ref[1].max():
                raise SystemExit(f"backend {b} disagrees with {BACKENDS[0]} at nx={nx}")
        times = {b: best_of(lambda b=b: stepper.run(y0, args.steps, 50, R, b), args.repeat) for b in BACKENDS}
        speed = times["python"] / times["compiled"] if "compiled" in times else 1.0
        print(f"{nx:>6}{model.dim:>7}{args.steps:>8}" + "".join(f"{times[b]:>16.4f}" for b in BACKENDS) + f"{speed:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
