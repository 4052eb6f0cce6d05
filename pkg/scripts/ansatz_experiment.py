#!/usr/bin/env python3
"""Variational ground-energy sweeps for the periodic XX chain.

Runs the classical-input single-layer sequential ansatz at one or more field
strengths, over several seeds, and prints final energies against the exact
diagonalization value. Optionally writes one sweep-trace CSV per run.

Example:
    python3 scripts/ansatz_experiment.py --N 6 --fields 0.95,0 --seeds 3 \
        --rounds 24 --report-dir traces/
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from virtualmap.densesim import exact_ground_energy
from virtualmap.pauli import xx_hamiltonian
from virtualmap.varopt import SweepOptions, classical_ansatz


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--N", type=int, default=6, help="number of qubits")
    parser.add_argument("--J", type=float, default=1.0, help="coupling strength")
    parser.add_argument(
        "--fields", type=str, default="0.95,0", help="comma-separated field values"
    )
    parser.add_argument("--layers", type=int, default=1, help="ansatz layers")
    parser.add_argument("--seeds", type=int, default=3, help="number of seeds (0..k-1)")
    parser.add_argument("--rounds", type=int, default=24, help="sweep rounds")
    parser.add_argument(
        "--report-dir", type=Path, default=None, help="write per-run sweep CSVs here"
    )
    args = parser.parse_args(argv)

    fields = [float(tok) for tok in args.fields.split(",") if tok.strip() != ""]
    if args.report_dir is not None:
        args.report_dir.mkdir(parents=True, exist_ok=True)

    print(f"{'field':>7} {'seed':>5} {'E_init':>10} {'E_final':>14} {'rel error':>11} {'time':>7}")
    for field in fields:
        obs = xx_hamiltonian(args.N, coupling=args.J, field=field, periodic=True)
        e0, _ = exact_ground_energy(obs)
        best = None
        for seed in range(args.seeds):
            t0 = time.perf_counter()
            _, report = classical_ansatz(
                obs,
                layers=args.layers,
                options=SweepOptions(seed=seed, rounds=args.rounds),
                exact_energy=e0,
            )
            dt = time.perf_counter() - t0
            rel = report.relative_error()
            best = rel if best is None else min(best, rel)
            print(
                f"{field:>7.3g} {seed:>5d} {report.initial_energy:>10.5f} "
                f"{report.final_energy:>14.10f} {rel:>11.3e} {dt:>6.1f}s"
            )
            if args.report_dir is not None:
                path = args.report_dir / f"sweep_B{field:g}_seed{seed}.csv"
                path.write_text(report.to_csv())
        print(f"  field {field:g}: exact E0 = {e0:.10f}, best relative error {best:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
