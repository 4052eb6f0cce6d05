"""Command-line entry points: sample, estimate, optimize, ansatz, oracle-check.

Every command is deterministic given its seeds, reads/writes only the JSON and
CSV formats owned by the library modules, and exits with 0 on success, 2 on
validation errors (bad inputs, malformed files, out-of-range sizes), and 3 on
numerical failures (schedule infeasibility, solver non-convergence, failed
self-checks).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .cone import MapCircuit, brickwork, evaluate_trace, evaluate_trace_backward, load_circuit, save_circuit
from .densesim import (
    apply_circuit_dense,
    batch_to_text,
    build_state,
    exact_ground_energy,
    maximally_mixed,
    read_batch,
    sample_outcomes,
)
from .errors import NumericalError, ValidationError
from .estimation import estimate, estimate_exact
from .linalg import kron_all, trace_mul
from .maps import random_cptp_map, random_tp_hermitian_map, random_unitary_map
from .pauli import PauliString, parse_observable
from .povm import compute_duals, get_povm
from .varopt import (
    DenseStateData,
    SdpOptions,
    SweepOptions,
    classical_ansatz,
    classical_input,
    data_from_batch,
    sweep,
    zreset_compose,
)

_ORACLE_LIMIT = 6


def _label(path_or_text: str) -> str:
    p = Path(path_or_text)
    return p.stem if p.suffix else path_or_text


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# ---------------------------------------------------------------------------
# sample


def _cmd_sample(args) -> int:
    if bool(args.state) == bool(args.mixed):
        raise ValidationError("choose exactly one of --state or --mixed")
    if args.mixed:
        if args.N is None:
            raise ValidationError("--mixed needs --N")
        rho = maximally_mixed(args.N)
        source = "mixed"
    else:
        rho = build_state(args.state, args.N)
        source = _label(args.state)
    batch = sample_outcomes(rho, args.povm, args.S, seed=args.seed, source=source)
    _emit(batch_to_text(batch), args.out)
    return 0


# ---------------------------------------------------------------------------
# estimate


def _cmd_estimate(args) -> int:
    batch = read_batch(args.batch)
    batch_id = _label(args.batch)
    observables = [(parse_observable(p), _label(p)) for p in args.observable]
    circuits = [(load_circuit(p), _label(p)) for p in args.circuit]
    exact_rho = build_state(args.exact_state, batch.num_qubits) if args.exact_state else None
    rows = []
    for circ, circ_id in circuits:
        for obs, obs_id in observables:
            est = estimate(
                batch,
                list(batch.povm_labels),
                circ,
                obs,
                threads=args.threads,
                labels=(obs_id, circ_id, batch_id),
            )
            row = {
                "observable": obs_id,
                "circuit": circ_id,
                "batch": batch_id,
                "value": est.value,
                "sigma": est.sigma,
                "S": est.num_shots,
            }
            if exact_rho is not None:
                row["exact"] = estimate_exact(exact_rho, list(batch.povm_labels), circ, obs)
            rows.append(row)
    _emit(json.dumps(rows, indent=2) + "\n", args.out)
    if args.csv:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["observable", "map", "value", "sigma", "exact"])
        for row in rows:
            writer.writerow(
                [
                    row["observable"],
                    row["circuit"],
                    f"{row['value']:.12g}",
                    f"{row['sigma']:.12g}",
                    "" if "exact" not in row else f"{row['exact']:.12g}",
                ]
            )
        Path(args.csv).write_text(buf.getvalue())
    return 0


# ---------------------------------------------------------------------------
# optimize / ansatz


def _sweep_options(args) -> SweepOptions:
    order = None
    if getattr(args, "order", None):
        order = tuple(int(x) for x in args.order.split(","))
    sdp = SdpOptions(max_iters=args.sdp_max_iters, step0=args.sdp_step0, tol=args.sdp_tol)
    return SweepOptions(
        rounds=args.rounds,
        accept_tol=args.accept_tol,
        order=order,
        init=args.init,
        seed=args.seed,
        sdp=sdp,
    )


def _exact_energy_if_small(obs) -> float | None:
    if obs.num_qubits > 12:
        return None
    return exact_ground_energy(obs)[0]


def _finish_sweep(args, circuit, report, holdout_summary=None) -> int:
    if args.zreset:
        circuit = zreset_compose(circuit)
    if args.out_circuit:
        save_circuit(circuit, args.out_circuit)
    if args.report:
        Path(args.report).write_text(report.to_csv())
    summary = {
        "initial_energy": report.initial_energy,
        "final_energy": report.final_energy,
        "iterations": len(report.steps),
    }
    if report.exact_energy is not None:
        summary["exact_energy"] = report.exact_energy
        summary["relative_error"] = report.relative_error()
    if holdout_summary:
        summary["holdout"] = holdout_summary
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def _cmd_optimize(args) -> int:
    obs = parse_observable(args.observable)
    circuit = load_circuit(args.circuit)
    chosen = [bool(args.batch), bool(args.exact_state), args.classical]
    if sum(chosen) != 1:
        raise ValidationError("choose exactly one of --batch, --exact-state, --classical")
    if args.batch:
        batch = read_batch(args.batch)
        data = data_from_batch(batch, list(batch.povm_labels))
    elif args.exact_state:
        data = DenseStateData(build_state(args.exact_state, circuit.num_qubits))
    else:
        data = classical_input(circuit.num_qubits)
    options = _sweep_options(args)
    final, report = sweep(circuit, data, obs, options, exact_energy=_exact_energy_if_small(obs))
    holdout = None
    if args.holdout:
        hbatch = read_batch(args.holdout)
        est = estimate(
            hbatch,
            list(hbatch.povm_labels),
            final,
            obs,
            threads=args.threads,
            labels=(_label(args.observable), _label(args.circuit), _label(args.holdout)),
        )
        holdout = {"batch": _label(args.holdout), "value": est.value, "sigma": est.sigma}
    return _finish_sweep(args, final, report, holdout)


def _cmd_ansatz(args) -> int:
    obs = parse_observable(args.observable)
    options = _sweep_options(args)
    circuit, report = classical_ansatz(
        obs, layers=args.layers, options=options, exact_energy=_exact_energy_if_small(obs)
    )
    return _finish_sweep(args, circuit, report)


# ---------------------------------------------------------------------------
# oracle-check


def _random_check_circuit(n: int, rng: np.random.Generator) -> MapCircuit:
    layers = int(rng.integers(1, 3))

    def factory(layer, qubits):
        draw = rng.random()
        if draw < 0.4:
            return random_cptp_map(2, rng)
        if draw < 0.7:
            return random_unitary_map(2, rng)
        return random_tp_hermitian_map(2, rng)

    return brickwork(n, layers, factory)


def _cmd_oracle_check(args) -> int:
    if args.circuit:
        circuits = [load_circuit(args.circuit)]
        if circuits[0].num_qubits > _ORACLE_LIMIT:
            raise ValidationError(f"oracle limited to N <= {_ORACLE_LIMIT}")
    else:
        if args.N > _ORACLE_LIMIT:
            raise ValidationError(f"oracle limited to N <= {_ORACLE_LIMIT}")
        circuits = None
    rng = np.random.default_rng(args.seed)
    duals = np.asarray(compute_duals(get_povm(args.povm)).duals)
    worst_rel = 0.0
    worst_fb = 0.0
    for i in range(args.instances):
        circ = circuits[0] if circuits else _random_check_circuit(args.N, rng)
        n = circ.num_qubits
        outcome = rng.integers(0, duals.shape[0], size=n)
        factors = [duals[m] for m in outcome]
        letters = "".join("IXYZ"[k] for k in rng.integers(0, 4, size=n))
        pauli = PauliString(letters)
        cone_val = complex(evaluate_trace(circ, factors, pauli))
        back_val = complex(evaluate_trace_backward(circ, factors, pauli))
        dense_out = apply_circuit_dense(circ, kron_all(factors))
        dense_val = complex(trace_mul(dense_out, pauli.matrix()))
        worst_rel = max(worst_rel, abs(cone_val - dense_val) / max(1.0, abs(dense_val)))
        worst_fb = max(worst_fb, abs(cone_val - back_val))
    ok = worst_rel <= args.tol and worst_fb <= max(args.tol, 1e-12)
    report = {
        "instances": args.instances,
        "max_relative_error": worst_rel,
        "max_forward_backward_gap": worst_fb,
        "tolerance": args.tol,
        "status": "pass" if ok else "fail",
    }
    sys.stdout.write(json.dumps(report, indent=2) + "\n")
    if not ok:
        raise NumericalError(
            f"oracle check failed: rel={worst_rel:.3e} fwd/bwd={worst_fb:.3e}"
        )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="virtualmap",
        description="Estimate and optimize observable averages under virtual local-map circuits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads")

    p = sub.add_parser("sample", parents=[common], help="draw measurement outcomes from a state")
    p.add_argument("--state", help="state-preparation JSON file")
    p.add_argument("--mixed", action="store_true", help="use the maximally mixed state")
    p.add_argument("--N", type=int, help="number of qubits (required with --mixed)")
    p.add_argument("--S", type=int, required=True, help="number of shots")
    p.add_argument("--povm", default="sic", help="single-qubit POVM label")
    p.add_argument("--out", help="output batch CSV (stdout if omitted)")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("estimate", parents=[common], help="estimate observables from a batch")
    p.add_argument("--batch", required=True, help="outcome batch CSV")
    p.add_argument("--observable", action="append", required=True, help="observable JSON (repeatable)")
    p.add_argument("--circuit", action="append", required=True, help="circuit JSON (repeatable)")
    p.add_argument("--exact-state", help="state-prep JSON for exact reference values")
    p.add_argument("--out", help="report JSON path (stdout if omitted)")
    p.add_argument("--csv", help="also write a CSV of (observable, map, value, sigma, exact)")
    p.set_defaults(func=_cmd_estimate)

    def add_optimizer_flags(p):
        p.add_argument("--rounds", type=int, default=10)
        p.add_argument("--accept-tol", type=float, default=1e-8)
        p.add_argument("--init", default="keep", choices=["keep", "identity", "random_unitary", "random_cptp"])
        p.add_argument("--sdp-max-iters", type=int, default=5000)
        p.add_argument("--sdp-step0", type=float, default=None)
        p.add_argument("--sdp-tol", type=float, default=1e-7)
        p.add_argument("--zreset", action="store_true", help="compose first-layer resets into the result")
        p.add_argument("--out-circuit", help="write the optimized circuit JSON here")
        p.add_argument("--report", help="write the sweep report CSV here")

    p = sub.add_parser("optimize", parents=[common], help="optimize a circuit's maps under CPTP")
    p.add_argument("--observable", required=True)
    p.add_argument("--circuit", required=True)
    p.add_argument("--batch", help="optimize against a measured batch")
    p.add_argument("--exact-state", help="optimize against an exact state (state-prep JSON)")
    p.add_argument("--classical", action="store_true", help="optimize on the all-zeros input")
    p.add_argument("--order", help="component visit order, e.g. 0,2,1")
    p.add_argument("--holdout", help="held-out batch CSV to evaluate the final circuit on")
    add_optimizer_flags(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("ansatz", parents=[common], help="classical-input variational ground-state run")
    p.add_argument("--observable", required=True)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--order", help="component visit order, e.g. 0,2,1")
    add_optimizer_flags(p)
    p.set_defaults(func=_cmd_ansatz)

    p = sub.add_parser("oracle-check", parents=[common], help="cone-vs-dense self check (N <= 6)")
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--circuit", help="check a specific circuit file instead of random ones")
    p.add_argument("--povm", default="sic")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "ansatz" and args.init == "keep":
        args.init = "random_unitary"
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
