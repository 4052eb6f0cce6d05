"""Dense reference simulation, measurement sampling, and state builders.

Everything here works with full 2^N density matrices and exists to feed and
cross-check the causal-cone machinery: the dense circuit oracle, exact outcome
distributions, perturbed-state construction, and the noisy two-qubit gate
model. Register sizes are guarded accordingly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cone import MapCircuit, brickwork
from .errors import ValidationError
from .linalg import multiply_trace_out, partial_trace, trace_mul
from .maps import LocalMap, map_from_spec, noisy_cnot, random_cptp_map
from .pauli import Observable
from .povm import SingleQubitPOVM, get_povm

__all__ = [
    "DensityMatrix",
    "OutcomeBatch",
    "apply_local_map",
    "apply_circuit_dense",
    "dense_map_circuit_oracle",
    "build_perturbed_state",
    "perturbation_circuit",
    "noisy_cnot",
    "noisy_chain_state",
    "sample_outcomes",
    "outcome_distribution",
    "exact_ground_energy",
    "computational_zero",
    "maximally_mixed",
    "from_statevector",
    "batch_to_text",
    "write_batch",
    "read_batch",
    "load_state_prep",
    "build_state",
]

_DENSE_LIMIT = 10
_ORACLE_LIMIT = 6
_EXACT_SAMPLING_LIMIT = 9


@dataclass
class DensityMatrix:
    """A dense N-qubit operator with state-like validation helpers."""

    num_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = 2**self.num_qubits
        if m.shape != (d, d):
            raise ValidationError(
                f"matrix shape {m.shape} does not match {self.num_qubits} qubits"
            )
        self.matrix = m

    def validate(self, positivity: bool = True) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > 1e-10:
            raise ValidationError("state is not Hermitian")
        if abs(np.trace(m) - 1.0) > 1e-10:
            raise ValidationError(f"state trace {np.trace(m):.6g} != 1")
        if positivity and np.linalg.eigvalsh(m).min() < -1e-8:
            raise ValidationError("state has a significantly negative eigenvalue")


def computational_zero(num_qubits: int) -> DensityMatrix:
    d = 2**num_qubits
    m = np.zeros((d, d), dtype=complex)
    m[0, 0] = 1.0
    return DensityMatrix(num_qubits, m)


def maximally_mixed(num_qubits: int) -> DensityMatrix:
    d = 2**num_qubits
    return DensityMatrix(num_qubits, np.eye(d, dtype=complex) / d)


def from_statevector(psi: np.ndarray) -> DensityMatrix:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    n = round(np.log2(len(psi)))
    if 2**n != len(psi):
        raise ValidationError(f"statevector length {len(psi)} is not 2**n")
    psi = psi / np.linalg.norm(psi)
    return DensityMatrix(n, np.outer(psi, psi.conj()))


def apply_local_map(rho: DensityMatrix, m: LocalMap, qubits) -> DensityMatrix:
    """Apply a k-local map to the named qubits of a dense state."""
    from .linalg import apply_superop_local

    qubits = tuple(int(q) for q in qubits)
    if len(qubits) != m.arity:
        raise ValidationError(f"map arity {m.arity} does not match qubits {qubits}")
    if any(q < 0 or q >= rho.num_qubits for q in qubits):
        raise ValidationError(f"qubits {qubits} outside register")
    before = np.trace(rho.matrix)
    out = apply_superop_local(rho.matrix, m.superop, qubits, rho.num_qubits)
    if m.flags().tp and abs(np.trace(out) - before) > 1e-10:
        raise ValidationError("trace not preserved by a trace-preserving map")
    return DensityMatrix(rho.num_qubits, out)


def apply_circuit_dense(circuit: MapCircuit, op: np.ndarray) -> np.ndarray:
    """Apply every circuit component, in order, to a dense operator."""
    from .linalg import apply_superop_local

    n = circuit.num_qubits
    if n > _DENSE_LIMIT:
        raise ValidationError(f"dense application limited to N <= {_DENSE_LIMIT}")
    out = np.asarray(op, dtype=complex)
    if out.shape != (2**n, 2**n):
        raise ValidationError(f"operator shape {out.shape} does not match {n} qubits")
    for comp in circuit.components:
        out = apply_superop_local(out, comp.map.superop, comp.qubits, n)
    return out


def dense_map_circuit_oracle(circuit: MapCircuit, input_op: np.ndarray) -> np.ndarray:
    """Reference full-register evaluation of a map circuit (N <= 6)."""
    if circuit.num_qubits > _ORACLE_LIMIT:
        raise ValidationError(f"oracle limited to N <= {_ORACLE_LIMIT}")
    return apply_circuit_dense(circuit, input_op)


def perturbation_circuit(num_qubits: int, p: float = 0.05, seed: int = 0) -> MapCircuit:
    """One two-sublayer pass of mixing channels (1-p) Id + p E on neighbours:
    pairs (0,1),(2,3),... then (1,2),(3,4),..., each E an independent random
    CPTP map."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"perturbation strength {p} outside [0, 1]")
    rng = np.random.default_rng(seed)

    def factory(layer, qubits):
        e = random_cptp_map(2, rng)
        s = (1.0 - p) * np.eye(16, dtype=complex) + p * e.superop
        return LocalMap(s)

    return brickwork(num_qubits, 2, factory)


def build_perturbed_state(rho0: DensityMatrix, p: float = 0.05, seed: int = 0) -> DensityMatrix:
    circuit = perturbation_circuit(rho0.num_qubits, p, seed)
    return DensityMatrix(rho0.num_qubits, apply_circuit_dense(circuit, rho0.matrix))


# ---------------------------------------------------------------------------
# measurement sampling


@dataclass
class OutcomeBatch:
    """Recorded per-qubit measurement outcomes, shape (num_shots, num_qubits)."""

    outcomes: np.ndarray
    povm_labels: tuple[str, ...]
    seed: int
    source: str = ""

    def __post_init__(self):
        o = np.asarray(self.outcomes)
        if o.ndim != 2 or o.shape[0] < 1 or o.shape[1] < 1:
            raise ValidationError(f"outcomes must be (S, N), got {o.shape}")
        if not np.issubdtype(o.dtype, np.integer):
            raise ValidationError("outcomes must be integers")
        if o.min() < 0 or o.max() > 3:
            raise ValidationError("outcome indices must lie in 0..3")
        self.outcomes = o.astype(np.int8)
        self.povm_labels = tuple(self.povm_labels)
        if len(self.povm_labels) != o.shape[1]:
            raise ValidationError("need one POVM label per qubit")

    @property
    def num_shots(self) -> int:
        return self.outcomes.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.outcomes.shape[1]


def _effects_per_qubit(povms, num_qubits: int) -> tuple[list[np.ndarray], tuple[str, ...]]:
    if isinstance(povms, (str, SingleQubitPOVM)):
        povms = [povms] * num_qubits
    povms = list(povms)
    if len(povms) != num_qubits:
        raise ValidationError(f"need {num_qubits} POVMs, got {len(povms)}")
    resolved = [get_povm(p) if isinstance(p, str) else p for p in povms]
    return [p.effects for p in resolved], tuple(p.label for p in resolved)


def outcome_distribution(rho: DensityMatrix, povms) -> np.ndarray:
    """Exact joint outcome probabilities, shape (M_0, ..., M_{N-1})."""
    n = rho.num_qubits
    effects, _ = _effects_per_qubit(povms, n)
    t = rho.matrix.reshape((2,) * (2 * n))
    for q in reversed(range(n)):
        # contract row axis q with effect axis r, col axis 2q+1 with axis c
        t = np.tensordot(t, effects[q], axes=([q, 2 * q + 1], [2, 1]))
    t = t.transpose(tuple(reversed(range(n))))
    p = np.real(t)
    if np.abs(np.imag(t)).max() > 1e-10:
        raise ValidationError("outcome probabilities came out complex")
    return p


def sample_outcomes(
    rho: DensityMatrix,
    povms,
    num_shots: int,
    seed: int = 0,
    exact_threshold: int = _EXACT_SAMPLING_LIMIT,
    source: str = "",
) -> OutcomeBatch:
    """Draw i.i.d. product-POVM outcomes from a state.

    For N <= ``exact_threshold`` the exact joint distribution is enumerated;
    larger registers fall back to qubit-by-qubit conditional sampling. Both
    paths are deterministic given the seed (with different draw sequences).
    """
    if num_shots < 1:
        raise ValidationError("need at least one shot")
    rho.validate()
    n = rho.num_qubits
    effects, labels = _effects_per_qubit(povms, n)
    rng = np.random.default_rng(seed)
    if n <= exact_threshold:
        p = outcome_distribution(rho, povms)
        flat = np.clip(p.reshape(-1), 0.0, None)
        flat = flat / flat.sum()
        draws = rng.choice(flat.size, size=num_shots, p=flat)
        sizes = [e.shape[0] for e in effects]
        outcomes = np.empty((num_shots, n), dtype=np.int8)
        rem = draws
        for q in reversed(range(n)):
            outcomes[:, q] = rem % sizes[q]
            rem = rem // sizes[q]
    else:
        outcomes = _sample_conditional(rho, effects, num_shots, rng)
    return OutcomeBatch(outcomes, labels, seed, source)


def _sample_conditional(rho, effects, num_shots, rng):
    n = rho.num_qubits
    out = np.empty((num_shots, n), dtype=np.int8)
    branches = [(rho.matrix, np.arange(num_shots))]
    for q in range(n):
        nq = n - q
        nxt = []
        for t, idx in branches:
            red = partial_trace(t, [0], nq)
            probs = np.array(
                [max(trace_mul(red, e).real, 0.0) for e in effects[q]]
            )
            probs /= probs.sum()
            draws = rng.choice(len(probs), size=len(idx), p=probs)
            for m in range(len(probs)):
                sel = idx[draws == m]
                if sel.size:
                    out[sel, q] = m
                    if q < n - 1:
                        child = multiply_trace_out(t, effects[q][m], 0, nq)
                        nxt.append((child, sel))
        branches = nxt
    return out


# ---------------------------------------------------------------------------
# batch files

_HEADER_RE = re.compile(
    r"^#\s*povm=(?P<povm>\S+)\s+seed=(?P<seed>-?\d+)\s+N=(?P<n>\d+)\s+S=(?P<s>\d+)"
    r"(?:\s+source=\"(?P<source>[^\"]*)\")?\s*$"
)


def batch_to_text(batch: OutcomeBatch) -> str:
    labels = set(batch.povm_labels)
    povm_field = batch.povm_labels[0] if len(labels) == 1 else "|".join(batch.povm_labels)
    header = (
        f"# povm={povm_field} seed={batch.seed} "
        f"N={batch.num_qubits} S={batch.num_shots}"
    )
    if batch.source:
        header += f' source="{batch.source}"'
    rows = "\n".join(",".join(str(int(v)) for v in row) for row in batch.outcomes)
    return header + "\n" + rows + "\n"


def write_batch(batch: OutcomeBatch, path) -> None:
    Path(path).write_text(batch_to_text(batch))


def read_batch(path) -> OutcomeBatch:
    lines = Path(path).read_text().strip().splitlines()
    if not lines:
        raise ValidationError("empty batch file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise ValidationError(f"malformed batch header: {lines[0]!r}")
    n = int(m.group("n"))
    s = int(m.group("s"))
    povm_field = m.group("povm")
    labels = tuple(povm_field.split("|")) if "|" in povm_field else (povm_field,) * n
    if len(lines) - 1 != s:
        raise ValidationError(f"header says S={s} but file has {len(lines) - 1} rows")
    try:
        outcomes = np.array(
            [[int(v) for v in line.split(",")] for line in lines[1:]], dtype=np.int8
        )
    except ValueError as exc:
        raise ValidationError(f"malformed outcome row: {exc}") from exc
    if outcomes.shape[1] != n:
        raise ValidationError(f"header says N={n} but rows have {outcomes.shape[1]} entries")
    return OutcomeBatch(outcomes, labels, int(m.group("seed")), m.group("source") or "")


# ---------------------------------------------------------------------------
# state-prep files


def load_state_prep(path_or_payload, num_qubits: int | None = None):
    """Load an ordered list of (qubits, map) state-preparation steps.

    The file is a JSON list of {"qubits": [...], "map": <preset or payload>};
    the register size is inferred from the largest index unless given.
    """
    if isinstance(path_or_payload, (str, Path)):
        import json

        try:
            payload = json.loads(Path(path_or_payload).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"state-prep file is not valid JSON: {exc}") from exc
    else:
        payload = path_or_payload
    if isinstance(payload, dict):
        num_qubits = int(payload.get("num_qubits", num_qubits or 0)) or num_qubits
        payload = payload.get("steps", payload.get("components"))
    if not isinstance(payload, list):
        raise ValidationError("state-prep payload must be a JSON list of steps")
    steps = []
    top = -1
    for entry in payload:
        try:
            qubits = tuple(int(q) for q in entry["qubits"])
            spec = entry["map"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed state-prep step {entry!r}") from exc
        steps.append((qubits, map_from_spec(spec, len(qubits))))
        top = max(top, *qubits)
    if num_qubits is None:
        num_qubits = top + 1
    if num_qubits < top + 1:
        raise ValidationError(f"steps address qubit {top} but N={num_qubits}")
    return num_qubits, steps


def build_state(path_or_payload, num_qubits: int | None = None) -> DensityMatrix:
    """Apply a state-prep file to |0...0><0...0|."""
    n, steps = load_state_prep(path_or_payload, num_qubits)
    rho = computational_zero(n)
    for qubits, m in steps:
        rho = apply_local_map(rho, m, qubits)
    return rho


def noisy_chain_state(num_qubits: int, theta: float = 0.05, p: float = 1e-3) -> DensityMatrix:
    """|0...0> run through a chain of noisy CNOTs (0,1),(1,2),...,(N-2,N-1)."""
    rho = computational_zero(num_qubits)
    gate = noisy_cnot(theta, p)
    for i in range(num_qubits - 1):
        rho = apply_local_map(rho, gate, (i, i + 1))
    return rho


def exact_ground_energy(obs: Observable) -> tuple[float, np.ndarray]:
    """Ground energy and ground state of a Hermitian observable, densely."""
    if obs.num_qubits > 12:
        raise ValidationError("exact diagonalization limited to N <= 12")
    if not obs.is_hermitian:
        raise ValidationError("observable is not Hermitian")
    h = obs.matrix()
    vals, vecs = np.linalg.eigh(h)
    return float(vals[0]), vecs[:, 0]
