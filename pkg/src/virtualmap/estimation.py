"""Observable averages under a virtual map circuit, from measured outcomes.

Each recorded outcome string m contributes a shot weight

    w_m = Re sum_k c_k Tr[L(D_{m_0} (x) ... (x) D_{m_{N-1}}) P_k],

evaluated through the causal-cone engine; the estimate is the sample mean with
the unbiased sample variance. Identical outcome strings are collapsed before
evaluation (there are at most 4^N distinct strings), and the reduction order
is fixed by sorting, so results are deterministic for a given batch.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cone import EvaluationSchedule, MapCircuit, evaluate_trace, schedule
from .densesim import DensityMatrix, OutcomeBatch, apply_circuit_dense, outcome_distribution
from .errors import NumericalError, ValidationError
from .pauli import Observable, expectation_oracle
from .povm import DualFrame, SingleQubitPOVM, compute_duals, get_povm

_RESIDUE_TOL = 1e-8


@dataclass
class Estimate:
    """A mean/uncertainty pair with optional per-shot weights attached.

    ``labels`` identifies (observable, circuit, batch) for reporting;
    ``batch_key`` fingerprints the outcome data so covariances are only taken
    between estimates that really share shots.
    """

    value: float
    sigma: float
    num_shots: int
    imag_residue: float
    per_shot: np.ndarray | None = None
    batch_key: str | None = None
    labels: tuple[str, str, str] | None = None

    def __post_init__(self):
        if self.sigma < 0 or not np.isfinite(self.value):
            raise ValidationError("estimate value/sigma out of range")
        if self.per_shot is not None:
            if len(self.per_shot) != self.num_shots:
                raise ValidationError("per-shot weights do not match shot count")
            if abs(float(np.mean(self.per_shot)) - self.value) > 1e-9 * (
                1.0 + abs(self.value)
            ):
                raise ValidationError("per-shot mean does not reproduce the estimate")


def dual_arrays(duals, num_qubits: int) -> list[np.ndarray]:
    """Normalize a duals argument to one (M, 2, 2) array per qubit."""
    if isinstance(duals, (str, SingleQubitPOVM, DualFrame)):
        duals = [duals] * num_qubits
    duals = list(duals)
    if len(duals) != num_qubits:
        raise ValidationError(f"need {num_qubits} dual frames, got {len(duals)}")
    out = []
    for d in duals:
        if isinstance(d, str):
            d = compute_duals(get_povm(d))
        elif isinstance(d, SingleQubitPOVM):
            d = compute_duals(d)
        arr = np.asarray(d.duals if isinstance(d, DualFrame) else d, dtype=complex)
        if arr.ndim != 3 or arr.shape[1:] != (2, 2):
            raise ValidationError(
                f"dual frame must have shape (M, 2, 2), got {arr.shape}"
            )
        out.append(arr)
    return out


def _real_weight(w: complex) -> tuple[float, float]:
    residue = abs(w.imag)
    if residue > _RESIDUE_TOL * (1.0 + abs(w.real)):
        raise NumericalError(
            f"shot weight has imaginary residue {residue:.3e}; "
            "observable or circuit is not Hermiticity compatible"
        )
    return float(w.real), residue


def weighted_trace(
    circuit: MapCircuit,
    factors,
    obs: Observable,
    sched: EvaluationSchedule | None = None,
) -> complex:
    """sum_k c_k Tr[L(factors) P_k] for per-qubit input factors."""
    total = 0.0 + 0.0j
    for coeff, ps in obs.terms:
        total += coeff * evaluate_trace(circuit, factors, ps, sched)
    return total


def shot_weight(outcome, duals, circuit: MapCircuit, obs: Observable) -> float:
    """Weight of a single outcome string under a Hermitian observable."""
    if not obs.is_hermitian:
        raise ValidationError("shot weights need a Hermitian observable")
    arrays = dual_arrays(duals, circuit.num_qubits)
    factors = [arrays[q][int(m)] for q, m in enumerate(outcome)]
    value, _ = _real_weight(weighted_trace(circuit, factors, obs))
    return value


def _batch_key(batch: OutcomeBatch) -> str:
    h = hashlib.sha1(np.ascontiguousarray(batch.outcomes).tobytes())
    return f"{batch.seed}:{batch.num_shots}x{batch.num_qubits}:{h.hexdigest()[:16]}"


def estimate(
    batch: OutcomeBatch,
    duals,
    circuit: MapCircuit,
    obs: Observable,
    keep_per_shot: bool = False,
    threads: int = 1,
    labels: tuple[str, str, str] | None = None,
) -> Estimate:
    """Mean shot weight with its standard error, from a measurement batch."""
    if not obs.is_hermitian:
        raise ValidationError("estimation needs a Hermitian observable")
    if batch.num_shots < 2:
        raise ValidationError("the variance estimator needs at least two shots")
    if batch.num_qubits != circuit.num_qubits or obs.num_qubits != circuit.num_qubits:
        raise ValidationError("batch, circuit, and observable qubit counts differ")
    arrays = dual_arrays(duals, circuit.num_qubits)
    for q, m in enumerate(batch.outcomes.max(axis=0)):
        if m >= arrays[q].shape[0]:
            raise ValidationError(f"outcome {m} out of range for qubit {q}")
    uniq, inverse, counts = np.unique(
        batch.outcomes, axis=0, return_inverse=True, return_counts=True
    )
    sched = schedule(circuit)

    def weight_of(row) -> complex:
        factors = [arrays[q][int(m)] for q, m in enumerate(row)]
        return weighted_trace(circuit, factors, obs, sched)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(weight_of, uniq))
    else:
        raw = [weight_of(row) for row in uniq]
    reals = np.empty(len(raw))
    residue = 0.0
    for i, w in enumerate(raw):
        reals[i], r = _real_weight(w)
        residue = max(residue, r)

    s = batch.num_shots
    value = float(np.dot(counts, reals) / s)
    second = float(np.dot(counts, reals**2) / s)
    var_unbiased = max(second - value**2, 0.0) * s / (s - 1)
    sigma = float(np.sqrt(var_unbiased / s))
    per_shot = reals[inverse.reshape(-1)] if keep_per_shot else None
    return Estimate(
        value=value,
        sigma=sigma,
        num_shots=s,
        imag_residue=residue,
        per_shot=per_shot,
        batch_key=_batch_key(batch),
        labels=labels,
    )


def estimate_exact(
    rho: DensityMatrix,
    povms,
    circuit: MapCircuit,
    obs: Observable,
    duals=None,
    method: str = "auto",
) -> float:
    """Infinite-shot limit sum_m p_m w_m of the estimator.

    ``method="enumerate"`` performs the literal sum over the 4^N outcome
    distribution; ``"dense"`` applies the circuit to rho directly, which is
    the same sum rearranged by linearity of the dual-frame identity. The
    ``"auto"`` choice is dense, unless explicit ``duals`` are given (a frame
    that is not dual to ``povms`` only makes sense in the enumerated sum).
    """
    if rho.num_qubits != circuit.num_qubits or obs.num_qubits != circuit.num_qubits:
        raise ValidationError("state, circuit, and observable qubit counts differ")
    if not obs.is_hermitian:
        raise ValidationError("exact estimation needs a Hermitian observable")
    if method == "auto":
        method = "dense" if duals is None else "enumerate"
    if method == "dense":
        if duals is not None:
            raise ValidationError("custom duals require method='enumerate'")
        out = apply_circuit_dense(circuit, rho.matrix)
        value, _ = _real_weight(complex(expectation_oracle(out, obs)))
        return value
    if method != "enumerate":
        raise ValidationError(f"unknown method {method!r}")
    if rho.num_qubits > 9:
        raise ValidationError("enumeration limited to N <= 9")
    p = outcome_distribution(rho, povms)
    arrays = dual_arrays(povms if duals is None else duals, rho.num_qubits)
    sched = schedule(circuit)
    total = 0.0
    for idx in np.ndindex(p.shape):
        weight = p[idx]
        if weight == 0.0:
            continue
        factors = [arrays[q][m] for q, m in enumerate(idx)]
        w, _ = _real_weight(weighted_trace(circuit, factors, obs, sched))
        total += weight * w
    return float(total)


def estimate_covariance(a: Estimate, b: Estimate) -> float:
    """Covariance of two estimates computed from the same batch."""
    if a.per_shot is None or b.per_shot is None:
        raise ValidationError("covariance needs per-shot weights on both estimates")
    if a.batch_key != b.batch_key or a.num_shots != b.num_shots:
        raise ValidationError("estimates do not come from the same batch")
    s = a.num_shots
    if s < 2:
        raise ValidationError("covariance needs at least two shots")
    cross = float(np.mean(a.per_shot * b.per_shot))
    cov_unbiased = (cross - a.value * b.value) * s / (s - 1)
    return cov_unbiased / s
