"""Pauli strings, Hermitian observables, and their dense oracles.

Observables are sums of weighted Pauli strings over a fixed qubit count.
Strings are written with qubit 0 as the leftmost letter ("XIZ" acts with X on
qubit 0, Z on qubit 2). Duplicate strings are merged at construction and terms
are kept sorted lexicographically so serialization is deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .linalg import kron_all

PAULI_MATRICES: dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PAULI_LETTERS = "IXYZ"

_HERMITIAN_TOL = 1e-12
_MERGE_DROP_TOL = 1e-15


@dataclass(frozen=True)
class PauliString:
    """A tensor product of single-qubit Pauli letters."""

    letters: str

    def __post_init__(self):
        if not self.letters:
            raise ValidationError("Pauli string must cover at least one qubit")
        bad = set(self.letters) - set(PAULI_LETTERS)
        if bad:
            raise ValidationError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")

    @property
    def num_qubits(self) -> int:
        return len(self.letters)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, c in enumerate(self.letters) if c != "I")

    @property
    def weight(self) -> int:
        return len(self.support)

    def matrices(self) -> list[np.ndarray]:
        return [PAULI_MATRICES[c] for c in self.letters]

    def matrix(self) -> np.ndarray:
        return kron_all(self.matrices())

    def __str__(self) -> str:
        return self.letters


@dataclass(frozen=True)
class Observable:
    """A weighted sum of Pauli strings. Construct via :meth:`from_terms`."""

    num_qubits: int
    terms: tuple[tuple[complex, PauliString], ...]

    @classmethod
    def from_terms(cls, num_qubits: int, terms) -> "Observable":
        if num_qubits < 1:
            raise ValidationError("observable needs at least one qubit")
        merged: dict[str, complex] = {}
        for coeff, ps in terms:
            if isinstance(ps, str):
                ps = PauliString(ps)
            if ps.num_qubits != num_qubits:
                raise ValidationError(
                    f"term {ps} covers {ps.num_qubits} qubits, expected {num_qubits}"
                )
            coeff = complex(coeff)
            if not np.isfinite(coeff.real) or not np.isfinite(coeff.imag):
                raise ValidationError(f"non-finite coefficient on term {ps}")
            merged[ps.letters] = merged.get(ps.letters, 0.0) + coeff
        kept = sorted(
            (letters, c) for letters, c in merged.items() if abs(c) > _MERGE_DROP_TOL
        )
        return cls(num_qubits, tuple((c, PauliString(s)) for s, c in kept))

    @property
    def is_hermitian(self) -> bool:
        return all(abs(c.imag) <= _HERMITIAN_TOL for c, _ in self.terms)

    def matrix(self) -> np.ndarray:
        out = np.zeros((2**self.num_qubits,) * 2, dtype=complex)
        for coeff, ps in self.terms:
            out += coeff * ps.matrix()
        return out

    def __len__(self) -> int:
        return len(self.terms)


def parse_observable(source) -> Observable:
    """Load an observable from a JSON file path, JSON text, or a dict."""
    if isinstance(source, (str, Path)):
        p = Path(source)
        if p.exists():
            text = p.read_text()
        else:
            text = str(source)
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"observable is not valid JSON: {exc}") from exc
    else:
        payload = source
    if not isinstance(payload, dict):
        raise ValidationError("observable payload must be a JSON object")
    try:
        n = int(payload["num_qubits"])
        raw_terms = payload["terms"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"observable payload missing fields: {exc}") from exc
    terms = []
    for entry in raw_terms:
        try:
            raw = entry["coeff"]
            if isinstance(raw, (int, float)):
                coeff = complex(float(raw), 0.0)
            else:
                re_im = raw
                coeff = complex(float(re_im[0]), float(re_im[1]))
            letters = entry["pauli"]
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"malformed observable term {entry!r}") from exc
        terms.append((coeff, PauliString(letters)))
    return Observable.from_terms(n, terms)


def observable_to_dict(obs: Observable) -> dict:
    return {
        "num_qubits": obs.num_qubits,
        "terms": [
            {"coeff": [c.real, c.imag], "pauli": ps.letters} for c, ps in obs.terms
        ],
    }


def write_observable(obs: Observable, path) -> None:
    Path(path).write_text(json.dumps(observable_to_dict(obs), indent=1) + "\n")


def xx_hamiltonian(
    num_qubits: int, coupling: float = 1.0, field: float = 0.0, periodic: bool = True
) -> Observable:
    """Spin-chain Hamiltonian -J[sum_i (X_i X_{i+1} + Y_i Y_{i+1})/2 + B sum_i Z_i]."""
    if num_qubits < 2:
        raise ValidationError("chain needs at least two qubits")
    n = num_qubits
    bonds = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 1:
        bonds.append((n - 1, 0))
    terms = []
    for a, b in bonds:
        for letter in "XY":
            s = ["I"] * n
            s[a] = letter
            s[b] = letter
            terms.append((-coupling / 2.0, PauliString("".join(s))))
    for q in range(n):
        s = ["I"] * n
        s[q] = "Z"
        terms.append((-coupling * field, PauliString("".join(s))))
    return Observable.from_terms(n, terms)


def expectation_oracle(rho: np.ndarray, obs: Observable) -> complex:
    """Sum_k c_k Tr[rho P_k] by per-qubit tensor contraction.

    Independent of any map machinery; used as the reference value in tests and
    exact estimates. Returns a complex number; callers decide whether to keep
    the real part.
    """
    rho = np.asarray(rho)
    n = obs.num_qubits
    if rho.shape != (2**n, 2**n):
        raise ValidationError(f"state shape {rho.shape} does not match {n} qubits")
    total = 0.0 + 0.0j
    base = rho.reshape((2,) * (2 * n))
    for coeff, ps in obs.terms:
        t = base
        for q in reversed(range(n)):
            nq = t.ndim // 2
            # Tr picks up sum_{r,c} t[..r..,..c..] P[c,r] on each qubit
            t = np.tensordot(t, PAULI_MATRICES[ps.letters[q]], axes=([q, nq + q], [1, 0]))
        total += coeff * complex(t)
    return total
