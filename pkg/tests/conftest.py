"""Shared fixtures and the acceptance-summary reporting hook."""

from __future__ import annotations

import numpy as np
import pytest

from virtualmap.cone import Component, MapCircuit, brickwork
from virtualmap.maps import (
    random_cptp_map,
    random_tp_hermitian_map,
    random_unitary_map,
)
from virtualmap.povm import compute_duals, make_sic_povm

# Criterion results recorded by tests/test_acceptance.py: list of
# (criterion number, title, passed, detail) tuples, printed at session end.
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} [{status}] {title}: {detail}")


@pytest.fixture(scope="session")
def sic_duals():
    return np.asarray(compute_duals(make_sic_povm()).duals)


def random_mixed_circuit(n: int, rng: np.random.Generator, max_layers: int = 2) -> MapCircuit:
    """Random brickwork of mixed CPTP / unitary / non-CP (but TP, HP) maps."""
    layers = int(rng.integers(1, max_layers + 1))

    def factory(layer, qubits):
        draw = rng.random()
        if draw < 0.4:
            return random_cptp_map(2, rng)
        if draw < 0.7:
            return random_unitary_map(2, rng)
        return random_tp_hermitian_map(2, rng)

    return brickwork(n, layers, factory)


def random_product_duals(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random trace-one Hermitian single-qubit factors (dual-frame stand-ins)."""
    out = []
    for _ in range(n):
        g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        h = (g + g.conj().T) / 2.0
        h = h - np.eye(2) * (np.trace(h) - 1.0) / 2.0
        out.append(h)
    return out


def random_pauli_letters(n: int, rng: np.random.Generator) -> str:
    return "".join("IXYZ"[k] for k in rng.integers(0, 4, size=n))


def replace_component(circuit: MapCircuit, index: int, new_map) -> MapCircuit:
    return circuit.with_component(index, new_map)


def assert_all_close(a, b, atol, msg=""):
    err = np.max(np.abs(np.asarray(a) - np.asarray(b)))
    assert err <= atol, f"{msg} max error {err:.3e} > {atol:.1e}"
