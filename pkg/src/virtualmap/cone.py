"""Causal-cone evaluation of local-map circuits.

Circuits are ordered lists of k-local components. The quantity of interest is
the full-register trace

    Tr[ L(F_0 (x) ... (x) F_{N-1}) . (G_0 (x) ... (x) G_{N-1}) ]

for per-qubit input factors F (dual operators, or direct product-state
factors) and output factors G (Pauli letters). Instead of forming 2^N
operators, evaluation keeps a small residual operator over the currently
active qubits and interleaves three step kinds:

* absorb   -- tensor a pending input factor into the residual;
* apply    -- apply one component's superoperator to the residual;
* trace    -- multiply the output factor on a finished qubit and trace it out.

A qubit is finished once every component acting on it has been applied; the
scheduler picks the next qubit to finish greedily, minimizing the number of
active qubits, which reproduces the narrow sweep on layered nearest-neighbour
circuits. Backward evaluation runs the mirrored adjoint circuit with the roles
of the two factor sets exchanged; for Hermiticity-preserving circuits both
directions agree.

``split_evaluate`` stops the forward pass right before a singled-out
component, evaluates the rest backwards to just after it, and returns the
residual pairs (R_a, Rbar_a) over a normalized Pauli basis of the spectator
qubits, so that  value(replacement L_s) = sum_a Tr[L_s(R_a) Rbar_a]  is exact
and linear in the replacement. This is what the variational layer optimizes.
"""

from __future__ import annotations

import json
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .linalg import apply_superop_local, insert_factor, kron_all, multiply_trace_out, trace_mul
from .maps import LocalMap, adjoint_map, invert_map, map_from_spec, map_to_payload
from .pauli import PAULI_MATRICES, PauliString


@dataclass(frozen=True)
class Component:
    layer: int
    qubits: tuple[int, ...]
    map: LocalMap

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValidationError(f"component qubits {self.qubits} must be distinct")
        if self.map.arity != len(self.qubits):
            raise ValidationError(
                f"map arity {self.map.arity} does not match qubits {self.qubits}"
            )
        if self.layer < 1:
            raise ValidationError("layers are numbered from 1")


@dataclass(eq=False)
class MapCircuit:
    """An ordered sequence of local-map components on ``num_qubits`` qubits.

    List order is application order. Treat instances as immutable; use
    :meth:`with_component` for functional updates. ``topology`` is a tag for
    builders and schedule defaults ("brickwork", "staircase", "general").
    """

    num_qubits: int
    components: tuple[Component, ...]
    topology: str = "general"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.components = tuple(self.components)
        if self.num_qubits < 1:
            raise ValidationError("circuit needs at least one qubit")
        last_layer = 0
        per_layer_support: dict[int, set] = {}
        for comp in self.components:
            if any(q < 0 or q >= self.num_qubits for q in comp.qubits):
                raise ValidationError(
                    f"component qubits {comp.qubits} outside register of {self.num_qubits}"
                )
            if comp.layer < last_layer:
                raise ValidationError("component list must be ordered by layer")
            last_layer = comp.layer
            sup = per_layer_support.setdefault(comp.layer, set())
            if self.topology == "brickwork" and sup & set(comp.qubits):
                raise ValidationError(
                    f"brickwork layer {comp.layer} has overlapping supports"
                )
            sup |= set(comp.qubits)

    @property
    def num_layers(self) -> int:
        return max((c.layer for c in self.components), default=0)

    def support_of(self, index: int) -> tuple[int, ...]:
        return self.components[index].qubits

    def with_component(self, index: int, new_map: LocalMap) -> "MapCircuit":
        comps = list(self.components)
        old = comps[index]
        comps[index] = Component(old.layer, old.qubits, new_map)
        return MapCircuit(self.num_qubits, tuple(comps), self.topology)

    def inverse(self) -> "MapCircuit":
        """Reverse the order and invert every component map."""
        top = self.num_layers
        comps = [
            Component(top + 1 - c.layer, c.qubits, invert_map(c.map))
            for c in reversed(self.components)
        ]
        return MapCircuit(self.num_qubits, tuple(comps), "general")


def brickwork(num_qubits: int, layers: int, map_factory=None) -> MapCircuit:
    """Alternating-pairing layered circuit: odd layers couple (0,1),(2,3),...,
    even layers couple (1,2),(3,4),.... Odd registers leave the last qubit
    idle in alternating layers."""
    comps = _layered(num_qubits, layers, map_factory, staircase_layers=False)
    return MapCircuit(num_qubits, comps, "brickwork")


def staircase(num_qubits: int, layers: int, map_factory=None) -> MapCircuit:
    """Sequential layered circuit: every layer couples (0,1),(1,2),...,
    (N-2,N-1) in ascending order. One layer already connects the whole chain,
    which is what the single-layer variational runs use."""
    comps = _layered(num_qubits, layers, map_factory, staircase_layers=True)
    return MapCircuit(num_qubits, comps, "staircase")


def _layered(num_qubits, layers, map_factory, staircase_layers):
    if num_qubits < 2:
        raise ValidationError("layered circuits need at least two qubits")
    if layers < 1:
        raise ValidationError("need at least one layer")
    if map_factory is None:
        from .maps import identity_map

        map_factory = lambda layer, qubits: identity_map(len(qubits))
    comps = []
    for layer in range(1, layers + 1):
        if staircase_layers:
            starts = range(num_qubits - 1)
        else:
            starts = range(0 if layer % 2 == 1 else 1, num_qubits - 1, 2)
        for i in starts:
            qubits = (i, i + 1)
            comps.append(Component(layer, qubits, map_factory(layer, qubits)))
    return tuple(comps)


# ---------------------------------------------------------------------------
# scheduling


@dataclass(frozen=True)
class ScheduleStep:
    kind: str  # "absorb" | "apply" | "trace"
    qubit: int | None = None
    component: int | None = None


@dataclass
class EvaluationSchedule:
    steps: tuple[ScheduleStep, ...]
    peak_active: int

    def validate(self, circuit: MapCircuit) -> None:
        """Check the structural invariants: every component applied exactly
        once, absorb-before-use, every qubit traced exactly once after all of
        its components."""
        absorbed: set[int] = set()
        traced: set[int] = set()
        applied: set[int] = set()
        active = 0
        peak = 0
        for step in self.steps:
            if step.kind == "absorb":
                if step.qubit in absorbed:
                    raise ValidationError(f"qubit {step.qubit} absorbed twice")
                absorbed.add(step.qubit)
                active += 1
                peak = max(peak, active)
            elif step.kind == "apply":
                if step.component in applied:
                    raise ValidationError(f"component {step.component} applied twice")
                comp = circuit.components[step.component]
                for pred in range(step.component):
                    if pred not in applied and set(
                        circuit.components[pred].qubits
                    ) & set(comp.qubits):
                        raise ValidationError(
                            f"component {step.component} applied before predecessor {pred}"
                        )
                if any(q not in absorbed or q in traced for q in comp.qubits):
                    raise ValidationError(
                        f"component {step.component} uses non-active qubits"
                    )
                applied.add(step.component)
            elif step.kind == "trace":
                q = step.qubit
                if q in traced or q not in absorbed:
                    raise ValidationError(f"bad trace of qubit {q}")
                for ci, comp in enumerate(circuit.components):
                    if q in comp.qubits and ci not in applied:
                        raise ValidationError(
                            f"qubit {q} traced before component {ci} was applied"
                        )
                traced.add(q)
                active -= 1
            else:
                raise ValidationError(f"unknown step kind {step.kind!r}")
        if applied != set(range(len(circuit.components))):
            raise ValidationError("schedule does not apply every component")
        if traced != set(range(circuit.num_qubits)):
            raise ValidationError("schedule does not trace every qubit")
        if peak != self.peak_active:
            raise ValidationError(f"recorded peak {self.peak_active} != actual {peak}")

    def dump_text(self) -> str:
        lines = []
        for step in self.steps:
            if step.kind == "apply":
                lines.append(f"apply component {step.component}")
            else:
                lines.append(f"{step.kind} qubit {step.qubit}")
        lines.append(f"peak active qubits: {self.peak_active}")
        return "\n".join(lines)


def _closure(circuit: MapCircuit, remaining: set[int], seeds) -> list[int]:
    """Downward closure of ``seeds`` under the earlier-and-overlapping
    predecessor relation, restricted to ``remaining``; returned in order."""
    comps = circuit.components
    chosen = set(seeds)
    work = list(seeds)
    while work:
        ci = work.pop()
        sup = set(comps[ci].qubits)
        for pred in range(ci - 1, -1, -1):
            if pred in remaining and pred not in chosen and set(comps[pred].qubits) & sup:
                chosen.add(pred)
                work.append(pred)
    return sorted(chosen)


def _default_max_active(circuit: MapCircuit) -> int:
    if circuit.topology in ("brickwork", "staircase"):
        return min(circuit.num_qubits, circuit.num_layers + 1)
    return circuit.num_qubits


def _greedy_schedule(
    circuit: MapCircuit,
    component_pool,
    traceable,
    prefer_high: bool = False,
) -> tuple[list[ScheduleStep], int, set[int], set[int]]:
    """Greedy sweep: repeatedly finish the traceable qubit whose causal cone
    keeps the active set smallest. Returns (steps, peak, absorbed, applied)."""
    comps = circuit.components
    remaining = set(component_pool)
    active: list[int] = []
    absorbed: set[int] = set()
    applied: set[int] = set()
    steps: list[ScheduleStep] = []
    peak = 0
    untraced = sorted(traceable)
    if prefer_high:
        untraced = untraced[::-1]

    def emit_apply(order):
        nonlocal peak
        for ci in order:
            for q in sorted(comps[ci].qubits):
                if q not in absorbed:
                    steps.append(ScheduleStep("absorb", qubit=q))
                    absorbed.add(q)
                    insort(active, q)
            steps.append(ScheduleStep("apply", component=ci))
            applied.add(ci)
            remaining.discard(ci)
            peak = max(peak, len(active))

    pending = list(untraced)
    while pending:
        best = None
        for q in pending:
            cone = _closure(circuit, remaining, [ci for ci in remaining if q in comps[ci].qubits])
            cost = len(set(active) | {q} | {qq for ci in cone for qq in comps[ci].qubits})
            if best is None or cost < best[0]:
                best = (cost, q, cone)
        cost, q, cone = best
        emit_apply(cone)
        if q not in absorbed:
            steps.append(ScheduleStep("absorb", qubit=q))
            absorbed.add(q)
            insort(active, q)
        peak = max(peak, len(active))
        steps.append(ScheduleStep("trace", qubit=q))
        active.remove(q)
        pending.remove(q)
    return steps, peak, absorbed, applied


def schedule(
    circuit: MapCircuit, max_active: int | None = None, prefer_high: bool = False
) -> EvaluationSchedule:
    """Build an evaluation order for the full trace.

    Raises if the greedy sweep cannot stay within ``max_active`` active
    qubits (default: layers + 1 for the layered builders, unlimited
    otherwise); the error reports the best bound the heuristic found.
    """
    cap = _default_max_active(circuit) if max_active is None else int(max_active)
    steps, peak, _, applied = _greedy_schedule(
        circuit, range(len(circuit.components)), range(circuit.num_qubits), prefer_high
    )
    leftovers = [ci for ci in range(len(circuit.components)) if ci not in applied]
    if leftovers:  # cannot happen: every component acts on some qubit
        raise ValidationError(f"components {leftovers} were never scheduled")
    if peak > cap:
        raise ValidationError(
            f"no feasible schedule within max_active={cap}; "
            f"best found needs {peak} active qubits"
        )
    sched = EvaluationSchedule(tuple(steps), peak)
    sched.validate(circuit)
    return sched


# ---------------------------------------------------------------------------
# evaluation


def _factor_list(factors, num_qubits: int) -> list[np.ndarray]:
    if isinstance(factors, PauliString):
        if factors.num_qubits != num_qubits:
            raise ValidationError(
                f"Pauli string covers {factors.num_qubits} qubits, circuit has {num_qubits}"
            )
        return factors.matrices()
    if isinstance(factors, str):
        return _factor_list(PauliString(factors), num_qubits)
    mats = [np.asarray(f, dtype=complex) for f in factors]
    if len(mats) != num_qubits or any(m.shape != (2, 2) for m in mats):
        raise ValidationError(f"need {num_qubits} single-qubit factors")
    return mats


def _run_steps(circuit, steps, in_factors, out_factors):
    """Execute schedule steps; returns (active qubit list, residual matrix)."""
    active: list[int] = []
    res = np.array([[1.0 + 0.0j]])
    comps = circuit.components
    for step in steps:
        if step.kind == "absorb":
            slot = bisect_left(active, step.qubit)
            res = insert_factor(res, in_factors[step.qubit], slot, len(active))
            active.insert(slot, step.qubit)
        elif step.kind == "apply":
            comp = comps[step.component]
            positions = [active.index(q) for q in comp.qubits]
            res = apply_superop_local(res, comp.map.superop, positions, len(active))
        else:
            pos = active.index(step.qubit)
            res = multiply_trace_out(res, out_factors[step.qubit], pos, len(active))
            active.pop(pos)
    return active, res


def evaluate_trace(circuit, dual_factors, pauli, sched: EvaluationSchedule | None = None):
    """Tr[L(F_0 (x) ... ) (G_0 (x) ...)] via the causal-cone sweep."""
    n = circuit.num_qubits
    ins = _factor_list(dual_factors, n)
    outs = _factor_list(pauli, n)
    if sched is None:
        sched = circuit._cache.get("sched")
        if sched is None:
            sched = schedule(circuit)
            circuit._cache["sched"] = sched
    active, res = _run_steps(circuit, sched.steps, ins, outs)
    if active:
        raise ValidationError("schedule did not trace every qubit")
    return complex(res[0, 0])


def mirror_adjoint(circuit: MapCircuit) -> MapCircuit:
    """The circuit run backwards with every map replaced by its adjoint."""
    top = circuit.num_layers
    comps = [
        Component(top + 1 - c.layer, c.qubits, adjoint_map(c.map))
        for c in reversed(circuit.components)
    ]
    return MapCircuit(circuit.num_qubits, tuple(comps), circuit.topology)


def evaluate_trace_backward(
    circuit, dual_factors, pauli, sched: EvaluationSchedule | None = None
):
    """Evaluate Tr[Ldag(G_0 (x) ...) (F_0 (x) ...)] on the mirrored adjoint
    circuit. Equals the forward value for Hermiticity-preserving circuits with
    Hermitian factors."""
    mirror = circuit._cache.get("mirror")
    if mirror is None:
        mirror = mirror_adjoint(circuit)
        circuit._cache["mirror"] = mirror
    n = circuit.num_qubits
    ins = _factor_list(pauli, n)
    outs = _factor_list(dual_factors, n)
    if sched is None:
        sched = mirror._cache.get("sched")
        if sched is None:
            sched = schedule(mirror)
            mirror._cache["sched"] = sched
    active, res = _run_steps(mirror, sched.steps, ins, outs)
    if active:
        raise ValidationError("schedule did not trace every qubit")
    return complex(res[0, 0])


@dataclass
class ResidualOperator:
    """A partially contracted operator on the currently active qubits."""

    active: tuple[int, ...]
    matrix: np.ndarray


# ---------------------------------------------------------------------------
# split evaluation around a singled-out component

_NORMALIZED_PAULIS = None


def _normalized_paulis():
    global _NORMALIZED_PAULIS
    if _NORMALIZED_PAULIS is None:
        _NORMALIZED_PAULIS = [
            PAULI_MATRICES[c] / np.sqrt(2.0) for c in "IXYZ"
        ]
    return _NORMALIZED_PAULIS


@dataclass
class SplitPlan:
    """Precomputed structure for splitting a circuit around one component.

    The forward pass applies the closure of the component's predecessors and
    finishes every qubit untouched by the component and its successors; the
    backward pass does the mirror image. Both residuals live on the shared
    qubits (the component's support plus spectators touched on both sides).
    """

    circuit: MapCircuit
    component: int
    prefix: tuple[int, ...]
    suffix: tuple[int, ...]
    shared: tuple[int, ...]
    spectators: tuple[int, ...]
    fwd_steps: tuple[ScheduleStep, ...]
    bwd_steps: tuple[ScheduleStep, ...]
    bwd_circuit: MapCircuit
    basis: tuple[np.ndarray, ...]
    peak_active: int


def split_plan(circuit: MapCircuit, component: int) -> SplitPlan:
    comps = circuit.components
    if not 0 <= component < len(comps):
        raise ValidationError(f"no component {component} in circuit")
    s_support = set(comps[component].qubits)
    all_indices = set(range(len(comps)))
    prefix = _closure(circuit, all_indices - {component}, _predecessor_seeds(circuit, component))
    prefix_set = set(prefix)
    suffix = [ci for ci in sorted(all_indices - prefix_set - {component})]

    touched_pre = {q for ci in prefix for q in comps[ci].qubits}
    touched_suf = {q for ci in suffix for q in comps[ci].qubits}
    shared = sorted(s_support | (touched_pre & touched_suf))
    spect = [q for q in shared if q not in s_support]

    blocked_f = s_support | touched_suf
    traceable_f = [q for q in range(circuit.num_qubits) if q not in blocked_f]
    fwd_steps, peak_f, absorbed_f, applied_f = _greedy_schedule(
        circuit, prefix, traceable_f
    )
    fwd_steps = list(fwd_steps)
    _append_leftovers(circuit, prefix, applied_f, absorbed_f, fwd_steps)
    for q in shared:
        if q not in absorbed_f:
            fwd_steps.append(ScheduleStep("absorb", qubit=q))
            absorbed_f.add(q)

    bwd_circuit = _suffix_mirror(circuit, suffix)
    # component indices in bwd_circuit: position j holds original suffix[-1-j]
    blocked_b = s_support | touched_pre
    traceable_b = [q for q in range(circuit.num_qubits) if q not in blocked_b and q in touched_suf]
    bwd_steps, peak_b, absorbed_b, applied_b = _greedy_schedule(
        bwd_circuit, range(len(suffix)), traceable_b
    )
    bwd_steps = list(bwd_steps)
    _append_leftovers(bwd_circuit, range(len(suffix)), applied_b, absorbed_b, bwd_steps)
    for q in shared:
        if q not in absorbed_b:
            bwd_steps.append(ScheduleStep("absorb", qubit=q))
            absorbed_b.add(q)

    basis = _spectator_basis(len(spect))
    return SplitPlan(
        circuit=circuit,
        component=component,
        prefix=tuple(prefix),
        suffix=tuple(suffix),
        shared=tuple(shared),
        spectators=tuple(spect),
        fwd_steps=tuple(fwd_steps),
        bwd_steps=tuple(bwd_steps),
        bwd_circuit=bwd_circuit,
        basis=basis,
        peak_active=max(peak_f, peak_b, len(shared)),
    )


def _predecessor_seeds(circuit: MapCircuit, component: int) -> list[int]:
    sup = set(circuit.components[component].qubits)
    return [
        ci
        for ci in range(component)
        if set(circuit.components[ci].qubits) & sup
    ]


def _append_leftovers(circuit, pool, applied, absorbed, steps):
    for ci in sorted(set(pool) - applied):
        for q in sorted(circuit.components[ci].qubits):
            if q not in absorbed:
                steps.append(ScheduleStep("absorb", qubit=q))
                absorbed.add(q)
        steps.append(ScheduleStep("apply", component=ci))
        applied.add(ci)


def _suffix_mirror(circuit: MapCircuit, suffix) -> MapCircuit:
    comps = [
        Component(1, circuit.components[ci].qubits, adjoint_map(circuit.components[ci].map))
        for ci in reversed(list(suffix))
    ]
    # layer numbers are irrelevant here; application order carries the meaning
    return MapCircuit(circuit.num_qubits, tuple(comps), "general")


def _spectator_basis(count: int) -> tuple[np.ndarray, ...]:
    mats = _normalized_paulis()
    out = [np.array([[1.0 + 0.0j]])]
    for _ in range(count):
        out = [np.kron(b, p) for b in out for p in mats]
    return tuple(out)


def split_evaluate(circuit, component, dual_factors, pauli, plan: SplitPlan | None = None):
    """Residual pairs (R_a, Rbar_a) such that, for any replacement map L on
    the singled-out component's qubits,

        Tr[L_circuit(F)(G)]  =  sum_a Tr[L(R_a) Rbar_a].

    The index a runs over the normalized Pauli basis of the spectator qubits;
    with no spectators the list has a single pair.
    """
    if plan is None:
        key = ("split", component)
        plan = circuit._cache.get(key)
        if plan is None:
            plan = split_plan(circuit, component)
            circuit._cache[key] = plan
    n = circuit.num_qubits
    ins = _factor_list(dual_factors, n)
    outs = _factor_list(pauli, n)

    active_f, res_f = _run_steps(circuit, plan.fwd_steps, ins, outs)
    active_b, res_b = _run_steps(plan.bwd_circuit, plan.bwd_steps, outs, ins)
    if tuple(active_f) != plan.shared or tuple(active_b) != plan.shared:
        raise ValidationError("split residuals ended on unexpected qubit sets")

    sup = circuit.components[plan.component].qubits
    r = _group_support_first(res_f, plan.shared, sup)
    rbar = _group_support_first(res_b, plan.shared, sup)
    ds = 2 ** len(sup)
    dm = 2 ** len(plan.spectators)
    r4 = r.reshape(ds, dm, ds, dm)
    rbar4 = rbar.reshape(ds, dm, ds, dm)
    pairs = []
    for b in plan.basis:
        ra = np.einsum("xwyu,uw->xy", r4, b)
        rbara = np.einsum("xwyu,uw->xy", rbar4, b)
        pairs.append((ra, rbara))
    return pairs


def _group_support_first(res, shared, support):
    """Permute a residual on ``shared`` (ascending) so the support qubits come
    first (in component order), spectators after (ascending)."""
    shared = list(shared)
    a = len(shared)
    order = [shared.index(q) for q in support] + [
        shared.index(q) for q in shared if q not in support
    ]
    t = res.reshape((2,) * (2 * a))
    t = t.transpose([*order, *[a + p for p in order]])
    d = 2**a
    return t.reshape(d, d)


def split_value(pairs, local_map: LocalMap) -> complex:
    """sum_a Tr[L(R_a) Rbar_a] for residual pairs from :func:`split_evaluate`."""
    total = 0.0 + 0.0j
    for ra, rbara in pairs:
        total += trace_mul(local_map.apply(ra), rbara)
    return complex(total)


# ---------------------------------------------------------------------------
# circuit files


def circuit_to_dict(circuit: MapCircuit) -> dict:
    return {
        "num_qubits": circuit.num_qubits,
        "topology": circuit.topology,
        "components": [
            {
                "layer": c.layer,
                "qubits": list(c.qubits),
                "map": map_to_payload(c.map),
            }
            for c in circuit.components
        ],
    }


def circuit_from_dict(payload: dict) -> MapCircuit:
    if not isinstance(payload, dict):
        raise ValidationError("circuit payload must be a JSON object")
    try:
        n = int(payload["num_qubits"])
        topology = str(payload.get("topology", "general"))
        raw = payload["components"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"circuit payload missing fields: {exc}") from exc
    comps = []
    for entry in raw:
        try:
            layer = int(entry["layer"])
            qubits = tuple(int(q) for q in entry["qubits"])
            spec = entry["map"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed circuit component {entry!r}") from exc
        comps.append(Component(layer, qubits, map_from_spec(spec, len(qubits))))
    return MapCircuit(n, tuple(comps), topology)


def save_circuit(circuit: MapCircuit, path) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(circuit)) + "\n")


def load_circuit(path) -> MapCircuit:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"circuit file is not valid JSON: {exc}") from exc
    return circuit_from_dict(payload)
