"""Observable estimation under virtual local-map circuits.

Estimate Tr[L(rho) O] from informationally complete single-qubit measurement
records by evaluating only the causal cone of each observable term, and
variationally optimize the circuit's component maps under CPTP constraints.
"""

from .cone import (
    Component,
    EvaluationSchedule,
    MapCircuit,
    brickwork,
    circuit_from_dict,
    circuit_to_dict,
    evaluate_trace,
    evaluate_trace_backward,
    load_circuit,
    mirror_adjoint,
    save_circuit,
    schedule,
    split_evaluate,
    split_plan,
    split_value,
    staircase,
)
from .densesim import (
    DensityMatrix,
    OutcomeBatch,
    apply_circuit_dense,
    apply_local_map,
    build_perturbed_state,
    build_state,
    computational_zero,
    dense_map_circuit_oracle,
    exact_ground_energy,
    from_statevector,
    maximally_mixed,
    noisy_chain_state,
    noisy_cnot,
    outcome_distribution,
    perturbation_circuit,
    read_batch,
    sample_outcomes,
    write_batch,
)
from .errors import NumericalError, ValidationError
from .estimation import (
    Estimate,
    estimate,
    estimate_covariance,
    estimate_exact,
    shot_weight,
)
from .maps import (
    ChoiMatrix,
    LocalMap,
    adjoint_map,
    choi_to_superop,
    cnot_map,
    compose,
    depolarizing_map,
    identity_map,
    invert_map,
    is_cptp,
    kraus_map,
    map_from_spec,
    random_cptp_map,
    random_tp_hermitian_map,
    random_unitary_map,
    superop_to_choi,
    tensor_extend,
    tensor_maps,
    unitary_map,
    zreset_map,
)
from .pauli import Observable, PauliString, parse_observable, write_observable, xx_hamiltonian
from .povm import (
    DualFrame,
    SingleQubitPOVM,
    compute_duals,
    get_povm,
    make_sic_povm,
    read_povm,
    write_povm,
)
from .varopt import (
    DenseStateData,
    LocalObjective,
    ProductInputData,
    SdpOptions,
    SweepOptions,
    SweepReport,
    assemble_local_objective,
    circuit_energy,
    classical_ansatz,
    classical_input,
    data_from_batch,
    data_from_distribution,
    minimize_over_cptp,
    project_cptp,
    sweep,
    zreset_compose,
)

__version__ = "0.1.0"
