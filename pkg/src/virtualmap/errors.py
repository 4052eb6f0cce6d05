"""Exception types mapped to CLI exit codes."""


class ValidationError(ValueError):
    """Malformed input: bad files, wrong shapes, infeasible requests. Exit code 2."""


class NumericalError(RuntimeError):
    """Numerical failure: conditioning, non-convergence, residue blow-up. Exit code 3."""
