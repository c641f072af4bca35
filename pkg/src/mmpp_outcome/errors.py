"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class DataError(ValueError):
    """Malformed dataset file or records inconsistent with the model."""


class NumericalError(RuntimeError):
    """Numerical failure inside a sampler or likelihood evaluation."""


class InfeasibleDataError(NumericalError):
    """A forward pass hit a zero normalizer: the data has no support."""

    def __init__(self, node_index, subject_id=None):
        self.node_index = node_index
        self.subject_id = subject_id
        where = f" (subject {subject_id})" if subject_id is not None else ""
        super().__init__(
            f"forward normalizer vanished at node {node_index}{where}: "
            "data infeasible under the current parameters"
        )


class InfeasibleEndpointsError(NumericalError):
    """Endpoint pair has (numerically) zero transition probability."""


class TruncationError(NumericalError):
    """A truncated series failed to cover the required probability mass."""
