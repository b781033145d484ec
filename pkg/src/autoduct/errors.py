"""Exception types shared across the package.

Every error raised by autoduct derives from AutoductError so callers can
catch the whole family at an API boundary.
"""


class AutoductError(Exception):
    pass


# --- data ingestion / preparation ---

class MissingColumn(AutoductError):
    def __init__(self, column: str):
        super().__init__(f"missing required column {column!r}")
        self.column = column


class NonFiniteValue(AutoductError):
    def __init__(self, row: int, column: str):
        super().__init__(f"non-finite value at data row {row}, column {column!r}")
        self.row = row
        self.column = column


class EmptyFile(AutoductError):
    pass


class FractionSumInvalid(AutoductError):
    pass


class DegenerateFeature(AutoductError):
    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} is constant on the training split")
        self.feature = feature


# --- network / training ---

class DimensionMismatch(AutoductError):
    pass


class LengthMismatch(AutoductError):
    pass


class NonPositiveVariance(AutoductError):
    pass


class DivergedLoss(AutoductError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


# --- ensemble ---

class EmptyEnsemble(AutoductError):
    pass


class VersionMismatch(AutoductError):
    pass


class CorruptArtifact(AutoductError):
    pass


# --- hyperparameter search ---

class DimensionOverflow(AutoductError):
    pass


class OutOfDomain(AutoductError):
    pass


class SingularCovariance(AutoductError):
    pass


class InsufficientTrials(AutoductError):
    pass


# --- agents ---

class UnboundRole(AutoductError):
    def __init__(self, role: str):
        super().__init__(f"artifact role {role!r} is not bound")
        self.role = role


class SchemaInvalid(AutoductError):
    pass


class PlannerUnavailable(AutoductError):
    pass


class AuthFailure(AutoductError):
    pass


class UnknownTool(AutoductError):
    def __init__(self, name: str):
        super().__init__(f"directive names unregistered tool {name!r}")
        self.name = name


class StageExhausted(AutoductError):
    def __init__(self, stage: str, error_count: int):
        super().__init__(f"stage {stage!r} failed {error_count} times, retry budget exhausted")
        self.stage = stage
        self.error_count = error_count


class StepBudgetExhausted(AutoductError):
    def __init__(self, steps: int):
        super().__init__(f"loop did not finish within {steps} steps")
        self.steps = steps


class CorruptState(AutoductError):
    pass


# --- evaluation / reporting ---

class ZeroTarget(AutoductError):
    def __init__(self, index: int):
        super().__init__(f"target value is zero at index {index}; percentage metrics undefined")
        self.index = index


class EmptyInput(AutoductError):
    pass


class IoFailure(AutoductError):
    pass
