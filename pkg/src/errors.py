# -*- coding: utf-8 -*-
"""
Exception hierarchy for the adaptive scenario-MPC pipeline
"""

from typing import Optional, Sequence


class PipelineError(Exception):
    """Base exception for every failure raised by the pipeline"""
    pass


class ContractViolation(PipelineError):
    """A precondition of a public operation was violated"""
    pass


class ShapeError(ContractViolation):
    """Tensor shapes do not conform for a primitive"""

    def __init__(self, primitive: str, *shapes):
        self.primitive = primitive
        self.shapes = shapes
        shape_text = ", ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{primitive}: incompatible shapes {shape_text}")


class TapeError(ContractViolation):
    """Invalid use of a gradient tape"""
    pass


class ConfigError(ContractViolation):
    """Configuration file rejected"""
    pass


class WindowError(ContractViolation):
    """Malformed trajectory window"""
    pass


class InfeasibleScenarioError(ContractViolation):
    """Moment matching has no non-negative solution for the multipliers"""
    pass


class NonFiniteError(PipelineError):
    """A tensor primitive produced NaN or Inf"""

    def __init__(self, primitive: str):
        self.primitive = primitive
        super().__init__(f"{primitive}: produced non-finite values")


class DivergenceError(PipelineError):
    """Simulation or prediction left the finite range"""

    def __init__(self, message: str, last_state: Optional[Sequence[float]] = None):
        self.last_state = None if last_state is None else list(last_state)
        super().__init__(message)


class TrainingDivergedError(DivergenceError):
    """Loss became non-finite during training"""

    def __init__(self, message: str, last_finite_epoch: int):
        self.last_finite_epoch = last_finite_epoch
        super().__init__(f"{message} (last finite epoch: {last_finite_epoch})")


class SingularSystemError(PipelineError):
    """Normal equations could not be solved"""
    pass


class UndefinedScoreError(PipelineError):
    """Fit score undefined for a constant reference sequence"""
    pass


class MissingArtifactError(PipelineError):
    """A prerequisite artifact has not been produced yet"""

    def __init__(self, artifact: str, producer: str):
        self.artifact = artifact
        self.producer = producer
        super().__init__(f"Missing artifact '{artifact}': run the '{producer}' subcommand first")


class AcceptanceFailure(PipelineError):
    """One or more acceptance thresholds were not met"""

    def __init__(self, failures: Sequence[str]):
        self.failures = list(failures)
        super().__init__("Acceptance failed: " + "; ".join(self.failures))
