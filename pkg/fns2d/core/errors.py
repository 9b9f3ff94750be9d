from __future__ import annotations


class FNS2DError(Exception):
    pass


# ====================
# Preconditions
# ====================
class ConfigError(FNS2DError, ValueError):
    pass


class PreconditionError(FNS2DError, ValueError):
    pass


class CutoffMismatchError(PreconditionError):
    def __init__(self, a: int, b: int):
        super().__init__(f"cutoff mismatch: {a} vs {b}")
        self.cutoffs = (a, b)


class AliasingError(PreconditionError):
    pass


class DegenerateResolutionError(PreconditionError):
    pass


class HurstMismatchError(PreconditionError):
    pass


class DomainError(PreconditionError):
    pass


class UnresolvedDecayError(PreconditionError):
    pass


# ====================
# Numerical failures
# ====================
class NumericalError(FNS2DError, RuntimeError):
    pass


class SamplerError(NumericalError):
    pass


class CholeskyFailure(SamplerError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number ~ {condition:.3e})")
        self.condition = condition


class CirculantEmbeddingError(SamplerError):
    def __init__(self, message: str, min_eigenvalue: float):
        super().__init__(f"{message} (smallest eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


class QuadratureError(NumericalError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved bound {achieved:.3e})")
        self.achieved = achieved


class BudgetError(NumericalError):
    pass


class LocalFailureError(NumericalError):
    def __init__(self, factor: float, history=None):
        super().__init__(f"no contraction on any prefix, measured factor {factor:.4f}")
        self.factor = factor
        self.history = history


class BlowUpError(NumericalError):
    def __init__(self, time: float, value: float, partial=None):
        super().__init__(f"blow-up threshold exceeded at t={time:.4f} (norm {value:.3e})")
        self.time = time
        self.value = value
        self.partial = partial
