"""Exceptions raised by the fitting library. The CLI reports `code` in its error JSON."""

from typing import Any, Dict


class ModalFitError(ValueError):
    code = 'modalfit_error'

    def to_dict(self) -> Dict[str, Any]:
        return {'error': self.code, 'message': str(self)}


class EmptyInput(ModalFitError):
    code = 'empty_input'


class NonFiniteValue(ModalFitError):
    code = 'non_finite_value'

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"non-finite value at index {index}")

    def to_dict(self) -> Dict[str, Any]:
        return {**super().to_dict(), 'index': self.index}


class MultiColumnInput(ModalFitError):
    code = 'multi_column_input'


class LengthMismatch(ModalFitError):
    code = 'length_mismatch'


class NoInteriorPoints(ModalFitError):
    code = 'no_interior_points'


class TooFewPoints(ModalFitError):
    code = 'too_few_points'


class DegenerateSample(ModalFitError):
    code = 'degenerate_sample'


class InfeasibleK(ModalFitError):
    code = 'infeasible_k'


class EmptyModalInterval(ModalFitError):
    code = 'empty_modal_interval'


class OverlapViolation(ModalFitError):
    code = 'overlap_violation'


class TooFewPointsForFolds(ModalFitError):
    code = 'too_few_points_for_folds'


class MalformedDensityFile(ModalFitError):
    code = 'malformed_density_file'
