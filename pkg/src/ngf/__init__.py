"""Neural Green's functions on grid domains: exact discrete oracle, templated
problems, a learned factorized solution operator and its evaluation harness."""
from .estimators import DirectRegressor, NeuralGreensRegressor
from .exceptions import (ContractViolation, DenseCapExceeded, DivergedTraining, NgfError,
                         NonPositiveSpectrum, SingularOperator, ZeroReference)
from .geometry import Domain, build_grid_domain
from .metrics import relative_l2

__version__ = "0.1.0"

__all__ = ["Domain", "build_grid_domain", "NeuralGreensRegressor", "DirectRegressor", "relative_l2",
           "NgfError", "ContractViolation", "SingularOperator", "DenseCapExceeded",
           "NonPositiveSpectrum", "ZeroReference", "DivergedTraining"]
