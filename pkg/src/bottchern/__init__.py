"""Exact jet-level computations with cohesive modules and their characteristic forms."""

from .jetalg import Jet, JetRing, Param, Scalar
from .forms import Form
from .gbundle import EndForm, GradedBundle, HermitianMetric, SectionForm
from .cohesive import CohesiveModule, Superconnection

__version__ = "0.1.0"

__all__ = [
    "Jet",
    "JetRing",
    "Param",
    "Scalar",
    "Form",
    "EndForm",
    "GradedBundle",
    "HermitianMetric",
    "SectionForm",
    "CohesiveModule",
    "Superconnection",
    "__version__",
]
