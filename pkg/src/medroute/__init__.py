"""medroute: specialist-routing gateway for medical question answering.

Routes a question over ten medical specialties, fans it out concurrently to
the selected specialist model backends, synthesizes their answers into one
response, and tracks multi-turn conversation state. Ships native QA metrics
(ROUGE, BLEU, METEOR, embedding F1) and router calibration/evaluation.
"""

__version__ = "0.1.0"

from .core import (
    FinalAnswer,
    LabelScore,
    QAExample,
    RoutingDecision,
    SpecialistResponse,
    SpecialtyLabel,
    Strategy,
    default_label_registry,
)
from .errors import MedrouteError

__all__ = [
    "__version__",
    "FinalAnswer",
    "LabelScore",
    "MedrouteError",
    "QAExample",
    "RoutingDecision",
    "SpecialistResponse",
    "SpecialtyLabel",
    "Strategy",
    "default_label_registry",
]
