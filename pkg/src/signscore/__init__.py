"""signscore: motion-scoring engine for sign-language pose sequences.

Given a learner pose sequence and a scored reference, the pipeline
smooths the motion, embeds per-joint differences over the skeletal
hierarchy, aligns the sequences with derivative dynamic time warping,
and regresses a three-dimensional quality score (smoothness,
completeness, recognizability).
"""

__version__ = "0.1.0"

from .errors import (ParseError, SignscoreError, TrainingDivergence,
                     ValidationError)

__all__ = [
    "__version__",
    "SignscoreError",
    "ValidationError",
    "ParseError",
    "TrainingDivergence",
]
