"""Synthetic financial claim-document dataset pipeline and verifier evaluation."""

__version__ = "0.1.0"

from .core import (
    Claim,
    Document,
    Label,
    LabeledTriplet,
    ModuleKind,
    content_key,
    normalize_text,
    validate_triplet,
)

__all__ = [
    "Claim",
    "Document",
    "Label",
    "LabeledTriplet",
    "ModuleKind",
    "content_key",
    "normalize_text",
    "validate_triplet",
    "__version__",
]
