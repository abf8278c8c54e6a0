"""Offline weight converter for the sub-style transfer engine.

Turns reference VGG-19 encoder/decoder checkpoints into SSWT weight banks and
emits golden feature fixtures for cross-implementation parity testing.  The
stylization engine is a separate package; the only thing the two share is the
SSWT container format.
"""

from .convert import ConversionError, convert, load_checkpoint, validate_chain
from .fixtures import emit_fixtures
from .synth import synthesize

__version__ = "0.1.0"

__all__ = [
    "ConversionError",
    "convert",
    "load_checkpoint",
    "validate_chain",
    "emit_fixtures",
    "synthesize",
    "__version__",
]
