"""templm-bridge: serve a neural conditional LM under the templm wire contract."""

from .model import CharTransformer, WordScorer, build_vocab_from_corpus
from .server import create_app

__version__ = "0.1.0"

__all__ = ["CharTransformer", "WordScorer", "build_vocab_from_corpus", "create_app", "__version__"]
