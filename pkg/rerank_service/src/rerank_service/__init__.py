"""Cross-encoder pair-scoring microservice speaking the /rerank protocol."""

__version__ = "0.1.0"

from .app import create_app
from .config import ServiceConfig
from .model import CrossEncoderModel, ModelLoadError

__all__ = ["CrossEncoderModel", "ModelLoadError", "ServiceConfig", "create_app"]
