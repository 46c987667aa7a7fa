"""HTTP face of the simulator and tuner: request/response models, a small
background job manager for long-running experiments, and the FastAPI app."""

from .app import create_app

__all__ = ["create_app"]
