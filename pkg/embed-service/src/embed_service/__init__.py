from .app import create_app
from .encoders import HFDualEncoder, ServiceInfo, StubEncoder, build_encoder

__all__ = ["create_app", "build_encoder", "StubEncoder", "HFDualEncoder", "ServiceInfo"]
