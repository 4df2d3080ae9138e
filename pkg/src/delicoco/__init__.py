"""Decentralized optimization with compressed gossip and error feedback."""
from delicoco.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
