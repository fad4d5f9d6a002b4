"""Masked-LM backends: abstract contract, uniform mock, tiny reference MLM,
and the remote scoring client/server."""

from .base import Backend, BackendInfo, GradBundle, MaskedQuery
from .reference import ReferenceBackend, build_reference_backend
from .remote import BackendServer, RemoteBackend, remote_score, serve_backend
from .uniform import UniformBackend, build_uniform_backend

__all__ = [
    "Backend",
    "BackendInfo",
    "BackendServer",
    "GradBundle",
    "MaskedQuery",
    "ReferenceBackend",
    "RemoteBackend",
    "UniformBackend",
    "build_reference_backend",
    "build_uniform_backend",
    "remote_score",
    "serve_backend",
]
