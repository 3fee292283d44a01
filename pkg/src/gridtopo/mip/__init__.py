"""Mixed-integer program representation, solve backends, MPS I/O and an enumeration oracle."""
from .backends import ConfigurationError, available_backends, get_backend, register_backend, solve
from .enumerate import MAX_BINARIES, enumerate_binaries
from .model import EQ, FEAS_TOL, GE, LE, MipBuilder, MipError, MipInstance, MipSolution
from .mps import export_mps, mapping_path, read_mps

__all__ = [
    "EQ", "FEAS_TOL", "GE", "LE", "MAX_BINARIES", "ConfigurationError", "MipBuilder", "MipError",
    "MipInstance", "MipSolution", "available_backends", "enumerate_binaries", "export_mps",
    "get_backend", "mapping_path", "read_mps", "register_backend", "solve",
]
