"""Intermodal shipment plus last-mile delivery: monolithic MILP and logic-based Benders decomposition."""
from .instance import Instance, InstanceError, validate_instance
from .generator import GeneratorConfig, generate

__version__ = "0.1.0"

__all__ = ["Instance", "InstanceError", "validate_instance", "GeneratorConfig", "generate", "__version__"]
