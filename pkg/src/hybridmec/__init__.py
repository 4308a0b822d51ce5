"""Simulation and learning tools for hybrid backscatter/active edge offloading."""

__version__ = "0.1.0"

from hybridmec import agents, env, errors, harness, nn, policies, replay

__all__ = ["agents", "env", "errors", "harness", "nn", "policies", "replay",
           "__version__"]
