"""Buffer-aided cooperative relaying: simulation, relay-selection heuristics,
finite-MDP oracles and from-scratch learners."""
from .env import BacnEnv, EnvConfig, SchemeParams, StepOutcome
from .errors import BacnError
from .topology import NetworkGraph, build_graph

__version__ = "0.1.0"

__all__ = ["BacnEnv", "EnvConfig", "SchemeParams", "StepOutcome", "BacnError",
           "NetworkGraph", "build_graph", "__version__"]
