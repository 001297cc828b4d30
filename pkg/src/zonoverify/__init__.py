"""Zonotope-based neural network verification with input refinement against unsafe output sets."""
from .engine import EngineConfig, Heuristic, Status, UnknownReason, Verdict, verify
from .errors import ContractError, ParseError, VerifierError
from .network import Network, forward, load_network, parse_json_net, parse_nnet, serialize_json_net
from .setlib import ConstraintSet, FactorBox, HPolytope, Interval, Zonotope
from .specparse import VerificationTask, parse_vnnlib, parse_witness, write_witness

__version__ = "1.0.0"

__all__ = [
    "ConstraintSet",
    "ContractError",
    "EngineConfig",
    "FactorBox",
    "HPolytope",
    "Heuristic",
    "Interval",
    "Network",
    "ParseError",
    "Status",
    "UnknownReason",
    "Verdict",
    "VerificationTask",
    "VerifierError",
    "Zonotope",
    "forward",
    "load_network",
    "parse_json_net",
    "parse_nnet",
    "parse_vnnlib",
    "parse_witness",
    "serialize_json_net",
    "verify",
    "write_witness",
]
