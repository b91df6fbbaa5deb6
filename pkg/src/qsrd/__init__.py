"""Workbench for the entanglement-assisted quantum rate-distortion function Q'(D) and K(D)."""
from .channels import BlockCode, ChannelMap, CodePair, IsometryMap, apply_isometry, run_code, timeshare
from .distortion import DistortionMeasure, EnsembleSource, evaluate
from .entropics import cond_mutual_info, fidelity, mutual_info, trace_distance, von_neumann_entropy
from .instances import InstanceFile, ResultFile, __version__, load_instance
from .k_solver import KInstance, KPoint, estimate_K
from .rd_solver import RDCurve, RDInstance, RDPoint, estimate_D0, estimate_Qprime, sweep_curve
from .reports import ChainReport, ChainStep
from .tensor_core import Operator, QuantumState, SystemLayout

__all__ = [
    "BlockCode", "ChainReport", "ChainStep", "ChannelMap", "CodePair", "DistortionMeasure", "EnsembleSource",
    "InstanceFile", "IsometryMap", "KInstance", "KPoint", "Operator", "QuantumState", "RDCurve", "RDInstance",
    "RDPoint", "ResultFile", "SystemLayout", "__version__", "apply_isometry", "cond_mutual_info", "estimate_D0",
    "estimate_K", "estimate_Qprime", "evaluate", "fidelity", "load_instance", "mutual_info", "run_code",
    "sweep_curve", "timeshare", "trace_distance", "von_neumann_entropy",
]
