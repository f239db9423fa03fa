"""View-graph relational classification with a learnable Hausdorff edit distance."""

from .complementarity import ComplementarityConfig
from .encoder import EncoderConfig, GatParams
from .graphs import ExplanationSubgraph, ViewGraph, edge_weight, export_dot, induced_subgraph
from .hed import ConstantCostHead, CostHead, HedResult, LinearCostHead, exact_ged, hed
from .proxies import ProxyAnchorConfig, ProxyGraph, SinkhornConfig, classify, sinkhorn
from .synth import NoiseModel, SynthConfig, SynthDataset, SynthInstance, generate
from .training import AblationConfig, TrainConfig, TrainedModel, TrainReport, evaluate, train
from .transitivity import TransitivityConfig

__all__ = [
    "AblationConfig", "ComplementarityConfig", "ConstantCostHead", "CostHead",
    "EncoderConfig", "ExplanationSubgraph", "GatParams", "HedResult",
    "LinearCostHead", "NoiseModel", "ProxyAnchorConfig", "ProxyGraph",
    "SinkhornConfig", "SynthConfig", "SynthDataset", "SynthInstance",
    "TrainConfig", "TrainReport", "TrainedModel", "TransitivityConfig",
    "ViewGraph", "classify", "edge_weight", "evaluate", "exact_ged",
    "export_dot", "generate", "hed", "induced_subgraph", "sinkhorn", "train",
]
