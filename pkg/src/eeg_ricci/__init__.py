"""Geometric manifold learning for multi-channel EEG-like signals.

Spectral preprocessing, Ollivier-Ricci flow refinement of per-sample channel
graphs, a distance-preserving graph convolutional embedding and a small 1D
CNN classifier, all in numpy.
"""

from .classify_eval import (
    ClfTrainConfig,
    CnnParams,
    MetricsReport,
    auroc,
    bootstrap_ci,
    cnn_forward,
    evaluate,
    train_cnn,
)
from .embed_gcn import GcnParams, GcnTrainConfig, distance_loss, embed, gcn_forward, gcn_gradient, train_gcn
from .manifold_graph import NodeVector, WeightedSubgraph, build_subgraph, node_distance, shortest_path_distances
from .pipeline import PipelineConfig, denoiser_hook, run_pipeline
from .ricci_flow import (
    CompositeAdjacency,
    FlowTrajectory,
    aggregate_adjacency,
    cut_edges,
    evolve,
    flow_step,
    neighbor_measure,
    ollivier_ricci,
    wasserstein1,
)
from .signal_io import (
    MultiChannelEpoch,
    SignalRecord,
    assemble_epochs,
    measure_snr,
    mix_at_snr,
    parse_record_line,
    synth_epoch,
)
from .spectral import (
    denoise_metrics,
    eigenmap_reduce,
    graph_laplacian,
    mask_low_correlation_segments,
    one_sided_power_spectrum,
    pearson,
    spectral_eigenbasis,
)

__version__ = "0.1.0"
