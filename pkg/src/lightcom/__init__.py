"""Link-level simulator and optimization toolkit for QoE-oriented image
transmission: block-mean source coding, importance-aware bit-plane
framing, weak channel codes over M-QAM/AWGN, waterfilling power
allocation, no-reference perceptual metrics, and perceived-coverage
analysis."""

__version__ = "0.1.0"

from .source_codec import (Image, CompressedRep, BitPlaneFrame, block_mean_encode,
                           split_bitplanes, merge_bitplanes, plane_weights)
from .phy import CodecSpec, ModulationSpec, SubStream, wcc_encode, wcc_decode, \
    modulate, transmit_awgn, equalize_demodulate
from .link_models import (ber_uncoded, q_function, fit_coded_ber, CodedBerModel,
                          imse, imse_predicted, inject_residual_error,
                          WeakGaussian, StrongBurst)
from .allocation import (AllocationProblem, AllocationResult, UncodedMode, CodedMode,
                         allocate, allocate_equal, allocate_wf_uncoded,
                         allocate_wf_coded, oracle_grid_search)
from .reconstruct import Reconstructor, reconstruct
from .qoe import (PristineModel, QoEScore, QoEThresholds, niqe_score,
                  fit_pristine_model, semantic_distance, qoe_evaluate,
                  BuiltinHistogramProvider, RemoteEmbeddingProvider)
from .coverage import CoverageMap, sweep_coverage, coverage_gain
from .config import RunConfig, SweepConfig, load_run_config, load_sweep_config
from .runner import run_end_to_end, run_sweep

__all__ = [name for name in dir() if not name.startswith("_")]
