"""ghostfiber: computational distributed fiber sensing with coded pulse
sequences.

The pipeline: binary pattern pairs modulate the probing pulse train, a single
slow detector integrates each sequence into one bucket value, and the spatial
profile is reconstructed from bucket-pattern correlations (or exactly, for a
complete Walsh set, by the inverse fast Walsh-Hadamard transform). Sweeping
the pump-probe detuning and fitting a Lorentzian per position yields the
distributed resonance-frequency profile.
"""

__version__ = "0.1.0"

from .acquisition import (
    AcquisitionPlan,
    AcquisitionRecord,
    DigitizerConfig,
    acquire,
    acquire_interleaved,
    acquire_sectioned,
    bit_grid_response,
    conventional_measurement,
    integrate_pattern,
    minimum_single_sequence_order,
    quantize,
    resolve_digitizers,
    section_reference_levels,
)
from .fiber import (
    DEFAULT_GROUP_INDEX,
    SPEED_OF_LIGHT_M_PER_S,
    FiberProfile,
    FiberSegment,
    TemporalImage,
    conventional_trace,
    delay_to_position,
    fiber_from_dict,
    fiber_to_dict,
    integrated_response,
    load_fiber,
    local_response,
    lorentzian_line,
    position_to_delay,
    response_density,
    small_gain_check,
    windowed_response,
)
from .patterns import (
    BinaryPatternPair,
    ReferencePair,
    format_patterns,
    hadamard_matrix,
    pattern_matrix,
    random_pattern_pairs,
    reference_pair,
    walsh_pattern_pairs,
)
from .reconstruction import (
    DifferentialGhostImager,
    InverseHadamardImager,
    ReconstructionResult,
    dgi_reconstruct,
    fast_walsh_hadamard,
    interleave,
    iwht_reconstruct,
    snr_estimate,
    stitch_sections,
)
from .spectroscopy import (
    BfsProfile,
    EdgeMeasurementError,
    LorentzianFit,
    LorentzianPeakModel,
    NoPeakError,
    SpectrumMap,
    bfs_profile,
    conventional_full_scale,
    conventional_spectrum_map,
    default_patterns,
    edge_width,
    frequency_sweep,
    lorentzian_fit,
    measure_profile,
)
from .validation import ConfigError, DataError

__all__ = [
    "__version__",
    "AcquisitionPlan",
    "AcquisitionRecord",
    "BfsProfile",
    "BinaryPatternPair",
    "ConfigError",
    "DataError",
    "DEFAULT_GROUP_INDEX",
    "DifferentialGhostImager",
    "DigitizerConfig",
    "EdgeMeasurementError",
    "FiberProfile",
    "FiberSegment",
    "InverseHadamardImager",
    "LorentzianFit",
    "LorentzianPeakModel",
    "NoPeakError",
    "ReconstructionResult",
    "ReferencePair",
    "SPEED_OF_LIGHT_M_PER_S",
    "SpectrumMap",
    "TemporalImage",
    "acquire",
    "acquire_interleaved",
    "acquire_sectioned",
    "bfs_profile",
    "bit_grid_response",
    "conventional_full_scale",
    "conventional_measurement",
    "conventional_spectrum_map",
    "conventional_trace",
    "default_patterns",
    "delay_to_position",
    "dgi_reconstruct",
    "edge_width",
    "fast_walsh_hadamard",
    "fiber_from_dict",
    "fiber_to_dict",
    "format_patterns",
    "frequency_sweep",
    "hadamard_matrix",
    "integrate_pattern",
    "integrated_response",
    "interleave",
    "iwht_reconstruct",
    "load_fiber",
    "local_response",
    "lorentzian_fit",
    "lorentzian_line",
    "measure_profile",
    "minimum_single_sequence_order",
    "pattern_matrix",
    "position_to_delay",
    "quantize",
    "random_pattern_pairs",
    "reference_pair",
    "resolve_digitizers",
    "response_density",
    "section_reference_levels",
    "small_gain_check",
    "snr_estimate",
    "stitch_sections",
    "walsh_pattern_pairs",
    "windowed_response",
]
