"""mmWave channel front-end: geometry, training, whitening, dictionaries."""

from momp.channel.dictionaries import (
    angular_grid,
    atom_count,
    build_dictionaries,
    delay_grid,
    extract_paths,
    quantize_paths,
    reconstruct_taps,
)
from momp.channel.geometry import ArrayGeometry, channel_taps, partial_steering, steering, time_response
from momp.channel.training import (
    FrameSeparableTensor,
    MeasurementSet,
    TrainingSet,
    build_measurement_tensor,
    build_pilot,
    build_training_dft,
    measure,
    synthesize_measurements,
    whiten,
    whiten_frames,
)

__all__ = [
    "ArrayGeometry",
    "FrameSeparableTensor",
    "MeasurementSet",
    "TrainingSet",
    "angular_grid",
    "atom_count",
    "build_dictionaries",
    "build_measurement_tensor",
    "build_pilot",
    "build_training_dft",
    "channel_taps",
    "delay_grid",
    "extract_paths",
    "quantize_paths",
    "measure",
    "partial_steering",
    "reconstruct_taps",
    "steering",
    "synthesize_measurements",
    "time_response",
    "whiten",
    "whiten_frames",
]
