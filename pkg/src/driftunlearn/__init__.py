"""Sliding-window retraining vs. unlearn-then-train for drifting data streams."""
from .datastream import Chunk, DriftSpec, StreamSpec, load_idx, make_stream, materialize
from .model import LossParams
from .scheduler import RunConfig, run, run_pair_with_oracle, run_sw, run_uil
from .train import CostLedger, TrainConfig
from .unlearn import UnlearnConfig, unlearn_chunk

__version__ = "0.1.0"

__all__ = [
    "Chunk", "CostLedger", "DriftSpec", "LossParams", "RunConfig", "StreamSpec", "TrainConfig",
    "UnlearnConfig", "load_idx", "make_stream", "materialize", "run", "run_pair_with_oracle",
    "run_sw", "run_uil", "unlearn_chunk",
]
