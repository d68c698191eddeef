"""Streaming sense-unit segmentation and simultaneous translation simulator."""

from .cif import cif_integrate, integrate_scaled_unit, scale_weights, segment_by_threshold
from .datagen import LatencyTag, Manifest, UtteranceRecord, generate_corpus, read_manifest, write_manifest
from .detector import detector_new, oracle_ground_truth, oracle_uniform, push_frame, run_stream
from .metrics import DelayProfile, EfficiencyStats, avg_decision_time, corpus_bleu, laal, rtf
from .policies import parse_policy
from .simulator import OracleSpec, run_corpus, run_session
from .training import loss_qua1, loss_qua2, train_toy_predictor

__version__ = "0.1.0"
