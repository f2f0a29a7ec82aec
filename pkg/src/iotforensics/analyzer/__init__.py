"""Investigation-time analysis of forensic logs."""
from __future__ import annotations

from .detect import (
    PRECEDENCE, Detection, DetectionParams, anomalous_slots, default_tau, detect, detect_anomalies,
    merge_detections, scan_policy, window_class,
)
from .features import (
    SLOT_MS, UNKNOWN, Feature, FeatureSchema, LabeledRecord, MissingThreshold, SchemaMismatch, StateRun,
    StateSequence, StateVector, binarize, build_states, label_logs, schema_for_topology, thresholds_from_logs,
)
from .markov import (
    EPSILON, InsufficientData, ModelFormatError, TransitionModel, predict_next, sequence_log_probability,
    sequence_probability, train, train_many, transition_prob,
)
from .metrics import Confusion, EvalWindow, MetricsReport, evaluate, split_train_test
from .policy import PolicyError, SecurityPolicy, Window, load_policy, policy_for_scenario, policy_from_dict
from .tamper import CooperationModel, TamperReport, contradiction_ratios, detect_tampered, tamper_detections

__all__ = [n for n in dir() if not n.startswith("_")]
