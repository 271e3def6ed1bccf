"""Corroboration-based human activity recognition.

Each device classifies its own IMU windows with a probability-emitting
backbone, broadcasts the probability vector to its session neighbors and
averages what it receives into a corroborated decision.
"""

from .classifier import ForestConfig, RandomForest, SmoteConfig, smote_balance, train_forest
from .corroboration import Aggregation, Decision, DeviceState, ProbabilityVector, aggregate, local_infer, receive
from .dataset import (
    GWS_LABELS,
    LabelDictionary,
    Session,
    SubjectStream,
    SyntheticConfig,
    generate_synthetic,
    load_sessions,
    repair_gaps,
    write_sessions,
)
from .evaluation import compare, score
from .features import WindowSpec, extract_features, make_windows
from .simulator import NetworkModel, SessionTrace, SimConfig, run_experiment, run_session

__version__ = "0.1.0"
