"""Tracking of growing, dividing rod-shaped cells in 3-D time-lapse point data."""

from .division import (DegenerateGeometryError, PrincipalFrame, confirm_division,
                       detect_divisions, principal_frame, projection_value)
from .features import (CandidateAssociation, Projection, build_history, feature_length,
                       generate_candidates, instance_feature)
from .matching import (AssignmentProblem, MatchResult, build_system_matrix, is_feasible,
                       match_conflict_sweep, match_bruteforce, match_greedy_sorted)
from .metrics import (build_graph, division_f1, evaluate, evaluate_result, tra)
from .model import (DivisionEvent, FrameObservations, GroundTruthLineage,
                    InstanceObservation, Sequence, Track, validate_sequence)
from .scorer import (DistanceScorer, NeuralScorer, TrainConfig, TrainingSet, load_model,
                     make_training_pairs, save_model, score, train)
from .simulate import SimConfig, run_simulation, simulate
from .tracker import TrackerConfig, TrackingResult, track_sequence

__version__ = "0.1.0"
