"""Line segment matching by sparse L1 (nonnegative lasso) selection.

The most used names are re-exported here; see the submodules for the rest.
"""
from .camera import StereoRig
from .geometry import LineSegment2D, MatchMode, error_vector, pairwise_error_vectors
from .matcher import Match, MatchConfig, MatchSet, filter_epipolar, match_one, match_sets, robust_stats
from .motion import LineObservation, RobustConfig, estimate_motion
from .se3 import PoseSE3, se3_exp, se3_log
from .sparse import NonConvergence, SolverConfig, solve_homotopy, solve_ista
from .synth import SceneConfig, synthesize

__version__ = "0.1.0"

__all__ = [
    "LineObservation", "LineSegment2D", "Match", "MatchConfig", "MatchMode", "MatchSet",
    "NonConvergence", "PoseSE3", "RobustConfig", "SceneConfig", "SolverConfig", "StereoRig",
    "error_vector", "estimate_motion", "filter_epipolar", "match_one", "match_sets",
    "pairwise_error_vectors", "robust_stats", "se3_exp", "se3_log", "solve_homotopy",
    "solve_ista", "synthesize",
]
