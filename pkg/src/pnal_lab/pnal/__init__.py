from .selection import (HistoryBuffer, ReliableSet, confidence, label_distribution, record_predictions,
                        select_reliable)
from .training import PnalConfig, TrainResult, evaluate, run_training
from .voting import VoteTally, correct_cluster, eligible_clusters, pick_winner, tally_votes

__all__ = [
    "HistoryBuffer", "ReliableSet", "confidence", "label_distribution", "record_predictions",
    "select_reliable", "PnalConfig", "TrainResult", "evaluate", "run_training", "VoteTally",
    "correct_cluster", "eligible_clusters", "pick_winner", "tally_votes",
]
