"""Open-play tactic discovery toolkit.

Converts tracking + event data into spatiotemporal graph instances, trains a
language-conditioned variational trajectory generator on them, scores
proposals with tactical value metrics, and searches the counterfactual event
tree with a heuristic or remote multimodal-LLM critic.
"""

__version__ = "0.1.0"

from .pitch import (Entity, EventDescription, EventType, MetaAction, Outcome,
                    Pitch, SpatiotemporalGraph, TacticPath, Team)

__all__ = [
    "Entity", "EventDescription", "EventType", "MetaAction", "Outcome",
    "Pitch", "SpatiotemporalGraph", "TacticPath", "Team", "__version__",
]
