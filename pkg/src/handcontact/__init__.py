"""Semi-supervised hand-object contact prediction from motion cues."""

__version__ = "0.1.0"
