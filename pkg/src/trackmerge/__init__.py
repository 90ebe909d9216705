"""Two-stage multi-object tracking: thresholded assignment builds pure tracklets,
a hierarchical message-passing network merges them into trajectories."""

__version__ = "0.1.0"
