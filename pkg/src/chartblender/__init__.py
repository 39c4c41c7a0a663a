"""Motion-synchronized chart embedding for video.

Recovers camera trajectories or moving-object poses from RGB frames plus
metric depth, renders video-suited chart templates, and composites them
into frames with perspective-consistent projection.
"""

__version__ = "0.1.0"
