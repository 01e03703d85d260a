"""Occlusion boundaries with border ownership.

Dense per-pixel representation (boundary strength e, tangent direction
theta with the foreground on the visual left), losses for training on it,
a small numpy conv net, non-maximum-suppression inference, recall/accuracy
evaluation, annotation-to-ground-truth reconstruction and a synthetic
scene generator.
"""

__version__ = "0.1.0"
