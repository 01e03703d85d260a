"""Angle arithmetic on the circle (-pi, pi].

Convention used throughout the package: angles are radians in the
half-open interval (-pi, pi], x is +column, y is -row (y grows upward),
so a direction theta maps to the pixel step (drow, dcol) =
(-sin(theta), cos(theta)).
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(theta):
    """Normalize angles to (-pi, pi].

    Args:
        theta: scalar or ndarray of finite angles in radians.

    Returns:
        Same shape as theta, every value in (-pi, pi]. wrap(pi) == pi,
        wrap(-pi) == pi.

    Raises:
        ValueError: if any input is NaN or infinite.
    """
    arr = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap: angles must be finite")
    # pi - mod(pi - t, 2pi) lands exactly in (-pi, pi] for every finite t
    out = np.pi - np.mod(np.pi - arr, TWO_PI)
    if np.ndim(theta) == 0:
        return float(out)
    return out


def circ_dist(a, b):
    """Shortest angular distance, in [0, pi].

    Args:
        a, b: scalars or broadcastable ndarrays of angles in radians.

    Returns:
        min(|a - b| mod 2pi, 2pi - |a - b| mod 2pi), elementwise.
    """
    d = np.mod(
        np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)),
        TWO_PI,
    )
    out = np.minimum(d, TWO_PI - d)
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return float(out)
    return out


def within_quarter_turn(pred, ref):
    """Interval test for direction agreement.

    True where (pred - ref) mod 2pi lies in [0, pi/2) or (3pi/2, 2pi].
    Equivalent to circ_dist(pred, ref) < pi/2; a difference of exactly
    pi/2 counts as disagreement.

    Args:
        pred, ref: scalars or broadcastable ndarrays of angles.

    Returns:
        Boolean scalar or array.
    """
    d = np.mod(
        np.asarray(pred, dtype=np.float64) - np.asarray(ref, dtype=np.float64),
        TWO_PI,
    )
    out = (d < np.pi / 2) | (d > 3 * np.pi / 2)
    if np.ndim(pred) == 0 and np.ndim(ref) == 0:
        return bool(out)
    return out


def direction_step(theta):
    """Unit pixel step (drow, dcol) for a direction angle."""
    return -np.sin(theta), np.cos(theta)


def left_step(theta):
    """Unit pixel step (drow, dcol) towards the visual left of theta.

    The visual left of a traversal direction theta is theta + pi/2 in the
    y-up frame, which is the step (-cos(theta), -sin(theta)) in (row, col).
    """
    return -np.cos(theta), -np.sin(theta)


def chord_angle(p0, p1):
    """Direction angle of the chord from pixel p0 to pixel p1.

    Args:
        p0, p1: (row, col) pairs.

    Returns:
        atan2 angle in the y-up frame, in (-pi, pi].
    """
    dy = float(p0[0]) - float(p1[0])  # y = -row
    dx = float(p1[1]) - float(p0[1])
    return float(np.arctan2(dy, dx))
