"""Turning raw network outputs into scored boundary maps.

The pipeline: thin the boundary probability map by non-maximum
suppression across the local edge normal, estimate an undirected tangent
along each surviving chain, snap the regressed direction to that tangent
or its opposite (whichever is within a quarter turn), and score each
survivor with c_e (the boundary probability) plus c_o = |cos(theta_pred -
theta_tangent)|, computed from the raw pre-alignment prediction. Totals
live in [0, 2] and are thresholded later by the evaluation.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .angles import TWO_PI, wrap
from .orientmap import OrientedBoundaryMap, estimate_tangents
from .raster import bilinear_sample, gaussian_smooth, resize_bilinear
from .tinynet import forward, receptive_field

NMS_MARGIN = 1.01
NMS_RADIUS = 1.0
NMS_SIGMA = 1.0  # 5-tap Gaussian window at radius 2


@dataclass
class ScoredBoundaryMap:
    """Thinned boundary pixels with ownership directions and confidences.

    The support set is edge_conf > 0. Off support: edge_conf, orient_conf
    and total are 0 and orient is NaN. On support: orient is the aligned
    direction in (-pi, pi], orient_conf = |cos| in [0, 1] and total =
    edge_conf + orient_conf in (0, 2].
    """

    edge_conf: np.ndarray
    orient: np.ndarray
    orient_conf: np.ndarray
    total: np.ndarray

    def support(self):
        return self.edge_conf > 0

    @property
    def shape(self):
        return self.edge_conf.shape


def normal_angles(prob, sigma=NMS_SIGMA):
    """Edge-normal direction of a probability field, per pixel.

    Structure tensor of the smoothed field: the dominant eigenvector of
    the outer product of gradients (averaged under the same Gaussian)
    points across the edge. Returned in the raster frame (x = col,
    y = row down); only used for +/- sampling so the y convention does
    not matter.
    """
    sm = gaussian_smooth(np.asarray(prob, dtype=np.float64), sigma)
    gy, gx = np.gradient(sm)
    jxx = gaussian_smooth(gx * gx, sigma)
    jxy = gaussian_smooth(gx * gy, sigma)
    jyy = gaussian_smooth(gy * gy, sigma)
    return 0.5 * np.arctan2(2.0 * jxy, jxx - jyy)


def nms(prob, margin=NMS_MARGIN, radius=NMS_RADIUS, sigma=NMS_SIGMA):
    """Thin a boundary probability map across its local normal.

    A pixel with value v survives iff v * margin > p(+) and
    v * margin >= p(-), where p(+/-) are bilinear samples one radius
    along +/- the local normal. With margin 1.0 the strict side keeps
    exactly one pixel of a two-wide equal plateau; the default 1.01
    tolerates near-ties on both sides.

    Returns:
        (keep, conf): boolean survivor mask and the survivor-masked
        probabilities (zero elsewhere).
    """
    p = np.asarray(prob, dtype=np.float64)
    h, w = p.shape
    phi = normal_angles(p, sigma)
    nx = np.cos(phi)
    ny = np.sin(phi)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    plus = bilinear_sample(p, xs + radius * nx, ys + radius * ny)
    minus = bilinear_sample(p, xs - radius * nx, ys - radius * ny)
    keep = (p * margin > plus) & (p * margin >= minus)
    conf = np.where(keep, p, 0.0)
    return keep, conf


def align_orientation(pred, tangent):
    """Snap predictions to a tangent line, preserving ownership side.

    The tangent is undirected (in [0, pi)); the aligned direction is
    tangent if (pred - tangent) mod 2pi falls in [0, pi/2) or
    (3pi/2, 2pi], else tangent + pi. NaN tangents pass the wrapped
    prediction through (callers are warned).

    Args:
        pred: scalar or array of regressed directions (any finite value).
        tangent: matching scalar or array of tangent angles.

    Returns:
        Aligned angles in (-pi, pi], same shape.
    """
    pa = np.asarray(pred, dtype=np.float64)
    ta = np.asarray(tangent, dtype=np.float64)
    missing = np.isnan(ta)
    if np.any(missing):
        warnings.warn("align_orientation: NaN tangent, passing prediction through")
    ta_safe = np.where(missing, 0.0, ta)
    d = np.mod(pa - ta_safe, TWO_PI)
    same = (d < np.pi / 2) | (d > 3 * np.pi / 2)
    aligned = wrap(np.where(same, ta_safe, ta_safe + np.pi))
    out = np.where(missing, wrap(pa), aligned)
    if np.ndim(pred) == 0 and np.ndim(tangent) == 0:
        return float(out)
    return out


def orient_confidence(pred, tangent):
    """c_o = |cos(pred - tangent)|, from the raw prediction."""
    return np.abs(np.cos(np.asarray(pred, dtype=np.float64) - np.asarray(tangent)))


def infer(edge_prob, orient_pred, margin=NMS_MARGIN, radius=NMS_RADIUS,
          tangent_window=10):
    """NMS + align + confidence scoring.

    Args:
        edge_prob: (h, w) boundary probabilities in [0, 1].
        orient_pred: (h, w) regressed directions.

    Returns:
        ScoredBoundaryMap over the NMS survivors.
    """
    keep, conf = nms(edge_prob, margin=margin, radius=radius)
    conf = conf.astype(np.float32)
    # survivors whose stored confidence underflows to 0 would break the
    # support invariant (theta defined iff edge_conf > 0), so drop them
    keep = keep & (conf > 0)
    field = estimate_tangents(keep, window=tangent_window)
    h, w = keep.shape
    orient = np.full((h, w), np.nan, dtype=np.float32)
    oconf = np.zeros((h, w), dtype=np.float32)
    total = np.zeros((h, w), dtype=np.float32)
    if np.any(keep):
        tan = np.asarray(field.tangent, dtype=np.float64)[keep]
        pred = np.asarray(orient_pred, dtype=np.float64)[keep]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            aligned = align_orientation(pred, tan)
        co = orient_confidence(pred, tan)
        co = np.where(np.isnan(tan), 0.0, co)
        orient[keep] = aligned
        oconf[keep] = co
        total[keep] = conf[keep] + co
    return ScoredBoundaryMap(
        edge_conf=conf,
        orient=orient,
        orient_conf=oconf,
        total=total,
    )


def multiscale_average(params, image, scales=(0.5, 1.0, 1.5)):
    """Run the net over several scales and fuse the raw outputs.

    Images are resized bilinearly per scale, predictions are resized
    back, probabilities averaged and orientations combined per pixel by
    unit-vector averaging (atan2 of summed sin and cos, so opposite-ish
    angles near the pi seam average to pi rather than 0). Scales whose
    resized image is smaller than the trunk receptive field are skipped
    with a warning.

    Returns:
        (edge_prob, orient_pred) at the input resolution.
    """
    arr = np.asarray(image, dtype=np.float64)
    h, w = arr.shape[:2]
    rf = receptive_field(params.trunk)
    probs, sins, coss = [], [], []
    for s in scales:
        sh, sw = max(int(round(h * s)), 1), max(int(round(w * s)), 1)
        if min(sh, sw) < rf:
            warnings.warn(f"scale {s} gives {sh}x{sw}, below receptive field {rf}")
            continue
        if (sh, sw) == (h, w):
            scaled = arr
        elif arr.ndim == 3:
            scaled = np.stack(
                [resize_bilinear(arr[:, :, c], sh, sw) for c in range(arr.shape[2])],
                axis=2,
            )
        else:
            scaled = resize_bilinear(arr, sh, sw)
        e, o = forward(params, scaled)
        same = (sh, sw) == (h, w)
        probs.append(np.clip(e if same else resize_bilinear(e, h, w), 0.0, 1.0))
        # sin/cos are resized separately so interpolation stays on the circle
        sins.append(np.sin(o) if same else resize_bilinear(np.sin(o), h, w))
        coss.append(np.cos(o) if same else resize_bilinear(np.cos(o), h, w))
    if not probs:
        raise ValueError("all scales below the receptive field")
    edge = np.mean(probs, axis=0)
    orient = np.arctan2(np.sum(sins, axis=0), np.sum(coss, axis=0))
    return edge, orient


def predict(params, image, scales=(1.0,), **infer_kwargs):
    """multiscale_average followed by infer.

    Returns:
        (scored, edge_prob, orient): the ScoredBoundaryMap plus the fused
        raw maps.
    """
    edge, orient = multiscale_average(params, image, scales=scales)
    scored = infer(edge, orient, **infer_kwargs)
    return scored, edge, orient


def scored_from_map(m):
    """Lift a ground-truth oriented map to a perfectly scored one.

    Boundary pixels get edge_conf and orient_conf 1 (total 2); useful as
    the prediction-equals-ground-truth reference in evaluation plumbing.
    """
    on = np.asarray(m.edge) > 0
    conf = on.astype(np.float32)
    orient = np.where(on, m.orient, np.nan).astype(np.float32)
    return ScoredBoundaryMap(
        edge_conf=conf,
        orient=orient,
        orient_conf=conf.copy(),
        total=conf * 2.0,
    )


def save_scored(prefix, scored):
    from .raster import save_fmap

    save_fmap(f"{prefix}.edge_conf.fmap", scored.edge_conf)
    save_fmap(f"{prefix}.orient.fmap", scored.orient)
    save_fmap(f"{prefix}.orient_conf.fmap", scored.orient_conf)
    save_fmap(f"{prefix}.total.fmap", scored.total)


def load_scored(prefix):
    from .raster import load_fmap

    return ScoredBoundaryMap(
        edge_conf=load_fmap(f"{prefix}.edge_conf.fmap"),
        orient=load_fmap(f"{prefix}.orient.fmap"),
        orient_conf=load_fmap(f"{prefix}.orient_conf.fmap"),
        total=load_fmap(f"{prefix}.total.fmap"),
    )
