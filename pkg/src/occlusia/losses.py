"""Training losses for the oriented-boundary representation.

The boundary stream uses class-balanced sigmoid cross-entropy: with
Y+ / Y- the edge / non-edge pixel sets and beta = |Y-| / |Y|, the loss is
-beta * sum(log p) over Y+ minus (1 - beta) * sum(log(1 - p)) over Y-.

The orientation stream scores an unbounded regression theta* against the
ground-truth direction theta through an unnormalized density over
d = |theta - theta*|:

    g(d) = 1                   if d <= delta or |d - 2pi| <= delta
         = sigmoid(alpha * f(d)) otherwise

with the piecewise ramp f(d) = pi/2 - d on [0, pi], d - pi on (pi, 2pi],
and 3pi/2 - d beyond 2pi ("as-written" variant; the "symmetric" variant
replaces f by pi/2 - circ_dist, removing the jump at d = pi). The loss
over edge pixels is -sum log(g(d) / Z) with Z the numeric integral of g
over one period around theta.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .angles import TWO_PI

PROB_EPS = 1e-7
_Z_SAMPLES = 10_000


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    """log(1 + exp(x)), stable for large |x|."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


@dataclass
class OrientationLossConfig:
    alpha: float = 4.0
    delta: float = 0.05
    variant: str = "as-written"  # or "symmetric"
    include_log_z: bool = True
    _z: float = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.variant not in ("as-written", "symmetric"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 < self.delta < np.pi / 2:
            raise ValueError("delta must lie in (0, pi/2)")

    @property
    def z(self):
        """Partition constant: trapezoidal integral of the unnormalized
        density over theta* in (theta - pi, theta + pi]. Both variants
        coincide there (d <= pi uses only the first ramp)."""
        if self._z is None:
            u = np.linspace(-np.pi, np.pi, _Z_SAMPLES)
            g = _unnormalized(np.abs(u), self)
            trapezoid = getattr(np, "trapezoid", None) or np.trapz
            self._z = float(trapezoid(g, u))
        return self._z


@dataclass
class BoundaryLossConfig:
    beta_mode: str = "auto-balance"  # or "fixed"
    beta: float = 0.5  # positive-class weight, used only when beta_mode == "fixed"
    eps: float = PROB_EPS

    def __post_init__(self):
        if self.beta_mode not in ("auto-balance", "fixed"):
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")
        if self.beta_mode == "fixed" and not 0.0 <= self.beta <= 1.0:
            raise ValueError("fixed beta must lie in [0, 1]")


def piecewise_ramp(d, variant="as-written"):
    """The ramp f(d) entering the orientation density.

    Args:
        d: nonnegative angular differences (scalar or array).
        variant: "as-written" keeps the literal three-branch table;
            "symmetric" uses pi/2 - min(d mod 2pi, 2pi - d mod 2pi).

    Raises:
        ValueError: on negative input.
    """
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("piecewise_ramp: d must be >= 0")
    if variant == "as-written":
        out = np.where(
            arr <= np.pi,
            np.pi / 2 - arr,
            np.where(arr <= TWO_PI, arr - np.pi, 3 * np.pi / 2 - arr),
        )
    elif variant == "symmetric":
        m = np.mod(arr, TWO_PI)
        out = np.pi / 2 - np.minimum(m, TWO_PI - m)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if np.ndim(d) == 0:
        return float(out)
    return out


def _ramp_slope(d, variant):
    """Left-branch derivative of the ramp at every point."""
    arr = np.asarray(d, dtype=np.float64)
    if variant == "as-written":
        return np.where(arr <= np.pi, -1.0, np.where(arr <= TWO_PI, 1.0, -1.0))
    m = np.mod(arr, TWO_PI)
    return np.where(m <= np.pi, -1.0, 1.0)


def _flat_region(d, delta):
    return (d <= delta) | (np.abs(d - TWO_PI) <= delta)


def _unnormalized(d, cfg):
    g = sigmoid(cfg.alpha * piecewise_ramp(d, cfg.variant))
    return np.where(_flat_region(d, cfg.delta), 1.0, g)


def orient_density(theta_star, theta, cfg=None):
    """Normalized density value P(theta* | theta).

    Args:
        theta_star: predicted direction, any finite float (the regression
            target is unbounded).
        theta: ground-truth direction, wrapped to (-pi, pi].
        cfg: OrientationLossConfig (defaults used when None).

    Raises:
        ValueError: non-finite inputs.
    """
    cfg = cfg or OrientationLossConfig()
    ts = np.asarray(theta_star, dtype=np.float64)
    t = np.asarray(theta, dtype=np.float64)
    if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(t))):
        raise ValueError("orient_density: angles must be finite")
    d = np.abs(t - ts)
    out = _unnormalized(d, cfg) / cfg.z
    if np.ndim(theta_star) == 0 and np.ndim(theta) == 0:
        return float(out)
    return out


def orient_loss(pred_orient, gt, cfg=None):
    """Orientation loss and gradient over ground-truth edge pixels.

    Args:
        pred_orient: (h, w) array of regressed directions (unbounded).
        gt: ground-truth OrientedBoundaryMap.
        cfg: OrientationLossConfig.

    Returns:
        (loss, grad): float64 scalar -sum over edge pixels of
        log P(theta*|theta), and (h, w) float64 array of d loss /
        d theta*, zero off the edge set and inside the flat cap.
    """
    cfg = cfg or OrientationLossConfig()
    pred = np.asarray(pred_orient, dtype=np.float64)
    mask = np.asarray(gt.edge) == 1
    grad = np.zeros(pred.shape, dtype=np.float64)
    if not np.any(mask):
        warnings.warn("orient_loss: image has no boundary pixels")
        return 0.0, grad
    ts = pred[mask]
    t = np.asarray(gt.orient, dtype=np.float64)[mask]
    if not np.all(np.isfinite(ts)):
        raise ValueError("orient_loss: non-finite prediction on edge pixels")
    d = np.abs(t - ts)
    flat = _flat_region(d, cfg.delta)
    x = cfg.alpha * piecewise_ramp(d, cfg.variant)
    # -log g: 0 on the flat cap, softplus(-x) elsewhere
    neglog = np.where(flat, 0.0, softplus(-x))
    loss = float(np.sum(neglog))
    if cfg.include_log_z:
        loss += ts.size * float(np.log(cfg.z))
    g = -(1.0 - sigmoid(x)) * cfg.alpha * _ramp_slope(d, cfg.variant) * np.sign(ts - t)
    g[flat] = 0.0
    grad[mask] = g
    return loss, grad


def boundary_loss(pred_prob, gt_edge, cfg=None):
    """Class-balanced cross-entropy and gradient w.r.t. the pre-sigmoid
    activation.

    Args:
        pred_prob: (h, w) probabilities in (0, 1). Exact 0/1 are clamped
            to [eps, 1 - eps] with a warning.
        gt_edge: (h, w) {0, 1} ground-truth edges.
        cfg: BoundaryLossConfig; beta = |Y-|/|Y| per image when
            cfg.beta_mode == "auto-balance", else the fixed cfg.beta.

    Returns:
        (loss, grad): float64 scalar, and (h, w) float64 array equal to
        beta * (p - 1) on positives and (1 - beta) * p on negatives.
    """
    cfg = cfg or BoundaryLossConfig()
    p = np.asarray(pred_prob, dtype=np.float64)
    y = np.asarray(gt_edge) == 1
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: pred {p.shape}, gt {y.shape}")
    if np.any((p < 0) | (p > 1) | ~np.isfinite(p)):
        raise ValueError("boundary_loss: probabilities outside [0, 1]")
    if np.any((p == 0) | (p == 1)):
        warnings.warn("boundary_loss: saturated probabilities clamped")
    pc = np.clip(p, cfg.eps, 1.0 - cfg.eps)
    n = p.size
    n_pos = int(np.count_nonzero(y))
    beta = (n - n_pos) / n if cfg.beta_mode == "auto-balance" else cfg.beta
    loss = float(
        -beta * np.sum(np.log(pc[y])) - (1.0 - beta) * np.sum(np.log(1.0 - pc[~y]))
    )
    grad = np.where(y, beta * (p - 1.0), (1.0 - beta) * p)
    return loss, grad


def doc_loss(pred_prob, pred_orient, gt, bcfg=None, ocfg=None):
    """Total two-stream loss.

    Returns:
        (loss, grad_logit, grad_orient): the scalar sum and the two
        per-pixel gradients (w.r.t. the boundary stream's pre-sigmoid
        activation and the orientation regression).
    """
    bl, bg = boundary_loss(pred_prob, gt.edge, bcfg)
    ol, og = orient_loss(pred_orient, gt, ocfg)
    return bl + ol, bg, og


def load_loss_config(path):
    """Read loss settings from a TOML or JSON file.

    Recognized keys: alpha, delta, variant, beta_mode, beta, include_log_z.

    Returns:
        (BoundaryLossConfig, OrientationLossConfig)
    """
    raw = load_config_file(path)
    return configs_from_dict(raw)


def configs_from_dict(raw):
    known = {"alpha", "delta", "variant", "beta_mode", "beta", "include_log_z"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown loss config keys: {sorted(unknown)}")
    ocfg = OrientationLossConfig(
        alpha=float(raw.get("alpha", 4.0)),
        delta=float(raw.get("delta", 0.05)),
        variant=str(raw.get("variant", "as-written")),
        include_log_z=bool(raw.get("include_log_z", True)),
    )
    bcfg = BoundaryLossConfig(
        beta_mode=str(raw.get("beta_mode", "auto-balance")),
        beta=float(raw.get("beta", 0.5)),
    )
    return bcfg, ocfg


def load_config_file(path):
    """Parse a small TOML or JSON config into a dict."""
    with open(path, "rb") as fh:
        text = fh.read()
    name = str(path)
    if name.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text.decode("utf-8"))
