"""Unit-quaternion algebra in the Hamilton convention (w, x, y, z, scalar first).

Every function is pure and accepts either a single quaternion of shape
``(4,)`` or an arbitrary batch ``(..., 4)``.  "Canonical" means unit norm
with ``w >= 0``: it pins one representative of the double cover
``{q, -q}`` so that log-map based distances are well defined, and it
bounds ``|log_map(q)|`` by pi/2.

Log-map convention: for ``q = (cos t, sin t * n)`` the log is ``t * n``,
i.e. the *half* rotation angle times the axis.  Axis-angle vectors carry
the full rotation angle, so the conversions scale by 2.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = [
    "IDENTITY",
    "normalize",
    "canonicalize",
    "compose",
    "conjugate",
    "from_axis_angle",
    "to_axis_angle",
    "log_map",
    "exp_map",
    "slerp",
    "rotate",
]

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# switch to the series form of theta/sin(theta) this close to identity
_NEAR_IDENTITY_W = 1.0 - 1e-6
# norms already this close to 1 are left untouched, keeping normalize idempotent
_NORM_TOL = 1e-12


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} contains non-finite values")


def normalize(q):
    """Scale to unit norm; zero or non-finite input raises ValidationError."""
    q = np.asarray(q, dtype=np.float64)
    _check_finite(q, "quaternion")
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValidationError("cannot normalize a zero quaternion")
    return np.where(np.abs(n - 1.0) <= _NORM_TOL, q, q / n)


def canonicalize(q):
    """Normalize and pick the double-cover representative with w >= 0.

    Rows with w == 0 fall back to the sign of the first nonzero vector
    component, so q and -q always map to the same output.
    """
    q = normalize(q)
    flip = np.zeros(q.shape[:-1], dtype=bool)
    undecided = np.ones(q.shape[:-1], dtype=bool)
    for k in range(4):
        c = q[..., k]
        flip |= undecided & (c < 0.0)
        undecided &= c == 0.0
    if not flip.any():
        return q
    return np.where(flip[..., None], -q, q)


def compose(a, b):
    """Hamilton product a * b (apply b in the frame already rotated by a)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conjugate(q):
    """Inverse rotation for unit input."""
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def from_axis_angle(aa):
    """Axis-angle vector (angle = |aa| radians) to canonical unit quaternion."""
    aa = np.asarray(aa, dtype=np.float64)
    _check_finite(aa, "axis-angle")
    half = 0.5 * np.linalg.norm(aa, axis=-1, keepdims=True)
    # sin(theta/2)/theta via sinc, series-exact at zero
    k = 0.5 * np.sinc(half / np.pi)
    return canonicalize(np.concatenate([np.cos(half), k * aa], axis=-1))


def to_axis_angle(q):
    """Canonical quaternion to axis-angle; magnitude lands in [0, pi]."""
    return 2.0 * log_map(canonicalize(q))


def log_map(q):
    """Map a canonical unit quaternion (cos t, sin t * n) to t * n.

    Near identity the factor t/sin(t) is evaluated by a 3-term series to
    avoid the catastrophic cancellation of acos at w -> 1.
    """
    q = np.asarray(q, dtype=np.float64)
    w = q[..., 0]
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1)
    s_safe = np.where(s > 0.0, s, 1.0)
    factor = np.where(s > 0.0, np.arctan2(s, w) / s_safe, 1.0)
    s2 = s * s
    series = 1.0 + s2 / 6.0 + 7.0 * s2 * s2 / 360.0
    factor = np.where(w > _NEAR_IDENTITY_W, series, factor)
    return factor[..., None] * v


def exp_map(v):
    """Inverse of log_map: t * n -> (cos t, sin t * n) as a unit quaternion."""
    v = np.asarray(v, dtype=np.float64)
    _check_finite(v, "log vector")
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    k = np.sinc(theta / np.pi)  # sin(theta)/theta, exact 1 at zero
    return np.concatenate([np.cos(theta), k * v], axis=-1)


def rotate(q, vec):
    """Rotate 3-vectors: q v q^-1 for unit q."""
    q = np.asarray(q, dtype=np.float64)
    vec = np.asarray(vec, dtype=np.float64)
    u = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * np.cross(u, vec)
    return vec + w * t + np.cross(u, t)


def slerp(a, b, t):
    """Geodesic interpolation with the shortest-arc sign fix.

    slerp(a, b, 0) == a and slerp(a, b, 1) == b; the angle from a grows
    linearly in t.  After the sign fix the pair cannot be antipodal as
    4-vectors; rotations a full half-turn apart (dot == 0) are a regular
    case.  When the inputs coincide to ~1e-9 the spherical weights
    degrade to plain linear interpolation followed by normalization,
    which on that great circle is the same curve.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.sum(a * b, axis=-1, keepdims=True)
    b = np.where(dot < 0.0, -b, b)
    dot = np.minimum(np.abs(dot), 1.0)
    omega = np.arccos(dot)
    sin_omega = np.sin(omega)
    near = sin_omega < 1e-9
    sin_safe = np.where(near, 1.0, sin_omega)
    tt = np.asarray(t, dtype=np.float64)
    if tt.ndim:
        tt = tt[..., None]
    wa = np.where(near, 1.0 - tt, np.sin((1.0 - tt) * omega) / sin_safe)
    wb = np.where(near, tt, np.sin(tt * omega) / sin_safe)
    return normalize(wa * a + wb * b)
