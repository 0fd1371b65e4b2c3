"""Unit quaternion helpers on ``(..., 4)`` arrays in ``(w, x, y, z)`` order.

Conventions:
    * ``qmul(q, p)`` is the Hamilton product ``q ⊗ p``; acting on column
      vectors it means "apply ``p`` first, then ``q``".
    * Every product is renormalised, so long chains stay on the unit sphere.
    * ``canonical`` picks the representative with ``w >= 0``; when ``w == 0``
      the first non-zero vector component is made positive.
"""
from __future__ import annotations

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def canonical(q: np.ndarray) -> np.ndarray:
    """Fix the sign ambiguity ``q ~ -q``."""
    q = np.array(q, dtype=float)
    flat = q.reshape(-1, 4)
    for row in flat:
        for v in row:
            if v != 0.0:
                if v < 0.0:
                    row *= -1.0
                break
    return flat.reshape(q.shape)


def conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qmul(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(q, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(p, -1, 0)
    # terms are paired so that conj(q) ⊗ q is exactly the identity
    out = np.stack(
        [
            w1 * w2 - (x1 * x2 + y1 * y2 + z1 * z2),
            (w1 * x2 + x1 * w2) + (y1 * z2 - z1 * y2),
            (w1 * y2 + y1 * w2) + (z1 * x2 - x1 * z2),
            (w1 * z2 + z1 * w2) + (x1 * y2 - y1 * x2),
        ],
        axis=-1,
    )
    return normalize(out)


def rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) ``v`` by unit quaternion(s) ``q``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def from_matrix(m: np.ndarray) -> np.ndarray:
    """Quaternion of a proper rotation matrix (Shepperd's method).

    Picks the largest of the four diagonal combinations as the pivot so the
    square root never sees a small argument. Result is canonical.
    """
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    pivots = (tr, m[0, 0], m[1, 1], m[2, 2])
    k = int(np.argmax(pivots))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return canonical(normalize(np.array(q)))


def angle(q: np.ndarray) -> np.ndarray:
    """Rotation angle in ``[0, pi]`` of unit quaternion(s)."""
    q = np.asarray(q, dtype=float)
    # atan2 keeps full precision near the identity where acos(|w|) does not.
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), np.abs(q[..., 0]))


def geodesic_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation angle between orientations ``a`` and ``b`` (radians).

    Equals ``2 * acos(|<a, b>|)``; evaluated through the relative rotation
    for accuracy at small angles.
    """
    return angle(qmul(conj(a), b))
