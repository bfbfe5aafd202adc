"""Exact 3D geometric primitives.

Every function accepts arrays with arbitrary leading batch axes and a trailing
axis of length 3 (vectors) or trailing shape ``(3, 3)`` (matrices). All
arithmetic is float64.
"""

import numpy as np

SMALL_ANGLE = 1e-9
SERIES_ANGLE = 1e-2
SINGULAR_DET = 1e-14


class SingularMatrixError(ValueError):
    pass


def cross(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def dot(a, b):
    # explicit sum keeps the rounding identical for every batch shape
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def skew(w):
    """Cross-product matrix ``[w]x`` such that ``skew(w) @ v == cross(w, v)``."""
    w = np.asarray(w, dtype=np.float64)
    zero = np.zeros_like(w[..., 0])
    rows = [
        np.stack([zero, -w[..., 2], w[..., 1]], axis=-1),
        np.stack([w[..., 2], zero, -w[..., 0]], axis=-1),
        np.stack([-w[..., 1], w[..., 0], zero], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def rotation_coefficients(theta):
    """Return ``(sin t / t, (1 - cos t) / t**2)`` evaluated without cancellation.

    Below ``SMALL_ANGLE`` the second-order Taylor values ``(1, 1/2)`` are used.
    """
    theta = np.asarray(theta, dtype=np.float64)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    half = np.sin(0.5 * safe) / safe
    b = np.where(small, 0.5, 2.0 * half * half)
    return a, b


def rotation_coefficient_slopes(theta):
    """Return ``(A'(t)/t, B'(t)/t)`` for the coefficients of ``rotation_coefficients``.

    These feed the gradient of the axis-angle rotation with respect to the axis.
    A truncated series is used below ``SERIES_ANGLE``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    series = theta < SERIES_ANGLE
    t = np.where(series, 1.0, theta)
    s, c = np.sin(t), np.cos(t)
    half = np.sin(0.5 * t)
    da = (t * c - s) / t**3
    db = (t * s - 4.0 * half * half) / t**4
    t2 = theta * theta
    da_series = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0
    db_series = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0
    return np.where(series, da_series, da), np.where(series, db_series, db)


def rodrigues_rotation(omega):
    """Rotation matrix about ``omega / |omega|`` by angle ``|omega|``."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.sqrt(dot(omega, omega))
    a, b = rotation_coefficients(theta)
    k = skew(omega)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def rotate(omega, v):
    """Apply ``rodrigues_rotation(omega)`` to ``v`` without forming the matrix."""
    omega = np.asarray(omega, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta = np.sqrt(dot(omega, omega))
    a, b = rotation_coefficients(theta)
    c1 = cross(omega, v)
    c2 = cross(omega, c1)
    return v + a[..., None] * c1 + b[..., None] * c2


def project_perp(e, f, tol=1e-9):
    """Component of ``f`` orthogonal to the unit vector ``e``, i.e. ``(I - e e^T) f``."""
    e = np.asarray(e, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    norms = np.sqrt(dot(e, e))
    if np.any(np.abs(norms - 1.0) > tol):
        raise ValueError("project_perp expects a unit axis, got norm(s) %s" % norms)
    return f - dot(e, f)[..., None] * e


def det3(m):
    m = np.asarray(m, dtype=np.float64)
    return (
        m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
        - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
        + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
    )


def solve3(a, b):
    """Solve ``a x = b`` for 3x3 systems via the cofactor inverse.

    Raises:
        SingularMatrixError: if any ``|det a| < 1e-14``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    det = det3(a)
    if np.any(np.abs(det) < SINGULAR_DET):
        raise SingularMatrixError("3x3 system is singular (|det| < %g)" % SINGULAR_DET)
    # adjugate = transpose of cofactor matrix; x = adj(a) b / det
    c = np.empty(a.shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != i]
            s = [k for k in range(3) if k != j]
            minor = a[..., r[0], s[0]] * a[..., r[1], s[1]] - a[..., r[0], s[1]] * a[..., r[1], s[0]]
            c[..., j, i] = minor if (i + j) % 2 == 0 else -minor
    x = c[..., :, 0] * b[..., None, 0] + c[..., :, 1] * b[..., None, 1] + c[..., :, 2] * b[..., None, 2]
    return x / det[..., None]


def random_orthogonal(rng, reflect=None):
    """Haar-distributed orthogonal matrix; ``reflect`` forces det -1 (True) or +1 (False)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if reflect is not None:
        want = -1.0 if reflect else 1.0
        if np.sign(np.linalg.det(q)) != want:
            q[:, 0] = -q[:, 0]
    return q
