"""NumPy implementation of the pose-energy kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is tested against. Both expose the same functions
with the same argument layout:

``X``      (F, J, 3) window poses
``obs``    (F,) uint8, 1 where the frame carries measurements
``M``      (F, J, 2) 2D detections in pixels
``R``      (F, 3, 3) world-to-camera rotations
``C``      (F, 3) camera centers
``Lw``     (F, J, 3) scaled lift targets rotated into the world frame
``bones``  (B, 2) intp joint index pairs
``calib``  (B,) reference bone lengths
``intr``   (fx, fy, cx, cy)
``weights`` (omega_p, omega_s, omega_l, omega_b)
"""

import numpy as np

from .errors import NonPositiveDepth

EPS_DEPTH = 1e-3


def _incidence(bones, n_joints):
    inc = np.zeros((len(bones), n_joints))
    inc[np.arange(len(bones)), bones[:, 0]] = 1.0
    inc[np.arange(len(bones)), bones[:, 1]] = -1.0
    return inc


def _camera_points(X, R, C):
    pc = np.einsum("fij,fnj->fni", R, X - C[:, None, :])
    z = pc[..., 2]
    if z.size and z.min() <= EPS_DEPTH:
        raise NonPositiveDepth(f"joint depth {z.min():.4g} m is not in front of the camera")
    return pc


def energy_grad(X, obs, M, R, C, Lw, bones, calib, intr, weights, terms, grad=None):
    """Fill ``terms`` (4,) and optionally ``grad`` (F, J, 3); return the total energy."""
    wp, ws, wl, wb = weights
    fx, fy, cx, cy = intr
    if grad is not None:
        grad[...] = 0.0
    o = np.flatnonzero(obs)

    e_proj = e_lift = 0.0
    if o.size:
        Xo = X[o]
        pc = _camera_points(Xo, R[o], C[o])
        x, y, z = pc[..., 0], pc[..., 1], pc[..., 2]
        ru = fx * x / z + cx - M[o, :, 0]
        rv = fy * y / z + cy - M[o, :, 1]
        e_proj = wp * float(np.sum(ru * ru + rv * rv))

        rel = Lw[o] - (Xo - Xo[:, :1, :])
        rel[:, 0, :] = 0.0
        e_lift = wl * float(np.sum(rel * rel))

        if grad is not None:
            gp = np.empty_like(pc)
            gp[..., 0] = 2 * wp * ru * fx / z
            gp[..., 1] = 2 * wp * rv * fy / z
            gp[..., 2] = -2 * wp * (ru * fx * x + rv * fy * y) / (z * z)
            go = np.einsum("fji,fnj->fni", R[o], gp)
            go -= 2 * wl * rel
            go[:, 0, :] += 2 * wl * rel.sum(axis=1)
            grad[o] += go

    d = X[1:] - X[:-1]
    e_smooth = ws * float(np.sum(d * d))

    u = X[:, bones[:, 0], :] - X[:, bones[:, 1], :]
    length = np.sqrt(np.sum(u * u, axis=-1))
    dev = length - calib
    e_bone = wb * float(np.sum(dev * dev))

    if grad is not None:
        grad[1:] += 2 * ws * d
        grad[:-1] -= 2 * ws * d
        safe = np.where(length > 1e-12, length, 1.0)
        coef = np.where(length > 1e-12, 2 * wb * dev / safe, 0.0)
        grad += np.einsum("bj,fbk->fjk", _incidence(bones, X.shape[1]), coef[..., None] * u)

    terms[0] = e_proj
    terms[1] = e_smooth
    terms[2] = e_lift
    terms[3] = e_bone
    return e_proj + e_smooth + e_lift + e_bone


def hessian(X, obs, M, R, C, Lw, bones, calib, intr, weights, H):
    """Write the analytic Hessian of the energy into ``H`` of shape (F*J*3, F*J*3)."""
    wp, ws, wl, wb = weights
    fx, fy, cx, cy = intr
    F, J, _ = X.shape
    H[...] = 0.0
    H6 = H.reshape(F, J, 3, F, J, 3)
    eye = np.eye(3)

    for f in np.flatnonzero(obs):
        pc = _camera_points(X[f:f + 1], R[f:f + 1], C[f:f + 1])[0]
        x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
        ru = fx * x / z + cx - M[f, :, 0]
        rv = fy * y / z + cy - M[f, :, 1]
        jac = np.zeros((J, 2, 3))
        jac[:, 0, 0] = fx / z
        jac[:, 0, 2] = -fx * x / z**2
        jac[:, 1, 1] = fy / z
        jac[:, 1, 2] = -fy * y / z**2
        hp = np.einsum("jai,jak->jik", jac, jac)
        hp[:, 0, 2] += -ru * fx / z**2
        hp[:, 2, 0] += -ru * fx / z**2
        hp[:, 1, 2] += -rv * fy / z**2
        hp[:, 2, 1] += -rv * fy / z**2
        hp[:, 2, 2] += 2 * (ru * fx * x + rv * fy * y) / z**3
        hw = 2 * wp * np.einsum("ai,jab,bk->jik", R[f], hp, R[f])
        for j in range(J):
            H6[f, j, :, f, j, :] += hw[j]
            if j:
                H6[f, j, :, f, j, :] += 2 * wl * eye
                H6[f, 0, :, f, 0, :] += 2 * wl * eye
                H6[f, 0, :, f, j, :] -= 2 * wl * eye
                H6[f, j, :, f, 0, :] -= 2 * wl * eye

    for f in range(F - 1):
        for j in range(J):
            H6[f, j, :, f, j, :] += 2 * ws * eye
            H6[f + 1, j, :, f + 1, j, :] += 2 * ws * eye
            H6[f, j, :, f + 1, j, :] -= 2 * ws * eye
            H6[f + 1, j, :, f, j, :] -= 2 * ws * eye

    for f in range(F):
        for b, (a, c) in enumerate(bones):
            u = X[f, a] - X[f, c]
            length = np.sqrt(u @ u)
            if length <= 1e-12:
                continue
            hb = 2 * wb * ((calib[b] / length**3) * np.outer(u, u) + (1 - calib[b] / length) * eye)
            H6[f, a, :, f, a, :] += hb
            H6[f, c, :, f, c, :] += hb
            H6[f, a, :, f, c, :] -= hb
            H6[f, c, :, f, a, :] -= hb
    return H
