# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pose-energy kernels; same contract as ``nbvpose._kernels_py``."""

from libc.math cimport sqrt

from .errors import NonPositiveDepth

cdef double EPS_DEPTH = 1e-3


def energy_grad(const double[:, :, ::1] X, const unsigned char[::1] obs, const double[:, :, ::1] M,
                const double[:, :, ::1] R, const double[:, ::1] C, const double[:, :, ::1] Lw,
                const Py_ssize_t[:, ::1] bones, const double[::1] calib, intr, weights,
                double[::1] terms, double[:, :, ::1] grad=None):
    cdef double wp = weights[0], ws = weights[1], wl = weights[2], wb = weights[3]
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef Py_ssize_t F = X.shape[0], J = X.shape[1], B = bones.shape[0]
    cdef Py_ssize_t f, j, i, b, a, c
    cdef double dx, dy, dz, x, y, z, ru, rv, gx, gy, gz, r0, r1, r2, s0, s1, s2
    cdef double e_proj = 0.0, e_lift = 0.0, e_smooth = 0.0, e_bone = 0.0
    cdef double length, dev, coef
    cdef bint want_grad = grad is not None

    if want_grad:
        for f in range(F):
            for j in range(J):
                for i in range(3):
                    grad[f, j, i] = 0.0

    for f in range(F):
        if not obs[f]:
            continue
        s0 = s1 = s2 = 0.0
        for j in range(J):
            dx = X[f, j, 0] - C[f, 0]
            dy = X[f, j, 1] - C[f, 1]
            dz = X[f, j, 2] - C[f, 2]
            x = R[f, 0, 0] * dx + R[f, 0, 1] * dy + R[f, 0, 2] * dz
            y = R[f, 1, 0] * dx + R[f, 1, 1] * dy + R[f, 1, 2] * dz
            z = R[f, 2, 0] * dx + R[f, 2, 1] * dy + R[f, 2, 2] * dz
            if z <= EPS_DEPTH:
                raise NonPositiveDepth(f"joint depth {z:.4g} m is not in front of the camera")
            ru = fx * x / z + cx - M[f, j, 0]
            rv = fy * y / z + cy - M[f, j, 1]
            e_proj += ru * ru + rv * rv
            if j:
                r0 = Lw[f, j, 0] - (X[f, j, 0] - X[f, 0, 0])
                r1 = Lw[f, j, 1] - (X[f, j, 1] - X[f, 0, 1])
                r2 = Lw[f, j, 2] - (X[f, j, 2] - X[f, 0, 2])
                e_lift += r0 * r0 + r1 * r1 + r2 * r2
            else:
                r0 = r1 = r2 = 0.0
            if want_grad:
                gx = 2 * wp * ru * fx / z
                gy = 2 * wp * rv * fy / z
                gz = -2 * wp * (ru * fx * x + rv * fy * y) / (z * z)
                for i in range(3):
                    grad[f, j, i] += R[f, 0, i] * gx + R[f, 1, i] * gy + R[f, 2, i] * gz
                grad[f, j, 0] -= 2 * wl * r0
                grad[f, j, 1] -= 2 * wl * r1
                grad[f, j, 2] -= 2 * wl * r2
                s0 += r0
                s1 += r1
                s2 += r2
        if want_grad:
            grad[f, 0, 0] += 2 * wl * s0
            grad[f, 0, 1] += 2 * wl * s1
            grad[f, 0, 2] += 2 * wl * s2

    for f in range(F - 1):
        for j in range(J):
            for i in range(3):
                dx = X[f + 1, j, i] - X[f, j, i]
                e_smooth += dx * dx
                if want_grad:
                    grad[f + 1, j, i] += 2 * ws * dx
                    grad[f, j, i] -= 2 * ws * dx

    for f in range(F):
        for b in range(B):
            a = bones[b, 0]
            c = bones[b, 1]
            dx = X[f, a, 0] - X[f, c, 0]
            dy = X[f, a, 1] - X[f, c, 1]
            dz = X[f, a, 2] - X[f, c, 2]
            length = sqrt(dx * dx + dy * dy + dz * dz)
            dev = length - calib[b]
            e_bone += dev * dev
            if want_grad and length > 1e-12:
                coef = 2 * wb * dev / length
                grad[f, a, 0] += coef * dx
                grad[f, a, 1] += coef * dy
                grad[f, a, 2] += coef * dz
                grad[f, c, 0] -= coef * dx
                grad[f, c, 1] -= coef * dy
                grad[f, c, 2] -= coef * dz

    terms[0] = wp * e_proj
    terms[1] = ws * e_smooth
    terms[2] = wl * e_lift
    terms[3] = wb * e_bone
    return terms[0] + terms[1] + terms[2] + terms[3]


cdef inline void _add_block(double[:, ::1] H, Py_ssize_t r, Py_ssize_t c, double[3][3] blk, double sign) noexcept nogil:
    cdef Py_ssize_t i, k
    for i in range(3):
        for k in range(3):
            H[r + i, c + k] += sign * blk[i][k]


cdef inline void _add_diag(double[:, ::1] H, Py_ssize_t r, Py_ssize_t c, double val) noexcept nogil:
    H[r, c] += val
    H[r + 1, c + 1] += val
    H[r + 2, c + 2] += val


def hessian(const double[:, :, ::1] X, const unsigned char[::1] obs, const double[:, :, ::1] M,
            const double[:, :, ::1] R, const double[:, ::1] C, const double[:, :, ::1] Lw,
            const Py_ssize_t[:, ::1] bones, const double[::1] calib, intr, weights, double[:, ::1] H):
    cdef double wp = weights[0], ws = weights[1], wl = weights[2], wb = weights[3]
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef Py_ssize_t F = X.shape[0], J = X.shape[1], B = bones.shape[0], n = F * J * 3
    cdef Py_ssize_t f, j, i, k, a, b, c, r0, r1, q
    cdef double dx, dy, dz, x, y, z, ru, rv, length, t1, t2
    cdef double hp[3][3]
    cdef double tmp[3][3]
    cdef double hw[3][3]
    cdef double u[3]

    for i in range(n):
        for k in range(n):
            H[i, k] = 0.0

    for f in range(F):
        if not obs[f]:
            continue
        for j in range(J):
            dx = X[f, j, 0] - C[f, 0]
            dy = X[f, j, 1] - C[f, 1]
            dz = X[f, j, 2] - C[f, 2]
            x = R[f, 0, 0] * dx + R[f, 0, 1] * dy + R[f, 0, 2] * dz
            y = R[f, 1, 0] * dx + R[f, 1, 1] * dy + R[f, 1, 2] * dz
            z = R[f, 2, 0] * dx + R[f, 2, 1] * dy + R[f, 2, 2] * dz
            if z <= EPS_DEPTH:
                raise NonPositiveDepth(f"joint depth {z:.4g} m is not in front of the camera")
            ru = fx * x / z + cx - M[f, j, 0]
            rv = fy * y / z + cy - M[f, j, 1]
            # Gauss-Newton part J^T J plus residual-weighted second derivatives, camera frame
            hp[0][0] = fx * fx / (z * z)
            hp[0][1] = 0.0
            hp[0][2] = -fx * fx * x / (z * z * z) - ru * fx / (z * z)
            hp[1][0] = 0.0
            hp[1][1] = fy * fy / (z * z)
            hp[1][2] = -fy * fy * y / (z * z * z) - rv * fy / (z * z)
            hp[2][0] = hp[0][2]
            hp[2][1] = hp[1][2]
            hp[2][2] = (fx * fx * x * x + fy * fy * y * y) / (z * z * z * z) + 2 * (ru * fx * x + rv * fy * y) / (z * z * z)
            for i in range(3):
                for k in range(3):
                    tmp[i][k] = hp[i][0] * R[f, 0, k] + hp[i][1] * R[f, 1, k] + hp[i][2] * R[f, 2, k]
            for i in range(3):
                for k in range(3):
                    hw[i][k] = 2 * wp * (R[f, 0, i] * tmp[0][k] + R[f, 1, i] * tmp[1][k] + R[f, 2, i] * tmp[2][k])
            r0 = (f * J + j) * 3
            _add_block(H, r0, r0, hw, 1.0)
            if j:
                q = (f * J) * 3
                _add_diag(H, r0, r0, 2 * wl)
                _add_diag(H, q, q, 2 * wl)
                _add_diag(H, q, r0, -2 * wl)
                _add_diag(H, r0, q, -2 * wl)

    for f in range(F - 1):
        for j in range(J):
            r0 = (f * J + j) * 3
            r1 = ((f + 1) * J + j) * 3
            _add_diag(H, r0, r0, 2 * ws)
            _add_diag(H, r1, r1, 2 * ws)
            _add_diag(H, r0, r1, -2 * ws)
            _add_diag(H, r1, r0, -2 * ws)

    for f in range(F):
        for b in range(B):
            a = bones[b, 0]
            c = bones[b, 1]
            u[0] = X[f, a, 0] - X[f, c, 0]
            u[1] = X[f, a, 1] - X[f, c, 1]
            u[2] = X[f, a, 2] - X[f, c, 2]
            length = sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])
            if length <= 1e-12:
                continue
            t1 = 2 * wb * calib[b] / (length * length * length)
            t2 = 2 * wb * (1 - calib[b] / length)
            for i in range(3):
                for k in range(3):
                    hw[i][k] = t1 * u[i] * u[k]
                hw[i][i] += t2
            r0 = (f * J + a) * 3
            r1 = (f * J + c) * 3
            _add_block(H, r0, r0, hw, 1.0)
            _add_block(H, r1, r1, hw, 1.0)
            _add_block(H, r0, r1, hw, -1.0)
            _add_block(H, r1, r0, hw, -1.0)
    return H
