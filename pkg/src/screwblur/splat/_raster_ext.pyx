# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rasterizer kernels; same contract as ``_raster_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

cdef double ALPHA_MAX = 0.99
cdef double ALPHA_MIN = 1.0 / 255.0


cdef Py_ssize_t _row_candidates(double py, const double[:, ::1] means2d, const double[::1] radii,
                                Py_ssize_t[::1] out) noexcept nogil:
    cdef Py_ssize_t i, n = 0
    for i in range(means2d.shape[0]):
        if radii[i] > 0 and fabs(means2d[i, 1] - py) <= radii[i]:
            out[n] = i
            n += 1
    return n


def forward(const double[:, ::1] means2d, const double[:, ::1] conics, const double[::1] opacities,
            const double[:, ::1] colors, const double[::1] radii, const double[::1] background,
            int height, int width):
    cdef Py_ssize_t m = means2d.shape[0]
    image_arr = np.empty((height, width, 3))
    final_arr = np.empty((height, width))
    cdef double[:, :, ::1] image = image_arr
    cdef double[:, ::1] final_t = final_arr
    cand_arr = np.empty(max(m, 1), dtype=np.intp)
    cdef Py_ssize_t[::1] cand = cand_arr
    cdef Py_ssize_t row, col, k, i, ncand
    cdef double px, py, dx, dy, power, alpha, t, r0, r1, r2
    with nogil:
        for row in range(height):
            py = row + 0.5
            ncand = _row_candidates(py, means2d, radii, cand)
            for col in range(width):
                px = col + 0.5
                t = 1.0
                r0 = 0.0
                r1 = 0.0
                r2 = 0.0
                for k in range(ncand):
                    i = cand[k]
                    dx = means2d[i, 0] - px
                    if fabs(dx) > radii[i]:
                        continue
                    dy = means2d[i, 1] - py
                    power = -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) - conics[i, 1] * dx * dy
                    if power > 0.0:
                        power = 0.0
                    alpha = opacities[i] * exp(power)
                    if alpha < ALPHA_MIN:
                        continue
                    if alpha > ALPHA_MAX:
                        alpha = ALPHA_MAX
                    r0 = r0 + colors[i, 0] * alpha * t
                    r1 = r1 + colors[i, 1] * alpha * t
                    r2 = r2 + colors[i, 2] * alpha * t
                    t = t * (1.0 - alpha)
                image[row, col, 0] = r0 + t * background[0]
                image[row, col, 1] = r1 + t * background[1]
                image[row, col, 2] = r2 + t * background[2]
                final_t[row, col] = t
    return image_arr, final_arr


def backward(const double[:, ::1] means2d, const double[:, ::1] conics, const double[::1] opacities,
             const double[:, ::1] colors, const double[::1] radii, const double[::1] background,
             int height, int width, const double[:, :, ::1] grad_image):
    cdef Py_ssize_t m = means2d.shape[0]
    g_means_arr = np.zeros((m, 2))
    g_conics_arr = np.zeros((m, 3))
    g_opac_arr = np.zeros(m)
    g_colors_arr = np.zeros((m, 3))
    cdef double[:, ::1] g_means = g_means_arr
    cdef double[:, ::1] g_conics = g_conics_arr
    cdef double[::1] g_opac = g_opac_arr
    cdef double[:, ::1] g_colors = g_colors_arr
    n = max(m, 1)
    cand_arr = np.empty(n, dtype=np.intp)
    hit_arr = np.empty(n, dtype=np.intp)
    alpha_arr = np.empty(n)
    gauss_arr = np.empty(n)
    trans_arr = np.empty(n)
    live_arr = np.empty(n, dtype=np.uint8)
    dx_arr = np.empty(n)
    dy_arr = np.empty(n)
    cdef Py_ssize_t[::1] cand = cand_arr
    cdef Py_ssize_t[::1] hit = hit_arr
    cdef double[::1] alphas = alpha_arr
    cdef double[::1] gauss = gauss_arr
    cdef double[::1] trans = trans_arr
    cdef unsigned char[::1] live = live_arr
    cdef double[::1] dxs = dx_arr
    cdef double[::1] dys = dy_arr
    cdef Py_ssize_t row, col, k, i, ncand, nhit, j
    cdef double px, py, dx, dy, power, g, raw, alpha, t, gp0, gp1, gp2, u, w
    cdef double behind, d_alpha, d_power
    with nogil:
        for row in range(height):
            py = row + 0.5
            ncand = _row_candidates(py, means2d, radii, cand)
            for col in range(width):
                px = col + 0.5
                t = 1.0
                nhit = 0
                for k in range(ncand):
                    i = cand[k]
                    dx = means2d[i, 0] - px
                    if fabs(dx) > radii[i]:
                        continue
                    dy = means2d[i, 1] - py
                    power = -0.5 * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) - conics[i, 1] * dx * dy
                    if power > 0.0:
                        power = 0.0
                    g = exp(power)
                    raw = opacities[i] * g
                    if raw < ALPHA_MIN:
                        continue
                    hit[nhit] = i
                    gauss[nhit] = g
                    dxs[nhit] = dx
                    dys[nhit] = dy
                    trans[nhit] = t
                    if raw > ALPHA_MAX:
                        alpha = ALPHA_MAX
                        live[nhit] = 0
                    else:
                        alpha = raw
                        live[nhit] = 1
                    alphas[nhit] = alpha
                    t = t * (1.0 - alpha)
                    nhit = nhit + 1
                gp0 = grad_image[row, col, 0]
                gp1 = grad_image[row, col, 1]
                gp2 = grad_image[row, col, 2]
                behind = t * (background[0] * gp0 + background[1] * gp1 + background[2] * gp2)
                for j in range(nhit - 1, -1, -1):
                    i = hit[j]
                    alpha = alphas[j]
                    w = alpha * trans[j]
                    g_colors[i, 0] += w * gp0
                    g_colors[i, 1] += w * gp1
                    g_colors[i, 2] += w * gp2
                    u = colors[i, 0] * gp0 + colors[i, 1] * gp1 + colors[i, 2] * gp2
                    d_alpha = trans[j] * u - behind / (1.0 - alpha)
                    behind = behind + w * u
                    if live[j] == 0:
                        continue
                    g_opac[i] += d_alpha * gauss[j]
                    d_power = d_alpha * alpha
                    dx = dxs[j]
                    dy = dys[j]
                    g_means[i, 0] += d_power * (-(conics[i, 0] * dx) - conics[i, 1] * dy)
                    g_means[i, 1] += d_power * (-(conics[i, 2] * dy) - conics[i, 1] * dx)
                    g_conics[i, 0] += d_power * (-0.5 * dx * dx)
                    g_conics[i, 1] += d_power * (-dx * dy)
                    g_conics[i, 2] += d_power * (-0.5 * dy * dy)
    return g_means_arr, g_conics_arr, g_opac_arr, g_colors_arr
