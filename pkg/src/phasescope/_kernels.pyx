# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: trajectory stepping and Lorentzian rendering.

Signatures and return values mirror ``_pykernels`` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, isfinite
from scipy.linalg.cython_blas cimport zgemv

ctypedef double complex cplx

cnp.import_array()

cdef int STATUS_OK = 0
cdef int STATUS_NORM_COLLAPSE = 1
cdef int STATUS_NONFINITE = 2


cdef inline double _expect_dense(cplx[:, ::1] op, cplx[::1] psi, cplx[::1] work) noexcept nogil:
    cdef int n = <int>psi.shape[0]
    cdef int one = 1
    cdef cplx alpha = 1.0
    cdef cplx beta = 0.0
    cdef char trans = b'T'
    cdef double acc = 0.0
    cdef Py_ssize_t i
    zgemv(&trans, &n, &n, &alpha, &op[0, 0], &n, &psi[0], &one, &beta, &work[0], &one)
    for i in range(n):
        acc += psi[i].real * work[i].real + psi[i].imag * work[i].imag
    return acc


cdef inline double _overlap_sq(cplx[::1] ref, cplx[::1] psi) noexcept nogil:
    cdef double re = 0.0, im = 0.0
    cdef Py_ssize_t i
    for i in range(psi.shape[0]):
        # conj(ref[i]) * psi[i]
        re += ref[i].real * psi[i].real + ref[i].imag * psi[i].imag
        im += ref[i].real * psi[i].imag - ref[i].imag * psi[i].real
    return re * re + im * im


cdef void _log_row(cplx[:, :, ::1] obs, cplx[:, ::1] refs, cplx[::1] psi, cplx[::1] work,
                   double[:, ::1] logs, Py_ssize_t row) noexcept nogil:
    cdef Py_ssize_t a
    cdef Py_ssize_t nobs = obs.shape[0]
    for a in range(nobs):
        logs[row, a] = _expect_dense(obs[a], psi, work)
    for a in range(refs.shape[0]):
        logs[row, nobs + a] = _overlap_sq(refs[a], psi)


def split_step(cplx[:, ::1] propagator, double[::1] m, cplx[::1] psi0, double dt, double gamma,
               double[::1] xi, double drive_coeff, cplx[:, :, ::1] obs, cplx[:, ::1] refs,
               Py_ssize_t stride):
    """Exponential measurement step in the M eigenbasis, then exact unitary step."""
    cdef Py_ssize_t d = psi0.shape[0]
    cdef Py_ssize_t nsteps = xi.shape[0]
    cdef Py_ssize_t nlog = (nsteps + stride - 1) // stride
    cdef Py_ssize_t ncol = obs.shape[0] + refs.shape[0]
    increments_arr = np.empty(nsteps, dtype=np.float64)
    means_arr = np.empty(nsteps, dtype=np.float64)
    logs_arr = np.zeros((nlog, ncol), dtype=np.float64)
    psi_arr = np.array(psi0, dtype=np.complex128, copy=True)
    tmp_arr = np.empty(d, dtype=np.complex128)
    work_arr = np.empty(d, dtype=np.complex128)
    expo_arr = np.empty(d, dtype=np.float64)
    cdef double[::1] increments = increments_arr
    cdef double[::1] means = means_arr
    cdef double[:, ::1] logs = logs_arr
    cdef cplx[::1] psi = psi_arr
    cdef cplx[::1] tmp = tmp_arr
    cdef cplx[::1] work = work_arr
    cdef double[::1] expo = expo_arr
    cdef double sqrt_gdt = sqrt(gamma * dt)
    cdef double mean, di, dx, norm2, emax, f
    cdef Py_ssize_t n, k
    cdef int status = STATUS_OK
    cdef Py_ssize_t fail_step = -1
    cdef int di_ = <int>d
    cdef int one = 1
    cdef cplx alpha = 1.0
    cdef cplx beta = 0.0
    cdef char trans = b'T'

    with nogil:
        for n in range(nsteps):
            if n % stride == 0:
                _log_row(obs, refs, psi, work, logs, n // stride)
            mean = 0.0
            for k in range(d):
                mean += m[k] * (psi[k].real * psi[k].real + psi[k].imag * psi[k].imag)
            di = gamma * mean * dt + sqrt_gdt * xi[n]
            increments[n] = di
            means[n] = mean
            dx = di + drive_coeff * gamma * mean * dt
            emax = -1e300
            for k in range(d):
                expo[k] = m[k] * dx - gamma * m[k] * m[k] * dt
                if expo[k] > emax:
                    emax = expo[k]
            norm2 = 0.0
            for k in range(d):
                f = exp(expo[k] - emax)
                tmp[k] = psi[k] * f
                norm2 += tmp[k].real * tmp[k].real + tmp[k].imag * tmp[k].imag
            if not isfinite(norm2):
                status = STATUS_NONFINITE
                fail_step = n
                break
            if norm2 < 1e-24:
                status = STATUS_NORM_COLLAPSE
                fail_step = n
                break
            zgemv(&trans, &di_, &di_, &alpha, &propagator[0, 0], &di_, &tmp[0], &one, &beta, &psi[0], &one)
            norm2 = 0.0
            for k in range(d):
                norm2 += psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
            f = 1.0 / sqrt(norm2)
            for k in range(d):
                psi[k] = psi[k] * f
    return increments_arr, means_arr, logs_arr, psi_arr, status, fail_step


cdef inline void _csr_matvec(int[::1] indptr, int[::1] indices, cplx[::1] data,
                             cplx[::1] x, cplx[::1] y) noexcept nogil:
    cdef Py_ssize_t r, p
    cdef cplx acc
    for r in range(y.shape[0]):
        acc = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            acc = acc + data[p] * x[indices[p]]
        y[r] = acc


def euler_maruyama(int[::1] h_ptr, int[::1] h_idx, cplx[::1] h_dat,
                   int[::1] m_ptr, int[::1] m_idx, cplx[::1] m_dat,
                   int[::1] m2_ptr, int[::1] m2_idx, cplx[::1] m2_dat,
                   cplx[::1] psi0, double dt, double gamma, double[::1] xi, double drive_coeff,
                   cplx[:, :, ::1] obs, cplx[:, ::1] refs, Py_ssize_t stride):
    """Linear Ito-Euler step of the record-driven equation, renormalised each step."""
    cdef Py_ssize_t d = psi0.shape[0]
    cdef Py_ssize_t nsteps = xi.shape[0]
    cdef Py_ssize_t nlog = (nsteps + stride - 1) // stride
    cdef Py_ssize_t ncol = obs.shape[0] + refs.shape[0]
    increments_arr = np.empty(nsteps, dtype=np.float64)
    means_arr = np.empty(nsteps, dtype=np.float64)
    logs_arr = np.zeros((nlog, ncol), dtype=np.float64)
    psi_arr = np.array(psi0, dtype=np.complex128, copy=True)
    hv_arr = np.empty(d, dtype=np.complex128)
    mv_arr = np.empty(d, dtype=np.complex128)
    m2v_arr = np.empty(d, dtype=np.complex128)
    work_arr = np.empty(d, dtype=np.complex128)
    cdef double[::1] increments = increments_arr
    cdef double[::1] means = means_arr
    cdef double[:, ::1] logs = logs_arr
    cdef cplx[::1] psi = psi_arr
    cdef cplx[::1] hv = hv_arr
    cdef cplx[::1] mv = mv_arr
    cdef cplx[::1] m2v = m2v_arr
    cdef cplx[::1] work = work_arr
    cdef double sqrt_gdt = sqrt(gamma * dt)
    cdef double mean, di, dx, norm2, f
    cdef cplx minus_i_dt = -1j * dt
    cdef double half_g_dt = 0.5 * gamma * dt
    cdef Py_ssize_t n, k
    cdef int status = STATUS_OK
    cdef Py_ssize_t fail_step = -1

    with nogil:
        for n in range(nsteps):
            if n % stride == 0:
                _log_row(obs, refs, psi, work, logs, n // stride)
            _csr_matvec(h_ptr, h_idx, h_dat, psi, hv)
            _csr_matvec(m_ptr, m_idx, m_dat, psi, mv)
            _csr_matvec(m2_ptr, m2_idx, m2_dat, psi, m2v)
            mean = 0.0
            for k in range(d):
                mean += psi[k].real * mv[k].real + psi[k].imag * mv[k].imag
            di = gamma * mean * dt + sqrt_gdt * xi[n]
            increments[n] = di
            means[n] = mean
            dx = di + drive_coeff * gamma * mean * dt
            norm2 = 0.0
            for k in range(d):
                psi[k] = psi[k] + minus_i_dt * hv[k] - half_g_dt * m2v[k] + dx * mv[k]
                norm2 += psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
            if not isfinite(norm2):
                status = STATUS_NONFINITE
                fail_step = n
                break
            if norm2 < 1e-24:
                status = STATUS_NORM_COLLAPSE
                fail_step = n
                break
            f = 1.0 / sqrt(norm2)
            for k in range(d):
                psi[k] = psi[k] * f
    return increments_arr, means_arr, logs_arr, psi_arr, status, fail_step


def render_lorentzians(double[::1] centers, double[::1] widths, double[::1] weights, double[::1] grid):
    """sum_c weight_c * width_c / ((grid - center_c)^2 + width_c^2)."""
    cdef Py_ssize_t nc = centers.shape[0]
    cdef Py_ssize_t ng = grid.shape[0]
    out_arr = np.zeros(ng, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t c, g
    cdef double w2, a, dw
    with nogil:
        for c in range(nc):
            w2 = widths[c] * widths[c]
            a = weights[c] * widths[c]
            for g in range(ng):
                dw = grid[g] - centers[c]
                out[g] += a / (dw * dw + w2)
    return out_arr
