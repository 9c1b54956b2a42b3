"""Pure NumPy implementations of the compiled kernels in ``_kernels.pyx``."""

from __future__ import annotations

import numpy as np

STATUS_OK = 0
STATUS_NORM_COLLAPSE = 1
STATUS_NONFINITE = 2


def _log_row(obs, refs, psi, logs, row):
    nobs = obs.shape[0]
    for a in range(nobs):
        logs[row, a] = np.vdot(psi, obs[a] @ psi).real
    for a in range(refs.shape[0]):
        logs[row, nobs + a] = abs(np.vdot(refs[a], psi)) ** 2


def split_step(propagator, m, psi0, dt, gamma, xi, drive_coeff, obs, refs, stride):
    nsteps = xi.shape[0]
    nlog = (nsteps + stride - 1) // stride
    increments = np.empty(nsteps)
    means = np.empty(nsteps)
    logs = np.zeros((nlog, obs.shape[0] + refs.shape[0]))
    psi = np.array(psi0, dtype=complex)
    sqrt_gdt = np.sqrt(gamma * dt)
    quad = gamma * m * m * dt
    status, fail_step = STATUS_OK, -1
    for n in range(nsteps):
        if n % stride == 0:
            _log_row(obs, refs, psi, logs, n // stride)
        prob = psi.real**2 + psi.imag**2
        mean = float(m @ prob)
        di = gamma * mean * dt + sqrt_gdt * xi[n]
        increments[n] = di
        means[n] = mean
        dx = di + drive_coeff * gamma * mean * dt
        expo = m * dx - quad
        tmp = psi * np.exp(expo - expo.max())
        norm2 = float(np.vdot(tmp, tmp).real)
        if not np.isfinite(norm2):
            status, fail_step = STATUS_NONFINITE, n
            break
        if norm2 < 1e-24:
            status, fail_step = STATUS_NORM_COLLAPSE, n
            break
        psi = propagator @ tmp
        psi /= np.sqrt(np.vdot(psi, psi).real)
    return increments, means, logs, psi, status, fail_step


def euler_maruyama(h_ptr, h_idx, h_dat, m_ptr, m_idx, m_dat, m2_ptr, m2_idx, m2_dat,
                   psi0, dt, gamma, xi, drive_coeff, obs, refs, stride):
    import scipy.sparse as sp

    d = psi0.shape[0]
    h = sp.csr_matrix((h_dat, h_idx, h_ptr), shape=(d, d))
    mm = sp.csr_matrix((m_dat, m_idx, m_ptr), shape=(d, d))
    m2 = sp.csr_matrix((m2_dat, m2_idx, m2_ptr), shape=(d, d))
    a = (-1j * dt) * h - (0.5 * gamma * dt) * m2
    nsteps = xi.shape[0]
    nlog = (nsteps + stride - 1) // stride
    increments = np.empty(nsteps)
    means = np.empty(nsteps)
    logs = np.zeros((nlog, obs.shape[0] + refs.shape[0]))
    psi = np.array(psi0, dtype=complex)
    sqrt_gdt = np.sqrt(gamma * dt)
    status, fail_step = STATUS_OK, -1
    for n in range(nsteps):
        if n % stride == 0:
            _log_row(obs, refs, psi, logs, n // stride)
        mv = mm @ psi
        mean = float(np.vdot(psi, mv).real)
        di = gamma * mean * dt + sqrt_gdt * xi[n]
        increments[n] = di
        means[n] = mean
        dx = di + drive_coeff * gamma * mean * dt
        psi = psi + a @ psi + dx * mv
        norm2 = float(np.vdot(psi, psi).real)
        if not np.isfinite(norm2):
            status, fail_step = STATUS_NONFINITE, n
            break
        if norm2 < 1e-24:
            status, fail_step = STATUS_NORM_COLLAPSE, n
            break
        psi /= np.sqrt(norm2)
    return increments, means, logs, psi, status, fail_step


def render_lorentzians(centers, widths, weights, grid, chunk=2048):
    out = np.zeros(grid.shape[0])
    for start in range(0, centers.shape[0], chunk):
        c = centers[start:start + chunk, None]
        w = widths[start:start + chunk, None]
        a = (weights[start:start + chunk] * widths[start:start + chunk])[:, None]
        out += (a / ((grid[None, :] - c) ** 2 + w * w)).sum(axis=0)
    return out
