"""Inner loop of the quantum-jump Monte Carlo, compiled with numba.

The pure-state trajectory lives in excitation-number sectors: the coherent
part of the evolution and every L_nu^dagger L_nu conserve total excitation,
and each jump lowers it by exactly one.  Per sector the non-Hermitian
generator is diagonalized once up front (see dynamics._build_cascade), so the
no-jump evolution between jumps is a phase/decay factor in the eigenbasis and
the norm-threshold crossing can be bisected cheaply.

All sector data arrives flattened into 1-D arrays with per-sector offset
tables, because numba cannot index tuples of heterogeneous arrays by a
runtime sector index.
"""

import math

import numpy as np
from numba import njit

__all__ = ["run_pulses"]


@njit(cache=True, inline="always")
def _norm2_herm(w, gdec, so, dk, t):
    # Norm of the no-jump state when the eigenbasis is orthonormal:
    # sum_m |c_m|^2 exp(-g_m t).
    s = 0.0
    for m in range(dk):
        s += w[m] * math.exp(-gdec[so + m] * t)
    return s


@njit(cache=True, inline="always")
def _norm2_general(v_flat, vo, omega, gdec, so, dk, c, t, buf, psi_t):
    # Non-normal generator: reconstruct psi(t) = V (e^{-i lambda t} c) and
    # take its norm directly.
    for m in range(dk):
        decay = math.exp(-0.5 * gdec[so + m] * t)
        ph = -omega[so + m] * t
        buf[m] = c[m] * complex(math.cos(ph) * decay, math.sin(ph) * decay)
    s = 0.0
    for i in range(dk):
        acc = 0.0 + 0.0j
        base = vo + i * dk
        for m in range(dk):
            acc += v_flat[base + m] * buf[m]
        psi_t[i] = acc
        s += acc.real * acc.real + acc.imag * acc.imag
    return s


@njit(cache=True)
def run_pulses(
    n_emitters,
    p_excite,
    period_ns,
    time_tol_ns,
    dims,
    pos_in_sector,
    voff,
    soff,
    joff,
    v_flat,
    vinv_flat,
    omega_flat,
    gdec_flat,
    hermitian,
    jsrc,
    jbit,
    jtgt,
    mode_rates,
    mode_u,
    randoms,
    pulse_ids,
    ev_time,
    ev_chan,
    ev_pulse,
):
    """Simulate one chunk of pulses; returns the number of emitted events.

    randoms holds 3*n_emitters uniforms per pulse: n for the excitation
    pattern, then (threshold, channel) per jump.  Events are written into the
    preallocated ev_* arrays in pulse order, times in ns since pulse start.
    """
    nmax = dims[n_emitters]
    for k in range(n_emitters + 1):
        if dims[k] > nmax:
            nmax = dims[k]
    psi = np.zeros(nmax, np.complex128)
    psi_t = np.zeros(nmax, np.complex128)
    c = np.zeros(nmax, np.complex128)
    buf = np.zeros(nmax, np.complex128)
    w = np.zeros(nmax, np.float64)
    amp = np.zeros((n_emitters, nmax), np.complex128)
    wv = np.zeros(n_emitters, np.float64)

    m_ev = 0
    for ip in range(randoms.shape[0]):
        ru = randoms[ip]
        ridx = 0
        pattern = 0
        k = 0
        for nn in range(n_emitters):
            if ru[ridx] < p_excite:
                pattern |= 1 << nn
                k += 1
            ridx += 1
        if k == 0:
            continue

        dk = dims[k]
        for i in range(dk):
            psi[i] = 0.0 + 0.0j
        psi[pos_in_sector[pattern]] = 1.0 + 0.0j
        t_abs = 0.0

        while k > 0:
            dk = dims[k]
            vo = voff[k]
            so = soff[k]
            # c = Vinv psi
            for i in range(dk):
                acc = 0.0 + 0.0j
                base = vo + i * dk
                for jj in range(dk):
                    acc += vinv_flat[base + jj] * psi[jj]
                c[i] = acc
            if hermitian == 1:
                for i in range(dk):
                    w[i] = c[i].real * c[i].real + c[i].imag * c[i].imag

            r_thresh = ru[ridx]
            ridx += 1
            t_rem = period_ns - t_abs
            if t_rem <= 0.0:
                break
            if hermitian == 1:
                end_norm = _norm2_herm(w, gdec_flat, so, dk, t_rem)
            else:
                end_norm = _norm2_general(
                    v_flat, vo, omega_flat, gdec_flat, so, dk, c, t_rem, buf, psi_t
                )
            if end_norm > r_thresh:
                break  # threshold not reached inside this pulse window

            lo = 0.0
            hi = t_rem
            while hi - lo > time_tol_ns:
                mid = 0.5 * (lo + hi)
                if hermitian == 1:
                    val = _norm2_herm(w, gdec_flat, so, dk, mid)
                else:
                    val = _norm2_general(
                        v_flat, vo, omega_flat, gdec_flat, so, dk, c, mid, buf, psi_t
                    )
                if val > r_thresh:
                    lo = mid
                else:
                    hi = mid
            tj = 0.5 * (lo + hi)

            # state just before the jump (unnormalized is fine)
            _norm2_general(
                v_flat, vo, omega_flat, gdec_flat, so, dk, c, tj, buf, psi_t
            )

            # jump-channel amplitudes in the sector below
            dkm = dims[k - 1]
            for nu in range(n_emitters):
                for tg in range(dkm):
                    amp[nu, tg] = 0.0 + 0.0j
            jo = joff[k]
            cnt = dk * k
            for q in range(cnt):
                s_idx = jsrc[jo + q]
                nn = jbit[jo + q]
                tg = jtgt[jo + q]
                ps = psi_t[s_idx]
                for nu in range(n_emitters):
                    amp[nu, tg] += mode_u[nu, nn] * ps

            wsum = 0.0
            for nu in range(n_emitters):
                acc = 0.0
                for tg in range(dkm):
                    a = amp[nu, tg]
                    acc += a.real * a.real + a.imag * a.imag
                wv[nu] = mode_rates[nu] * acc
                wsum += wv[nu]
            if not (wsum > 0.0) or not math.isfinite(wsum):
                break  # purely dark remainder; nothing left to emit

            u_pick = ru[ridx] * wsum
            ridx += 1
            chosen = n_emitters - 1
            cumul = 0.0
            for nu in range(n_emitters):
                cumul += wv[nu]
                if u_pick < cumul:
                    chosen = nu
                    break

            nrm = 0.0
            for tg in range(dkm):
                a = amp[chosen, tg]
                nrm += a.real * a.real + a.imag * a.imag
            nrm = math.sqrt(nrm)
            for tg in range(dkm):
                psi[tg] = amp[chosen, tg] / nrm

            k -= 1
            t_abs += tj
            ev_time[m_ev] = t_abs
            ev_chan[m_ev] = chosen
            ev_pulse[m_ev] = pulse_ids[ip]
            m_ev += 1

    return m_ev
