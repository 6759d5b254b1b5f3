"""Open-system dynamics of a pulsed emitter ensemble.

Two complementary engines operate on the same coupling data:

* :func:`lindblad_propagate` integrates the full master equation in the
  collective-mode representation.  Exact up to integration error, but the
  density matrix limits it to small ensembles.
* :func:`quantum_jump_trajectory` unravels the same master equation into
  pure-state Monte Carlo trajectories.  Excitation number is conserved
  between jumps, so the state is tracked per excitation sector and the
  no-jump evolution is diagonalized once per sector, which keeps single
  trajectories cheap even at 16 emitters.

Times are in ns, rates in 1/ns throughout.
"""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numpy.random import Generator, Philox

from ._kernel import run_pulses
from .ensemble import CollectiveModes, CouplingMatrix
from .streams import PhotonStream

__all__ = [
    "MAX_TRAJECTORY_EMITTERS",
    "MAX_DENSE_EMITTERS",
    "TIME_TOLERANCE_NS",
    "QuantumState",
    "ExcitationModel",
    "EmissionRecords",
    "lowering_operator",
    "collective_operator",
    "excitation_number_operator",
    "interaction_hamiltonian",
    "lindblad_propagate",
    "emission_rate",
    "quantum_jump_trajectory",
    "simulate_pulsed_experiment",
]

# Jump times are located by bisection to this absolute precision.
TIME_TOLERANCE_NS = 1e-4

# Pure-state trajectories track sectors of the 2^n ladder; beyond 16 emitters
# the largest sector (12870 at n=16) stops being a sane default.
MAX_TRAJECTORY_EMITTERS = 16

# Dense operators and density matrices are capped independently.
MAX_DENSE_EMITTERS = 12
_MAX_LINDBLAD_EMITTERS = 6

_NORM_TOL = 1e-9
_TRACE_TARGET = 1e-8
_SEED_MASK = (1 << 64) - 1
_CHUNK_PULSES = 1 << 15


def _readonly(a):
    out = np.array(a, copy=True)
    out.setflags(write=False)
    return out


def _popcounts(dim):
    return np.array([bin(i).count("1") for i in range(dim)], dtype=np.int64)


# ---------------------------------------------------------------------------
# states and drive model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumState:
    """State of ``n`` two-level emitters in the product basis.

    Basis index ``b`` has emitter ``i`` excited iff bit ``i`` of ``b`` is
    set.  ``kind`` is ``"pure"`` (data is a normalized vector of length
    ``2**n``) or ``"density"`` (data is a Hermitian, trace-one, positive
    semidefinite matrix).

    Attributes
    ----------
    kind : str
        Either ``"pure"`` or ``"density"``.
    data : numpy.ndarray
        State vector or density matrix, complex128, read-only.
    """

    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("pure", "density"):
            raise ValueError(f"kind must be 'pure' or 'density', got {self.kind!r}")
        data = np.asarray(self.data, dtype=np.complex128)
        if self.kind == "pure":
            if data.ndim != 1:
                raise ValueError("pure state data must be a 1-D vector")
            dim = data.shape[0]
        else:
            if data.ndim != 2 or data.shape[0] != data.shape[1]:
                raise ValueError("density matrix must be square")
            dim = data.shape[0]
        n = dim.bit_length() - 1
        if dim < 2 or (1 << n) != dim:
            raise ValueError(f"dimension {dim} is not a power of two >= 2")
        if self.kind == "pure":
            nrm = float(np.linalg.norm(data))
            if abs(nrm - 1.0) > _NORM_TOL:
                raise ValueError(f"pure state norm {nrm} deviates from 1 by > {_NORM_TOL}")
        else:
            scale = max(1.0, float(np.abs(data).max()))
            if np.abs(data - data.conj().T).max() > _NORM_TOL * scale:
                raise ValueError("density matrix is not Hermitian")
            tr = float(np.real(np.trace(data)))
            if abs(tr - 1.0) > _NORM_TOL:
                raise ValueError(f"density matrix trace {tr} deviates from 1 by > {_NORM_TOL}")
            evals = np.linalg.eigvalsh(0.5 * (data + data.conj().T))
            if evals.min() < -_NORM_TOL:
                raise ValueError(f"density matrix not positive semidefinite (min eig {evals.min()})")
        object.__setattr__(self, "data", _readonly(data))

    @property
    def n(self) -> int:
        """Number of emitters."""
        dim = self.data.shape[0]
        return dim.bit_length() - 1

    @classmethod
    def pure(cls, vector) -> "QuantumState":
        return cls("pure", np.asarray(vector, dtype=np.complex128))

    @classmethod
    def density(cls, matrix) -> "QuantumState":
        return cls("density", np.asarray(matrix, dtype=np.complex128))

    @classmethod
    def ground(cls, n: int) -> "QuantumState":
        vec = np.zeros(1 << n, dtype=np.complex128)
        vec[0] = 1.0
        return cls("pure", vec)

    @classmethod
    def fully_excited(cls, n: int) -> "QuantumState":
        vec = np.zeros(1 << n, dtype=np.complex128)
        vec[-1] = 1.0
        return cls("pure", vec)

    @classmethod
    def from_pattern(cls, n: int, pattern: int) -> "QuantumState":
        """Product state with emitters excited per the bits of ``pattern``."""
        if not 0 <= pattern < (1 << n):
            raise ValueError(f"pattern {pattern} out of range for {n} emitters")
        vec = np.zeros(1 << n, dtype=np.complex128)
        vec[pattern] = 1.0
        return cls("pure", vec)

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        return QuantumState("density", np.outer(self.data, self.data.conj()))

    def excitation(self) -> float:
        """Expectation value of the total excitation number."""
        pop = _popcounts(self.data.shape[0])
        if self.kind == "pure":
            return float(np.sum(pop * np.abs(self.data) ** 2))
        return float(np.real(np.sum(pop * np.diag(self.data))))


@dataclass(frozen=True)
class ExcitationModel:
    """Pulsed-excitation protocol.

    Each pulse independently excites every emitter with probability
    ``p_excite``; emission is then recorded for ``period_ns`` before the next
    pulse resets the register.

    Attributes
    ----------
    period_ns : float
        Pulse repetition period.
    p_excite : float
        Per-emitter excitation probability per pulse.
    n_pulses : int
        Number of pulses to simulate.
    """

    period_ns: float
    p_excite: float = 1.0
    n_pulses: int = 1

    def __post_init__(self):
        if not (self.period_ns > 0 and math.isfinite(self.period_ns)):
            raise ValueError(f"period_ns must be positive and finite, got {self.period_ns}")
        if not 0.0 <= self.p_excite <= 1.0:
            raise ValueError(f"p_excite must lie in [0, 1], got {self.p_excite}")
        if self.n_pulses < 0:
            raise ValueError(f"n_pulses must be >= 0, got {self.n_pulses}")


# ---------------------------------------------------------------------------
# dense operators (small n only; used by the master equation and by tests)
# ---------------------------------------------------------------------------


def _check_dense_n(n):
    if n > MAX_DENSE_EMITTERS:
        raise ValueError(
            f"dense operators limited to {MAX_DENSE_EMITTERS} emitters, got {n}"
        )


def lowering_operator(n: int, index: int) -> np.ndarray:
    """Dense lowering operator of emitter ``index`` in the ``2**n`` basis."""
    _check_dense_n(n)
    if not 0 <= index < n:
        raise ValueError(f"emitter index {index} out of range for n={n}")
    dim = 1 << n
    op = np.zeros((dim, dim), dtype=np.complex128)
    bit = 1 << index
    for b in range(dim):
        if b & bit:
            op[b & ~bit, b] = 1.0
    return op


def collective_operator(modes: CollectiveModes, nu: int) -> np.ndarray:
    """Dense jump operator of collective mode ``nu``: sum_n u_n sigma_n."""
    n = modes.rates.shape[0]
    _check_dense_n(n)
    if not 0 <= nu < n:
        raise ValueError(f"mode index {nu} out of range for n={n}")
    dim = 1 << n
    op = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(n):
        coeff = modes.vectors[nu, i]
        if coeff != 0.0:
            op += coeff * lowering_operator(n, i)
    return op


def excitation_number_operator(n: int) -> np.ndarray:
    """Dense total excitation number operator."""
    _check_dense_n(n)
    return np.diag(_popcounts(1 << n).astype(np.complex128))


def interaction_hamiltonian(coupling: CouplingMatrix) -> np.ndarray:
    """Dense coherent dipole-dipole Hamiltonian sum_{i!=j} J_ij sigma_i^+ sigma_j."""
    n = coupling.n
    _check_dense_n(n)
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            if i == j or coupling.j[i, j] == 0.0:
                continue
            si = lowering_operator(n, i)
            sj = lowering_operator(n, j)
            h += coupling.j[i, j] * (si.conj().T @ sj)
    return h


# ---------------------------------------------------------------------------
# master equation
# ---------------------------------------------------------------------------


def _rk4_run(rho, t_grid, substeps, rhs):
    out = [rho]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        h = (b - a) / substeps
        for _ in range(substeps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * h * k1)
            k3 = rhs(rho + 0.5 * h * k2)
            k4 = rhs(rho + h * k3)
            rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        out.append(rho)
    return out


def lindblad_propagate(
    coupling: CouplingMatrix,
    modes: CollectiveModes,
    state: QuantumState,
    t_grid,
) -> list[QuantumState]:
    """Integrate the collective master equation on a time grid.

    drho/dt = -i[H, rho]
              + sum_nu Gamma_nu (L_nu rho L_nu^+ - {L_nu^+ L_nu, rho} / 2)

    with H the coherent dipole-dipole Hamiltonian and L_nu the collective
    jump operators.  Fixed-step RK4; the step count per grid interval is
    doubled until the worst trace-norm change of any returned state falls
    below 1e-8.

    Parameters
    ----------
    coupling : CouplingMatrix
    modes : CollectiveModes
        Eigendecomposition of the dissipative part of ``coupling``.
    state : QuantumState
        Initial state; converted to a density matrix internally.
    t_grid : array_like
        Strictly increasing times in ns.  The first entry is the time of
        ``state``; one state per grid point is returned.

    Returns
    -------
    list of QuantumState
        Density-matrix states, one per grid time.
    """
    n = coupling.n
    if n > _MAX_LINDBLAD_EMITTERS:
        raise ValueError(
            f"master-equation propagation limited to {_MAX_LINDBLAD_EMITTERS} emitters, got {n}"
        )
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if not np.all(np.isfinite(t_grid)):
        raise ValueError("t_grid must be finite")
    if t_grid.size > 1 and not np.all(np.diff(t_grid) > 0):
        raise ValueError("t_grid must be strictly increasing")
    rho0 = state.to_density().data.copy()
    if rho0.shape[0] != (1 << n):
        raise ValueError(
            f"state dimension {rho0.shape[0]} does not match {n} emitters"
        )

    h_op = interaction_hamiltonian(coupling)
    jump_ops = []
    for nu in range(n):
        if modes.rates[nu] > 0.0:
            jump_ops.append(math.sqrt(modes.rates[nu]) * collective_operator(modes, nu))
    damp = sum((op.conj().T @ op for op in jump_ops), np.zeros_like(h_op))
    h_eff = h_op - 0.5j * damp

    def rhs(rho):
        drho = -1j * (h_eff @ rho - rho @ h_eff.conj().T)
        for op in jump_ops:
            drho += op @ rho @ op.conj().T
        return drho

    if t_grid.size == 1:
        return [QuantumState.density(rho0)]

    # initial substep count from the fastest rate in the generator
    rate_scale = float(np.max(modes.rates)) if modes.rates.size else 0.0
    rate_scale = max(rate_scale, float(np.abs(coupling.j).max()), 1e-12)
    dt_max = float(np.max(np.diff(t_grid)))
    substeps = max(1, int(math.ceil(dt_max * rate_scale / 0.25)))

    prev = _rk4_run(rho0, t_grid, substeps, rhs)
    for _ in range(16):
        substeps *= 2
        cur = _rk4_run(rho0, t_grid, substeps, rhs)
        worst = 0.0
        for a, b in zip(prev, cur):
            diff = a - b
            worst = max(worst, float(np.abs(np.linalg.eigvalsh(diff)).sum()))
        prev = cur
        if worst < _TRACE_TARGET:
            return [QuantumState.density(r) for r in cur]
    raise RuntimeError(
        "master-equation integrator failed to reach trace-norm tolerance "
        f"{_TRACE_TARGET} after {substeps} substeps per interval"
    )


def emission_rate(state: QuantumState, modes: CollectiveModes) -> float:
    """Total photon emission rate sum_nu Gamma_nu <L_nu^+ L_nu> in 1/ns.

    Works matrix-free for pure states (any trajectory-sized ensemble) and
    via dense operators for density matrices.  Clamped at zero against
    roundoff.
    """
    n = modes.rates.shape[0]
    dim = 1 << n
    if state.data.shape[0] != dim:
        raise ValueError(
            f"state dimension {state.data.shape[0]} does not match {n} emitters"
        )
    if state.kind == "pure":
        psi = state.data
        total = 0.0
        for nu in range(n):
            if modes.rates[nu] <= 0.0:
                continue
            out = np.zeros(dim, dtype=np.complex128)
            for i in range(n):
                coeff = modes.vectors[nu, i]
                if coeff == 0.0:
                    continue
                bit = 1 << i
                idx = np.arange(dim)
                sel = (idx & bit).astype(bool)
                np.add.at(out, idx[sel] & ~bit, coeff * psi[sel])
            total += modes.rates[nu] * float(np.vdot(out, out).real)
        return max(total, 0.0)
    _check_dense_n(n)
    damp = np.zeros((dim, dim), dtype=np.complex128)
    for nu in range(n):
        if modes.rates[nu] <= 0.0:
            continue
        op = collective_operator(modes, nu)
        damp += modes.rates[nu] * (op.conj().T @ op)
    return max(float(np.real(np.trace(state.data @ damp))), 0.0)


# ---------------------------------------------------------------------------
# sector cascade for quantum-jump trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Cascade:
    n: int
    hermitian: int
    dims: np.ndarray
    pos_in_sector: np.ndarray
    voff: np.ndarray
    soff: np.ndarray
    joff: np.ndarray
    v_flat: np.ndarray
    vinv_flat: np.ndarray
    omega_flat: np.ndarray
    gdec_flat: np.ndarray
    jsrc: np.ndarray
    jbit: np.ndarray
    jtgt: np.ndarray
    mode_rates: np.ndarray
    mode_u: np.ndarray


_CASCADE_CACHE: dict = {}
_CASCADE_CACHE_MAX = 8


def _sector_matrix(coeff, basis, pos_in_sector, n):
    """Sector block of sum_{ij} coeff_ij sigma_i^+ sigma_j."""
    dk = len(basis)
    out = np.zeros((dk, dk), dtype=coeff.dtype)
    for s_idx, b in enumerate(basis):
        bits = [i for i in range(n) if (b >> i) & 1]
        out[s_idx, s_idx] += sum(coeff[i, i] for i in bits)
        for j in bits:
            stripped = b & ~(1 << j)
            for i in range(n):
                if i == j or (b >> i) & 1:
                    continue
                t = stripped | (1 << i)
                out[pos_in_sector[t], s_idx] += coeff[i, j]
    return out


def _build_cascade(coupling: CouplingMatrix, modes: CollectiveModes) -> _Cascade:
    n = coupling.n
    key = (
        coupling.gamma.tobytes(),
        coupling.j.tobytes(),
        modes.rates.tobytes(),
        modes.vectors.tobytes(),
    )
    hit = _CASCADE_CACHE.get(key)
    if hit is not None:
        return hit

    dim_total = 1 << n
    pop = _popcounts(dim_total)
    dims = np.array([math.comb(n, k) for k in range(n + 1)], dtype=np.int64)
    pos_in_sector = np.zeros(dim_total, dtype=np.int64)
    basis_by_k = [[] for _ in range(n + 1)]
    for b in range(dim_total):
        k = int(pop[b])
        pos_in_sector[b] = len(basis_by_k[k])
        basis_by_k[k].append(b)

    gamma_eff = modes.reconstruct()
    hermitian = 1 if float(np.abs(coupling.j).max()) == 0.0 else 0

    voff = np.zeros(n + 1, dtype=np.int64)
    soff = np.zeros(n + 1, dtype=np.int64)
    joff = np.zeros(n + 1, dtype=np.int64)
    v_blocks, vinv_blocks, omega_blocks, gdec_blocks = [], [], [], []
    jsrc_blocks, jbit_blocks, jtgt_blocks = [], [], []
    vpos = spos = jpos = 0
    scale = max(float(gamma_eff.max()), float(np.abs(coupling.j).max()), 1e-300)
    for k in range(1, n + 1):
        voff[k] = vpos
        soff[k] = spos
        joff[k] = jpos
        basis = basis_by_k[k]
        dk = dims[k]
        if hermitian:
            gk = _sector_matrix(gamma_eff, basis, pos_in_sector, n)
            g_ev, w = np.linalg.eigh(gk)
            if g_ev.min() < -1e-9 * scale:
                raise RuntimeError(
                    f"sector {k} decay matrix has negative eigenvalue {g_ev.min()}"
                )
            g_ev = np.clip(g_ev, 0.0, None)
            v = w.astype(np.complex128)
            vinv = v.T.copy()
            omega = np.zeros(dk)
            gdec = g_ev
        else:
            coeff = coupling.j.astype(np.complex128) - 0.5j * gamma_eff
            hk = _sector_matrix(coeff, basis, pos_in_sector, n)
            lam, v = np.linalg.eig(hk)
            vinv = np.linalg.inv(v)
            omega = lam.real.copy()
            gdec = -2.0 * lam.imag
            if gdec.min() < -1e-7 * scale:
                raise RuntimeError(
                    f"sector {k} has growing eigenmode (decay {gdec.min()})"
                )
            gdec = np.clip(gdec, 0.0, None)
        v_blocks.append(np.ascontiguousarray(v).ravel())
        vinv_blocks.append(np.ascontiguousarray(vinv).ravel())
        omega_blocks.append(np.ascontiguousarray(omega, dtype=np.float64))
        gdec_blocks.append(np.ascontiguousarray(gdec, dtype=np.float64))
        vpos += dk * dk
        spos += dk

        src, bitn, tgt = [], [], []
        for s_idx, b in enumerate(basis):
            for j in range(n):
                if (b >> j) & 1:
                    src.append(s_idx)
                    bitn.append(j)
                    tgt.append(pos_in_sector[b & ~(1 << j)])
        jsrc_blocks.append(np.array(src, dtype=np.int32))
        jbit_blocks.append(np.array(bitn, dtype=np.int32))
        jtgt_blocks.append(np.array(tgt, dtype=np.int32))
        jpos += dk * k

    cascade = _Cascade(
        n=n,
        hermitian=hermitian,
        dims=dims,
        pos_in_sector=pos_in_sector,
        voff=voff,
        soff=soff,
        joff=joff,
        v_flat=np.concatenate(v_blocks),
        vinv_flat=np.concatenate(vinv_blocks),
        omega_flat=np.concatenate(omega_blocks),
        gdec_flat=np.concatenate(gdec_blocks),
        jsrc=np.concatenate(jsrc_blocks),
        jbit=np.concatenate(jbit_blocks),
        jtgt=np.concatenate(jtgt_blocks),
        mode_rates=np.ascontiguousarray(modes.rates, dtype=np.float64),
        mode_u=np.ascontiguousarray(modes.vectors, dtype=np.float64),
    )
    if len(_CASCADE_CACHE) >= _CASCADE_CACHE_MAX:
        _CASCADE_CACHE.pop(next(iter(_CASCADE_CACHE)))
    _CASCADE_CACHE[key] = cascade
    return cascade


# ---------------------------------------------------------------------------
# trajectory sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmissionRecords:
    """Photon emission events from a batch of simulated pulses.

    Attributes
    ----------
    pulse_indices : numpy.ndarray
        Absolute pulse index of each event (int64, includes any offset).
    times_ns : numpy.ndarray
        Emission time of each event, ns since its pulse started.
    channels : numpy.ndarray
        Collective-mode index that emitted (int32, sorted by decreasing
        mode rate as in :class:`~qdcount.ensemble.CollectiveModes`).
    period_ns : float
        Pulse period used for the simulation.
    n_pulses : int
        Number of pulses simulated in this batch.
    """

    pulse_indices: np.ndarray
    times_ns: np.ndarray
    channels: np.ndarray
    period_ns: float
    n_pulses: int

    def __post_init__(self):
        object.__setattr__(self, "pulse_indices", _readonly(np.asarray(self.pulse_indices, dtype=np.int64)))
        object.__setattr__(self, "times_ns", _readonly(np.asarray(self.times_ns, dtype=np.float64)))
        object.__setattr__(self, "channels", _readonly(np.asarray(self.channels, dtype=np.int32)))
        if not (len(self.pulse_indices) == len(self.times_ns) == len(self.channels)):
            raise ValueError("event arrays must have equal length")

    def __len__(self) -> int:
        return self.times_ns.shape[0]

    def absolute_times_ns(self) -> np.ndarray:
        """Event times on the common lab-time axis."""
        return self.pulse_indices * self.period_ns + self.times_ns


def _draw_uniforms(master_seed, pulse_ids, per_pulse):
    out = np.empty((pulse_ids.shape[0], per_pulse), dtype=np.float64)
    key_hi = master_seed & _SEED_MASK
    for row, pid in enumerate(pulse_ids):
        gen = Generator(Philox(key=np.array([key_hi, int(pid) & _SEED_MASK], dtype=np.uint64)))
        out[row] = gen.random(per_pulse)
    return out


def _check_period(modes: CollectiveModes, period_ns: float):
    # dark modes come out of the eigensolver as tiny nonzero rates; they
    # never radiate, so they must not drive the period heuristic
    floor = 1e-9 * float(modes.rates.max(initial=0.0))
    positive = modes.rates[modes.rates > floor]
    if positive.size == 0:
        return
    needed = 5.0 / float(positive.min())
    if period_ns < needed:
        warnings.warn(
            f"pulse period {period_ns:g} ns is below five lifetimes of the "
            f"slowest collective mode ({needed:g} ns); emission from "
            "consecutive pulses will overlap",
            stacklevel=3,
        )


def quantum_jump_trajectory(
    coupling: CouplingMatrix,
    modes: CollectiveModes,
    excitation: ExcitationModel,
    seed: int,
    pulse_offset: int = 0,
) -> EmissionRecords:
    """Monte Carlo unraveling of the collective master equation.

    Each pulse prepares an independent random excitation pattern, then the
    norm-threshold jump protocol runs until the register is empty or the
    period ends.  The random stream of pulse ``p`` is keyed by
    ``(seed, pulse_offset + p)`` with a counter-based generator, so a run
    split into shards reproduces the unsharded run event-for-event.

    Parameters
    ----------
    coupling : CouplingMatrix
    modes : CollectiveModes
    excitation : ExcitationModel
    seed : int
        Master seed, non-negative.
    pulse_offset : int, optional
        Absolute index of the first pulse in this batch.

    Returns
    -------
    EmissionRecords
    """
    n = coupling.n
    if n > MAX_TRAJECTORY_EMITTERS:
        raise ValueError(
            f"trajectory sampling limited to {MAX_TRAJECTORY_EMITTERS} emitters, got {n}"
        )
    if modes.rates.shape[0] != n:
        raise ValueError("modes do not match coupling size")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if pulse_offset < 0:
        raise ValueError(f"pulse_offset must be non-negative, got {pulse_offset}")
    _check_period(modes, excitation.period_ns)
    cascade = _build_cascade(coupling, modes)

    all_pulse, all_time, all_chan = [], [], []
    per_pulse = 3 * n
    for start in range(0, excitation.n_pulses, _CHUNK_PULSES):
        stop = min(start + _CHUNK_PULSES, excitation.n_pulses)
        ids = np.arange(pulse_offset + start, pulse_offset + stop, dtype=np.int64)
        randoms = _draw_uniforms(seed, ids, per_pulse)
        cap = ids.shape[0] * n
        ev_time = np.empty(cap, dtype=np.float64)
        ev_chan = np.empty(cap, dtype=np.int32)
        ev_pulse = np.empty(cap, dtype=np.int64)
        m = run_pulses(
            n,
            excitation.p_excite,
            excitation.period_ns,
            TIME_TOLERANCE_NS,
            cascade.dims,
            cascade.pos_in_sector,
            cascade.voff,
            cascade.soff,
            cascade.joff,
            cascade.v_flat,
            cascade.vinv_flat,
            cascade.omega_flat,
            cascade.gdec_flat,
            cascade.hermitian,
            cascade.jsrc,
            cascade.jbit,
            cascade.jtgt,
            cascade.mode_rates,
            cascade.mode_u,
            randoms,
            ids,
            ev_time,
            ev_chan,
            ev_pulse,
        )
        all_time.append(ev_time[:m].copy())
        all_chan.append(ev_chan[:m].copy())
        all_pulse.append(ev_pulse[:m].copy())

    if all_time:
        times = np.concatenate(all_time)
        chans = np.concatenate(all_chan)
        pulses = np.concatenate(all_pulse)
    else:
        times = np.empty(0, dtype=np.float64)
        chans = np.empty(0, dtype=np.int32)
        pulses = np.empty(0, dtype=np.int64)
    return EmissionRecords(
        pulse_indices=pulses,
        times_ns=times,
        channels=chans,
        period_ns=excitation.period_ns,
        n_pulses=excitation.n_pulses,
    )


def _config_digest(coupling, excitation, seed, pulse_offset):
    h = hashlib.sha256()
    h.update(coupling.gamma.tobytes())
    h.update(coupling.j.tobytes())
    h.update(
        f"{excitation.period_ns!r}|{excitation.p_excite!r}|{excitation.n_pulses}"
        f"|{seed}|{pulse_offset}".encode()
    )
    return h.hexdigest()[:16]


def simulate_pulsed_experiment(
    coupling: CouplingMatrix,
    modes: CollectiveModes,
    excitation: ExcitationModel,
    seed: int,
    pulse_offset: int = 0,
) -> PhotonStream:
    """Run trajectories and package the emitted photons as a raw stream.

    The returned stream has ``detector == -1`` for every photon (no detector
    chain applied yet) and delays rounded to integer picoseconds.

    Returns
    -------
    PhotonStream
    """
    rec = quantum_jump_trajectory(coupling, modes, excitation, seed, pulse_offset)
    delays = np.rint(rec.times_ns * 1000.0).astype(np.int64)
    detectors = np.full(len(rec), -1, dtype=np.int8)
    meta = {
        "period_ns": excitation.period_ns,
        "n_pulses": excitation.n_pulses,
        "seed": int(seed),
        "config_hash": _config_digest(coupling, excitation, seed, pulse_offset),
    }
    return PhotonStream(
        pulse_index=rec.pulse_indices.copy(),
        detector=detectors,
        delay_ps=delays,
        meta=meta,
    )
