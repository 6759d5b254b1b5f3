"""Emitter ensembles, dipole-dipole coupling matrices and collective decay modes.

An ensemble of n two-level emitters inside a subwavelength volume decays
through collective channels.  The pairwise decay-rate matrix Gamma_ij and the
coherent coupling J_ij follow from the free-space electromagnetic Green's
function evaluated at the emitter separations; diagonalizing Gamma yields n
collective modes with rates Gamma_nu and orthonormal weight vectors u^(nu).
Everything downstream (master equation, jump operators, photon statistics)
is expressed in that mode basis.

Units: lengths in nm, rates in 1/ns, times in ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "EnsembleSpec",
    "EmitterEnsemble",
    "CouplingMatrix",
    "CollectiveModes",
    "PackingError",
    "build_ensemble",
    "coupling_free_space",
    "coupling_uniform",
    "collective_modes",
    "coupling_to_csv",
    "modes_to_csv",
]

# Relative tolerance (in units of the mean intrinsic rate) below which small
# negative eigenvalues of Gamma are treated as numerical noise and clamped.
PSD_TOLERANCE_REL = 1e-9


class PackingError(ValueError):
    """Raised when minimum-distance sphere packing cannot be satisfied.

    Carries the number of emitters placed before giving up and the packing
    density that was requested, so callers can tell how far off the request
    was from achievable.
    """

    def __init__(self, message: str, n_requested: int, n_placed: int, density: float):
        super().__init__(message)
        self.n_requested = n_requested
        self.n_placed = n_placed
        self.density = density


@dataclass(frozen=True)
class EnsembleSpec:
    """Sampling recipe for :func:`build_ensemble`.

    Parameters
    ----------
    n : int
        Number of emitters (>= 1).
    radius_nm : float
        Radius of the spherical volume positions are drawn from.
    min_distance_nm : float, optional
        Minimum allowed center-to-center separation (rejection sampling).
    wavelength_nm : float, optional
        Transition wavelength; sets the phase x = k r in the coupling.
    tau0_ns : float, optional
        Mean intrinsic (isolated-emitter) lifetime, 1/mean decay rate.
    tau0_spread_rel : float, optional
        Relative standard deviation of the intrinsic decay rates.  0 gives
        identical emitters; > 0 draws each rate from a truncated normal.
    dipole : str or sequence of 3 floats, optional
        ``"isotropic"`` for orientation-averaged coupling, ``"random"`` for
        an independent uniformly random unit dipole per emitter, or an
        explicit 3-vector shared by all emitters.
    max_attempts_per_emitter : int, optional
        Rejection-sampling budget before :class:`PackingError` is raised.
    """

    n: int
    radius_nm: float
    min_distance_nm: float = 0.0
    wavelength_nm: float = 620.0
    tau0_ns: float = 48.95
    tau0_spread_rel: float = 0.0
    dipole: str | Sequence[float] = "isotropic"
    max_attempts_per_emitter: int = 2000

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.radius_nm < 0:
            raise ValueError(f"radius_nm must be >= 0, got {self.radius_nm}")
        if self.min_distance_nm < 0:
            raise ValueError("min_distance_nm must be >= 0")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength_nm must be > 0")
        if self.tau0_ns <= 0:
            raise ValueError("tau0_ns must be > 0")
        if self.tau0_spread_rel < 0:
            raise ValueError("tau0_spread_rel must be >= 0")
        if isinstance(self.dipole, str):
            if self.dipole not in ("isotropic", "random"):
                raise ValueError(f"unknown dipole rule {self.dipole!r}")
        else:
            v = np.asarray(self.dipole, dtype=float)
            if v.shape != (3,) or np.linalg.norm(v) == 0:
                raise ValueError("explicit dipole must be a nonzero 3-vector")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EmitterEnsemble:
    """Immutable collection of emitter positions, rates and dipole orientations.

    Attributes
    ----------
    positions_nm : (n, 3) ndarray
    gamma0 : (n,) ndarray
        Intrinsic decay rates in 1/ns, all > 0.
    wavelength_nm : float
    dipoles : (n, 3) ndarray or None
        Unit dipole vectors; None marks orientation-averaged (isotropic)
        coupling.
    """

    positions_nm: np.ndarray
    gamma0: np.ndarray
    wavelength_nm: float
    dipoles: np.ndarray | None = None

    def __post_init__(self):
        pos = _readonly(np.atleast_2d(self.positions_nm))
        g0 = _readonly(np.atleast_1d(self.gamma0))
        object.__setattr__(self, "positions_nm", pos)
        object.__setattr__(self, "gamma0", g0)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions_nm must be (n, 3), got {pos.shape}")
        n = pos.shape[0]
        if g0.shape != (n,):
            raise ValueError(f"gamma0 must have shape ({n},), got {g0.shape}")
        if np.any(g0 <= 0):
            raise ValueError("all intrinsic rates must be > 0")
        if self.wavelength_nm <= 0:
            raise ValueError("wavelength_nm must be > 0")
        if self.dipoles is not None:
            d = _readonly(np.atleast_2d(self.dipoles))
            if d.shape != (n, 3):
                raise ValueError(f"dipoles must be (n, 3), got {d.shape}")
            norms = np.linalg.norm(d, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise ValueError("dipoles must be unit vectors")
            object.__setattr__(self, "dipoles", d)

    @property
    def n(self) -> int:
        return self.positions_nm.shape[0]

    @property
    def gamma0_mean(self) -> float:
        """Mean intrinsic rate, the natural normalization for g2 formulas."""
        return float(np.mean(self.gamma0))


@dataclass(frozen=True)
class CouplingMatrix:
    """Pairwise decay-rate matrix Gamma_ij and coherent coupling J_ij (1/ns).

    Gamma must be symmetric, positive semidefinite within a small clamp
    tolerance, with the intrinsic rates on the diagonal.  J is symmetric with
    zero diagonal (the single-emitter Lamb shift is absorbed into the
    transition frequency and dropped).
    """

    gamma: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        g = _readonly(np.atleast_2d(self.gamma))
        jm = _readonly(np.atleast_2d(self.j))
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "j", jm)
        n = g.shape[0]
        if g.shape != (n, n) or jm.shape != (n, n):
            raise ValueError("gamma and j must be square with matching shape")
        scale = max(np.abs(g).max(), 1e-300)
        if np.abs(g - g.T).max() > 1e-12 * scale:
            raise ValueError("gamma must be symmetric")
        jscale = max(np.abs(jm).max(), scale)
        if np.abs(jm - jm.T).max() > 1e-12 * jscale:
            raise ValueError("j must be symmetric")
        if np.abs(np.diag(jm)).max() > 1e-12 * jscale:
            raise ValueError("j must have zero diagonal")
        if np.any(np.diag(g) <= 0):
            raise ValueError("diagonal of gamma (intrinsic rates) must be > 0")
        evals = np.linalg.eigvalsh(g)
        tol = PSD_TOLERANCE_REL * float(np.mean(np.diag(g)))
        if evals[0] < -tol:
            raise ValueError(
                f"gamma is not positive semidefinite: min eigenvalue {evals[0]:.3e} "
                f"below tolerance -{tol:.3e}"
            )

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    @property
    def gamma0(self) -> np.ndarray:
        """Intrinsic rates (diagonal of gamma)."""
        return np.diag(self.gamma)

    @property
    def gamma0_mean(self) -> float:
        return float(np.mean(np.diag(self.gamma)))


@dataclass(frozen=True)
class CollectiveModes:
    """Eigendecomposition of the decay-rate matrix.

    Attributes
    ----------
    rates : (n,) ndarray
        Collective decay rates Gamma_nu in descending order; tiny negative
        eigenvalues are clamped to exactly 0.
    vectors : (n, n) ndarray
        Row nu holds the orthonormal weight vector u^(nu); the collective
        jump operator is L_nu = sum_n u^(nu)_n sigma_n.
    """

    rates: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        r = _readonly(np.atleast_1d(self.rates))
        v = _readonly(np.atleast_2d(self.vectors))
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "vectors", v)
        n = r.shape[0]
        if v.shape != (n, n):
            raise ValueError("vectors must be (n, n) aligned with rates")
        if np.any(r < 0):
            raise ValueError("rates must be >= 0 after clamping")
        if np.any(np.diff(r) > 0):
            raise ValueError("rates must be sorted in descending order")
        if np.abs(v @ v.T - np.eye(n)).max() > 1e-9:
            raise ValueError("mode vectors must be orthonormal")

    @property
    def n(self) -> int:
        return self.rates.shape[0]

    def reconstruct(self) -> np.ndarray:
        """Rebuild Gamma = sum_nu Gamma_nu u^(nu) u^(nu)T from the modes."""
        return (self.vectors.T * self.rates) @ self.vectors


def build_ensemble(spec: EnsembleSpec, seed: int) -> EmitterEnsemble:
    """Sample an ensemble: positions in a sphere, rates, dipole orientations.

    Positions are uniform in a sphere of ``spec.radius_nm`` with pairwise
    rejection below ``spec.min_distance_nm``.  A single emitter is placed at
    the origin regardless of the radius.  Sampling is deterministic for a
    given (spec, seed).

    Raises
    ------
    PackingError
        If the rejection budget is exhausted before all emitters fit.  The
        message names the packing density that was requested.
    """
    rng = np.random.default_rng([seed, 0x0E75])
    n = spec.n
    if n == 1:
        positions = np.zeros((1, 3))
    else:
        positions = np.empty((n, 3))
        placed = 0
        attempts_left = spec.max_attempts_per_emitter * n
        while placed < n:
            if attempts_left <= 0:
                # Fraction of the host sphere occupied by exclusion spheres.
                density = (
                    n * (spec.min_distance_nm / 2.0) ** 3 / max(spec.radius_nm, 1e-300) ** 3
                )
                raise PackingError(
                    f"could not place {n} emitters with min distance "
                    f"{spec.min_distance_nm} nm in a sphere of radius "
                    f"{spec.radius_nm} nm (placed {placed}; requested packing "
                    f"density {density:.3g} of the volume)",
                    n_requested=n,
                    n_placed=placed,
                    density=density,
                )
            attempts_left -= 1
            direction = rng.normal(size=3)
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                continue
            radius = spec.radius_nm * rng.random() ** (1.0 / 3.0)
            candidate = direction / norm * radius
            if placed > 0 and spec.min_distance_nm > 0:
                d = np.linalg.norm(positions[:placed] - candidate, axis=1)
                if d.min() < spec.min_distance_nm:
                    continue
            positions[placed] = candidate
            placed += 1

    gamma_mean = 1.0 / spec.tau0_ns
    if spec.tau0_spread_rel == 0.0:
        gamma0 = np.full(n, gamma_mean)
    else:
        gamma0 = np.empty(n)
        for i in range(n):
            while True:
                g = rng.normal(gamma_mean, spec.tau0_spread_rel * gamma_mean)
                if g > 0.05 * gamma_mean:  # keep rates physical
                    gamma0[i] = g
                    break

    if isinstance(spec.dipole, str) and spec.dipole == "isotropic":
        dipoles = None
    elif isinstance(spec.dipole, str):  # "random"
        dipoles = rng.normal(size=(n, 3))
        dipoles /= np.linalg.norm(dipoles, axis=1)[:, None]
    else:
        v = np.asarray(spec.dipole, dtype=float)
        dipoles = np.tile(v / np.linalg.norm(v), (n, 1))

    return EmitterEnsemble(
        positions_nm=positions,
        gamma0=gamma0,
        wavelength_nm=spec.wavelength_nm,
        dipoles=dipoles,
    )


def coupling_free_space(ensemble: EmitterEnsemble) -> CouplingMatrix:
    """Dipole-dipole coupling of emitters in free space.

    With x = k r the normalized off-diagonal elements are, for
    orientation-averaged (isotropic) emitters,

        Gamma_ij / sqrt(g0_i g0_j) =  sin(x)/x
        J_ij     / sqrt(g0_i g0_j) = -cos(x)/x

    and for explicit dipole orientations, with a = d_i . d_j and
    b = (d_i . rhat)(d_j . rhat),

        Gamma_ij / sqrt(g0_i g0_j) =  (3/2) [ (a - b) sin(x)/x
                                    + (a - 3b)(cos(x)/x^2 - sin(x)/x^3) ]
        J_ij     / sqrt(g0_i g0_j) = -(3/4) [ (a - b) cos(x)/x
                                    - (a - 3b)(sin(x)/x^2 + cos(x)/x^3) ]

    which reduce to the textbook forms for identical orientations.  The
    diagonal is the intrinsic rates for Gamma and zero for J.
    """
    n = ensemble.n
    k = 2.0 * math.pi / ensemble.wavelength_nm
    gamma = np.diag(ensemble.gamma0).astype(float)
    jmat = np.zeros((n, n))
    if n == 1:
        return CouplingMatrix(gamma=gamma, j=jmat)

    pos = ensemble.positions_nm
    g0 = ensemble.gamma0
    for i in range(n):
        for jdx in range(i + 1, n):
            rvec = pos[i] - pos[jdx]
            r = np.linalg.norm(rvec)
            if r < 1e-9:
                raise ValueError(
                    f"emitters {i} and {jdx} coincide; separation must be > 0"
                )
            x = k * r
            sx, cx = math.sin(x), math.cos(x)
            if ensemble.dipoles is None:
                fg = sx / x
                fj = -cx / x
            else:
                rhat = rvec / r
                di, dj = ensemble.dipoles[i], ensemble.dipoles[jdx]
                a = float(di @ dj)
                b = float((di @ rhat) * (dj @ rhat))
                fg = 1.5 * ((a - b) * sx / x + (a - 3.0 * b) * (cx / x**2 - sx / x**3))
                fj = -0.75 * ((a - b) * cx / x - (a - 3.0 * b) * (sx / x**2 + cx / x**3))
            scale = math.sqrt(g0[i] * g0[jdx])
            gamma[i, jdx] = gamma[jdx, i] = scale * fg
            jmat[i, jdx] = jmat[jdx, i] = scale * fj

    return CouplingMatrix(gamma=gamma, j=jmat)


def coupling_uniform(n: int, gamma0: float, kappa: float) -> CouplingMatrix:
    """All-to-all coupling Gamma_ij = gamma0 (kappa + (1-kappa) delta_ij), J = 0.

    kappa = 0 gives independent emitters, kappa = 1 the ideal Dicke limit
    with a single bright mode at rate n*gamma0.  The mode spectrum is
    {gamma0 (1 + (n-1) kappa)} once and {gamma0 (1 - kappa)} (n-1)-fold.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if gamma0 <= 0:
        raise ValueError("gamma0 must be > 0")
    if not 0.0 <= kappa <= 1.0:
        raise ValueError(f"kappa must be in [0, 1], got {kappa}")
    gamma = np.full((n, n), gamma0 * kappa)
    np.fill_diagonal(gamma, gamma0)
    return CouplingMatrix(gamma=gamma, j=np.zeros((n, n)))


def collective_modes(coupling: CouplingMatrix) -> CollectiveModes:
    """Diagonalize Gamma into collective decay modes.

    Eigenvalues within the clamp tolerance below zero are set to exactly 0;
    modes are sorted by descending rate, exact ties broken by lexicographic
    order of the (sign-fixed) eigenvectors so the output is deterministic.
    """
    g = coupling.gamma
    n = coupling.n
    evals, evecs = np.linalg.eigh(g)
    tol = PSD_TOLERANCE_REL * coupling.gamma0_mean
    rates = evals.copy()
    rates[(rates < 0) & (rates >= -tol)] = 0.0
    if np.any(rates < 0):  # CouplingMatrix validation should prevent this
        raise ValueError("gamma has negative eigenvalues beyond clamp tolerance")

    vectors = evecs.T.copy()  # row nu = u^(nu)
    for idx in range(n):
        lead = np.argmax(np.abs(vectors[idx]) > 1e-12)
        if vectors[idx, lead] < 0:
            vectors[idx] = -vectors[idx]

    order = np.argsort(-rates, kind="stable")
    rates = rates[order]
    vectors = vectors[order]

    # Deterministic ordering inside degenerate groups.
    start = 0
    scale = max(rates[0], 1.0)
    while start < n:
        stop = start + 1
        while stop < n and abs(rates[stop] - rates[start]) <= 1e-12 * scale:
            stop += 1
        if stop - start > 1:
            block = vectors[start:stop]
            keys = np.flip(block.T, axis=0)  # lexsort: last key is primary
            sub = np.lexsort(keys)
            vectors[start:stop] = block[sub]
        start = stop

    modes = CollectiveModes(rates=rates, vectors=vectors)
    recon = modes.reconstruct()
    denom = max(np.linalg.norm(g), 1e-300)
    if np.linalg.norm(recon - g) / denom > 1e-9:
        raise ValueError("mode reconstruction failed beyond 1e-9 relative")
    return modes


def coupling_to_csv(coupling: CouplingMatrix, path) -> None:
    """Write Gamma then J row-major to CSV with a units header line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# coupling matrices, units: 1/ns\n")
        fh.write(f"# n = {coupling.n}\n")
        fh.write("# block: gamma\n")
        for row in coupling.gamma:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        fh.write("# block: j\n")
        for row in coupling.j:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def modes_to_csv(modes: CollectiveModes, path) -> None:
    """Write one line per mode: rate (1/ns) followed by the weight vector."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# collective modes; columns: rate_ns_inv, u_0 .. u_{n-1}\n")
        for rate, vec in zip(modes.rates, modes.vectors):
            fh.write(f"{rate:.17g}," + ",".join(f"{v:.17g}" for v in vec) + "\n")
