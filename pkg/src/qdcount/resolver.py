"""Emitter-number resolution from measured photon statistics.

The dominant-channel relation links the measured pair (g2(0), tau1) and the
single-emitter reference lifetime tau0 to the emitter number N through a
cubic polynomial.  This module inverts that relation with explicit root
bookkeeping, fits the N-lifetime scaling law tau1 = b + a/N, forward-maps
the scaling into g2(N), and rasterizes the (tau1, g2) -> N correspondence
into a surface map for visual assignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .photstat import G2Estimate, g2_dominant_channel

__all__ = [
    "NoPhysicalRootError",
    "RootInfo",
    "NEstimate",
    "LifetimeScalingFit",
    "SurfaceMap",
    "solve_n",
    "fit_lifetime_scaling",
    "g2_of_n",
    "generate_surface",
    "resolve_with_constraints",
    "classify_single_emitter",
]

# a root is rejected when the implied collective rate exceeds the ideal
# Dicke bound N*Gamma0 by more than this factor
_DICKE_SLACK = 1.5
_ROUND_THRESHOLD = 0.35
_RESIDUAL_TOL = 1e-10


class NoPhysicalRootError(RuntimeError):
    """The emitter-number cubic has no admissible root.

    Attributes
    ----------
    coefficients : tuple
        (c3, c2, c1, c0) of the cubic c3 N^3 + c2 N^2 + c1 N + c0.
    """

    def __init__(self, coefficients, message):
        super().__init__(message)
        self.coefficients = tuple(float(c) for c in coefficients)


@dataclass(frozen=True)
class RootInfo:
    """One root of the emitter-number cubic with its classification."""

    value: float
    classification: str

    def to_dict(self) -> dict:
        return {"value": self.value, "classification": self.classification}


@dataclass(frozen=True)
class NEstimate:
    """Resolved emitter number with full root bookkeeping.

    Attributes
    ----------
    n_real : float
        Selected real solution (>= 1).
    n_int : int
        Half-up rounding of ``n_real``, >= 1.
    roots : tuple of RootInfo
        Every cubic root with classification ``physical`` or
        ``rejected:<reason>``.
    status : str
        ``ok``, ``ambiguous`` (several physical roots, none selected by a
        constraint), or ``constrained`` (ambiguity broken by brightness).
    method : str
        ``cubic_inversion`` or ``surface``.
    constraint_used : float or None
        Brightness value that broke the ambiguity, if any.
    low_confidence : bool
        Selected root farther than the rounding threshold from n_int.
    single_emitter_shortcut : bool
        True when the g2 < 0.5 and tau1 ~ tau0 shortcut fixed n_int = 1.
    """

    n_real: float
    n_int: int
    roots: tuple
    status: str
    method: str
    constraint_used: float | None = None
    low_confidence: bool = False
    single_emitter_shortcut: bool = False

    def __post_init__(self):
        if self.n_int < 1:
            raise ValueError(f"n_int must be >= 1, got {self.n_int}")
        if self.status not in ("ok", "ambiguous", "constrained"):
            raise ValueError(f"unknown status {self.status!r}")

    @property
    def physical_roots(self) -> tuple:
        return tuple(r.value for r in self.roots if r.classification == "physical")

    def to_dict(self) -> dict:
        return {
            "n_real": self.n_real,
            "n_int": self.n_int,
            "roots": [r.to_dict() for r in self.roots],
            "status": self.status,
            "method": self.method,
            "constraint_used": self.constraint_used,
            "low_confidence": self.low_confidence,
            "single_emitter_shortcut": self.single_emitter_shortcut,
        }


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _cubic_val(c, x):
    return ((c[0] * x + c[1]) * x + c[2]) * x + c[3]


def _polish_root(c, x):
    for _ in range(60):
        f = _cubic_val(c, x)
        fp = (3.0 * c[0] * x + 2.0 * c[1]) * x + c[2]
        if fp == 0.0:
            break
        step = f / fp
        x -= step
        if abs(step) < 1e-14 * max(1.0, abs(x)):
            break
    return x


def _residual_scale(c, x):
    return max(1.0, abs(c[0] * x**3), x * x, abs(c[2] * x), abs(c[3]))


def solve_n(
    g2: float, tau1_ns: float, tau0_mean_ns: float, round_threshold: float = _ROUND_THRESHOLD
) -> NEstimate:
    """Invert the dominant-channel g2 relation for the emitter number.

    With r = tau0_mean / tau1 (the collective rate in units of the mean
    single-emitter rate), solves

        (g2 - 1) N^3 + N^2 - r^2 N + r^2 = 0

    for real N >= 1.  Every root is reported with a classification; roots
    below 1 or complex are rejected, as are roots whose implied collective
    rate exceeds the ideal Dicke bound N*Gamma0 by more than 50% (except
    near-1 roots of a clearly antibunched input, where the excess indicates
    a reference-lifetime mismatch rather than extra emitters).

    When several physical roots remain the estimate is ``ambiguous``; the
    reported solution is then the root closest to the integer lattice,
    since the underlying emitter number is an integer (ties break toward
    the smaller root).  A measured g2 < 0.5 with tau1 within 25% of tau0
    short-circuits to n_int = 1.

    Parameters
    ----------
    g2 : float
        Zero-delay correlation, in [0, 2).
    tau1_ns : float
        Fitted collective lifetime.
    tau0_mean_ns : float
        Mean single-emitter reference lifetime.
    round_threshold : float, optional
        Distance from the nearest integer beyond which the result is
        flagged low-confidence.

    Raises
    ------
    NoPhysicalRootError
        If every root is rejected; carries the cubic coefficients.
    """
    if not (0.0 <= g2 < 2.0):
        raise ValueError(f"g2 must lie in [0, 2), got {g2}")
    if not (tau1_ns > 0 and tau0_mean_ns > 0):
        raise ValueError("lifetimes must be positive")
    r = tau0_mean_ns / tau1_ns
    c = (g2 - 1.0, 1.0, -r * r, r * r)

    raw = np.roots(c)
    infos = []
    physical = []
    for z in raw:
        x = float(z.real)
        # a double root (g2 at the fold, e.g. exactly 1) comes out of the
        # companion eigensolve with imaginary leakage of order sqrt(eps);
        # the residual check below still rejects genuine complex pairs
        if abs(z.imag) > 1e-6 * max(1.0, abs(z)):
            infos.append(RootInfo(x, "rejected:complex"))
            continue
        x = _polish_root(c, x)
        if abs(_cubic_val(c, x)) / _residual_scale(c, x) > _RESIDUAL_TOL:
            infos.append(RootInfo(x, "rejected:unconverged"))
            continue
        if x < 1.0 - 1e-9:
            infos.append(RootInfo(x, "rejected:below_one"))
            continue
        near_single = g2 < 0.5 and _round_half_up(x) == 1
        if r > _DICKE_SLACK * x * (1.0 + 1e-9) and not near_single:
            infos.append(RootInfo(x, "rejected:exceeds_dicke_bound"))
            continue
        infos.append(RootInfo(x, "physical"))
        physical.append(x)

    physical.sort()
    distinct = []
    for x in physical:
        if not distinct or x - distinct[-1] > 1e-6 * max(1.0, x):
            distinct.append(x)

    if not distinct:
        raise NoPhysicalRootError(
            c,
            f"no physical emitter number for g2={g2:g}, "
            f"tau1={tau1_ns:g} ns, tau0={tau0_mean_ns:g} ns "
            f"(r={r:g}); root classifications: "
            + ", ".join(f"{i.value:.4g}:{i.classification}" for i in infos),
        )

    shortcut = g2 < 0.5 and abs(tau1_ns - tau0_mean_ns) <= 0.25 * tau0_mean_ns
    if len(distinct) == 1:
        selected = distinct[0]
        status = "ok"
    else:
        selected = min(distinct, key=lambda x: (abs(x - _round_half_up(x)), x))
        status = "ambiguous"
    if shortcut:
        near_one = [x for x in distinct if _round_half_up(x) == 1]
        selected = near_one[0] if near_one else 1.0
        status = "ok"

    n_int = max(_round_half_up(selected), 1)
    return NEstimate(
        n_real=selected,
        n_int=n_int,
        roots=tuple(infos),
        status=status,
        method="cubic_inversion",
        low_confidence=abs(selected - n_int) > round_threshold,
        single_emitter_shortcut=shortcut,
    )


def resolve_with_constraints(
    g2: float,
    tau1_ns: float,
    tau0_mean_ns: float,
    brightness: float | None = None,
    power_law_exponent: float | None = None,
    round_threshold: float = _ROUND_THRESHOLD,
) -> NEstimate:
    """solve_n plus brightness disambiguation.

    An ambiguous inversion with a supplied brightness (peak intensity
    relative to a single-emitter reference) selects the physical root whose
    N best matches ``brightness ~ N^p``; p defaults to 1, the conservative
    weak-coupling scaling, unless a fitted power-law exponent is given.
    """
    est = solve_n(g2, tau1_ns, tau0_mean_ns, round_threshold)
    if est.status != "ambiguous" or brightness is None:
        return est
    if brightness <= 0:
        raise ValueError(f"brightness must be positive, got {brightness}")
    p = 1.0 if power_law_exponent is None else float(power_law_exponent)
    if p <= 0:
        raise ValueError(f"power-law exponent must be positive, got {p}")
    target = math.log(brightness) / p
    selected = min(est.physical_roots, key=lambda x: abs(target - math.log(x)))
    n_int = max(_round_half_up(selected), 1)
    return NEstimate(
        n_real=selected,
        n_int=n_int,
        roots=est.roots,
        status="constrained",
        method=est.method,
        constraint_used=float(brightness),
        low_confidence=abs(selected - n_int) > round_threshold,
        single_emitter_shortcut=False,
    )


def classify_single_emitter(estimate: G2Estimate) -> bool:
    """Single-photon-emitter test: value + std_error < 0.5.

    The error bar must clear the threshold too, so a borderline estimate
    with a large uncertainty does not certify a single emitter.
    """
    return estimate.value + estimate.std_error < 0.5


# ---------------------------------------------------------------------------
# lifetime scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LifetimeScalingFit:
    """Least-squares fit of tau1 = b + a/N.

    Attributes
    ----------
    a_ns : float
        Slope against 1/N, > 0.
    b_ns : float
        Lifetime floor, >= 0 (negative fits are clamped and flagged).
    covariance : numpy.ndarray
        2x2 covariance of (a, b); the b row/column is zero when clamped.
    goodness : float
        Residual variance (ns^2 per degree of freedom).
    intercept_clamped : bool
    """

    a_ns: float
    b_ns: float
    covariance: np.ndarray
    goodness: float
    intercept_clamped: bool = False

    def __post_init__(self):
        if not self.a_ns > 0:
            raise ValueError(f"slope a must be positive, got {self.a_ns}")
        if self.b_ns < 0:
            raise ValueError(f"floor b must be >= 0, got {self.b_ns}")
        cov = np.asarray(self.covariance, dtype=np.float64)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    def predict(self, n) -> float | np.ndarray:
        """tau1 at emitter number n."""
        return self.b_ns + self.a_ns / np.asarray(n, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "a_ns": self.a_ns,
            "b_ns": self.b_ns,
            "covariance": self.covariance.tolist(),
            "goodness": self.goodness,
            "intercept_clamped": self.intercept_clamped,
        }


def fit_lifetime_scaling(points) -> LifetimeScalingFit:
    """Ordinary least squares of tau1 against 1/N.

    Parameters
    ----------
    points : array_like
        Rows of (N, tau1_ns); at least 3 distinct N.  A negative fitted
        floor is clamped to zero and the slope refitted through the origin.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be rows of (N, tau1_ns)")
    if np.unique(pts[:, 0]).size < 3:
        raise ValueError("need at least 3 distinct N values")
    if pts[:, 0].min() < 1 or pts[:, 1].min() <= 0:
        raise ValueError("N must be >= 1 and lifetimes positive")
    x = 1.0 / pts[:, 0]
    y = pts[:, 1]
    n = x.size
    design = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    a, b = float(coef[0]), float(coef[1])
    clamped = False
    if b < 0:
        clamped = True
        b = 0.0
        a = float(np.dot(x, y) / np.dot(x, x))
        resid = y - a * x
        dof = max(n - 1, 1)
        s2 = float(np.dot(resid, resid)) / dof
        var_a = s2 / float(np.dot(x, x))
        cov = np.array([[var_a, 0.0], [0.0, 0.0]])
    else:
        resid = y - design @ coef
        dof = max(n - 2, 1)
        s2 = float(np.dot(resid, resid)) / dof
        cov = s2 * np.linalg.inv(design.T @ design)
    if a <= 0:
        raise ValueError(
            f"fitted slope a={a:g} ns is not positive; data do not follow "
            "a collective tau1 = b + a/N trend"
        )
    return LifetimeScalingFit(
        a_ns=a, b_ns=b, covariance=cov, goodness=s2, intercept_clamped=clamped
    )


def g2_of_n(
    n: int,
    fit: LifetimeScalingFit,
    tau0_mean_ns: float,
    min_tau1_ns: float | None = None,
) -> float:
    """Forward g2(0) of n emitters under a fitted lifetime scaling.

    g2 = 1 - 1/n + (n-1) tau0^2 / (n (a + b n)^2), i.e. the
    dominant-channel value with Gamma_c = 1 / (b + a/n).

    Parameters
    ----------
    n : int
    fit : LifetimeScalingFit
    tau0_mean_ns : float
    min_tau1_ns : float, optional
        Refuse n whose predicted tau1 falls below this resolution floor
        (e.g. one histogram bin); the curve is truncated there.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not tau0_mean_ns > 0:
        raise ValueError("tau0_mean_ns must be positive")
    tau1 = float(fit.predict(n))
    if min_tau1_ns is not None and tau1 < min_tau1_ns:
        raise ValueError(
            f"predicted tau1 {tau1:g} ns at n={n} is below the resolution "
            f"floor {min_tau1_ns:g} ns; the scaling curve is truncated here"
        )
    denom = fit.a_ns + fit.b_ns * n
    return 1.0 - 1.0 / n + (n - 1) * tau0_mean_ns**2 / (n * denom * denom)


# ---------------------------------------------------------------------------
# surface map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurfaceMap:
    """Rasterized (tau1, g2) -> admissible emitter numbers.

    ``membership[i, j, k]`` is True when N = k + 2 forward-evaluates,
    at tau1_grid_ns[i], to a g2 within ``band_tolerance`` of g2_grid[j].

    Attributes
    ----------
    tau1_grid_ns : numpy.ndarray
    g2_grid : numpy.ndarray
    membership : numpy.ndarray
        Boolean, shape (len(tau1_grid), len(g2_grid), n_max - 1).
    tau0_mean_ns : float
    band_tolerance : float
    n_max : int
    """

    tau1_grid_ns: np.ndarray
    g2_grid: np.ndarray
    membership: np.ndarray
    tau0_mean_ns: float
    band_tolerance: float
    n_max: int

    def __post_init__(self):
        for name in ("tau1_grid_ns", "g2_grid", "membership"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.n_max < 2:
            raise ValueError(f"n_max must be >= 2, got {self.n_max}")
        expect = (self.tau1_grid_ns.size, self.g2_grid.size, self.n_max - 1)
        if self.membership.shape != expect:
            raise ValueError(
                f"membership shape {self.membership.shape} != {expect}"
            )

    def admissible(self, i: int, j: int) -> tuple:
        """Emitter numbers admissible in grid cell (i, j)."""
        return tuple(int(k + 2) for k in np.flatnonzero(self.membership[i, j]))

    def lookup(self, tau1_ns: float, g2: float) -> tuple:
        """Admissible N at the grid cell nearest to (tau1_ns, g2)."""
        i = int(np.abs(self.tau1_grid_ns - tau1_ns).argmin())
        j = int(np.abs(self.g2_grid - g2).argmin())
        return self.admissible(i, j)

    @property
    def multi_root_cells(self) -> np.ndarray:
        """Boolean mask of cells where bands of different N overlap."""
        return self.membership.sum(axis=2) >= 2

    def to_csv(self, path):
        """Long-format export: tau1_ns, g2, n, flag per admissible triple."""
        meta = {
            "kind": "surface",
            "tau0_mean_ns": self.tau0_mean_ns,
            "band_tolerance": self.band_tolerance,
            "n_max": self.n_max,
        }
        multi = self.multi_root_cells
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            fh.write("tau1_ns,g2,n,flag\n")
            for i, tau in enumerate(self.tau1_grid_ns):
                for j, g in enumerate(self.g2_grid):
                    ns = self.admissible(i, j)
                    if not ns:
                        continue
                    flag = "multi" if multi[i, j] else "single"
                    for n in ns:
                        fh.write(f"{tau:.17g},{g:.17g},{n},{flag}\n")

    def to_dict(self) -> dict:
        return {
            "tau1_grid_ns": self.tau1_grid_ns.tolist(),
            "g2_grid": self.g2_grid.tolist(),
            "tau0_mean_ns": self.tau0_mean_ns,
            "band_tolerance": self.band_tolerance,
            "n_max": self.n_max,
            "membership": self.membership.astype(int).tolist(),
        }


def generate_surface(
    fit_or_range,
    tau0_mean_ns: float,
    n_max: int = 10,
    n_tau1: int = 61,
    n_g2: int = 81,
    g2_range=(0.0, 2.0),
    band_tolerance: float | None = None,
) -> SurfaceMap:
    """Forward-map every integer N onto the (tau1, g2) plane.

    Parameters
    ----------
    fit_or_range : LifetimeScalingFit or (lo, hi)
        Either a lifetime-scaling fit (the tau1 axis then spans
        0.8 x tau1(n_max) to 1.2 x tau1(1)) or an explicit tau1 range
        in ns.
    tau0_mean_ns : float
    n_max : int
        Largest emitter number mapped; bands cover N in [2, n_max].
    n_tau1, n_g2 : int
        Grid resolution.
    g2_range : tuple
    band_tolerance : float, optional
        Half-width of each N band in g2; defaults to half the g2 grid
        step, so every forward-evaluated triple lies in its own cell.
    """
    if n_max < 2:
        raise ValueError(f"n_max must be >= 2, got {n_max}")
    if not tau0_mean_ns > 0:
        raise ValueError("tau0_mean_ns must be positive")
    if isinstance(fit_or_range, LifetimeScalingFit):
        lo = 0.8 * float(fit_or_range.predict(n_max))
        hi = 1.2 * float(fit_or_range.predict(1))
    else:
        lo, hi = (float(v) for v in fit_or_range)
    if not (0 < lo < hi):
        raise ValueError(f"invalid tau1 range ({lo}, {hi})")
    tau_grid = np.linspace(lo, hi, int(n_tau1))
    g2_grid = np.linspace(float(g2_range[0]), float(g2_range[1]), int(n_g2))
    if band_tolerance is None:
        band_tolerance = 0.5 * (g2_grid[1] - g2_grid[0]) if g2_grid.size > 1 else 0.05

    membership = np.zeros((tau_grid.size, g2_grid.size, n_max - 1), dtype=bool)
    gamma0 = 1.0 / tau0_mean_ns
    for i, tau in enumerate(tau_grid):
        gamma_c = 1.0 / tau
        for k in range(n_max - 1):
            val = g2_dominant_channel(k + 2, gamma_c, gamma0).value
            membership[i, :, k] = np.abs(g2_grid - val) <= band_tolerance
    return SurfaceMap(
        tau1_grid_ns=tau_grid,
        g2_grid=g2_grid,
        membership=membership,
        tau0_mean_ns=float(tau0_mean_ns),
        band_tolerance=float(band_tolerance),
        n_max=int(n_max),
    )
