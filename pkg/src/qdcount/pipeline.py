"""Config-driven end-to-end runs: simulate, detect, analyze, resolve, report.

The experiment configuration is a single JSON document with unit-suffixed
keys; unknown keys are rejected anywhere in the tree.  A run processes a
batch of nanoparticle records through the full chain

    simulate -> detector chain -> histograms -> decay fit -> g2 estimates
             -> emitter-number resolution

and emits a :class:`RunReport` that is reproducible byte-for-byte given the
same config and seed (only the creation timestamp and wall clock vary, and
both are excluded from the report hash).
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ._version import __version__
from .detection import (
    DetectorConfig,
    apply_detector_chain,
    build_coincidence_histogram,
    build_decay_histogram,
)
from .dynamics import (
    MAX_TRAJECTORY_EMITTERS,
    ExcitationModel,
    simulate_pulsed_experiment,
)
from .ensemble import (
    EnsembleSpec,
    PackingError,
    build_ensemble,
    collective_modes,
    coupling_free_space,
    coupling_uniform,
)
from .photstat import (
    FitConvergenceError,
    InsufficientPairsError,
    estimate_g2_area_ratio,
    estimate_g2_instantaneous,
    fit_decay,
    fit_power_law,
    peak_intensity,
)
from .resolver import (
    NoPhysicalRootError,
    classify_single_emitter,
    fit_lifetime_scaling,
    resolve_with_constraints,
    solve_n,
)
from .streams import write_stream

__all__ = [
    "ConfigError",
    "NanoparticleConfig",
    "AnalysisConfig",
    "ExperimentConfig",
    "RunReport",
    "run_pipeline",
]

_SCHEMA_VERSION = 1
# decorrelates consecutive record seeds (64-bit golden-ratio step)
_SEED_STRIDE = 0x9E3779B97F4A7C15
_LABEL_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,63}")

_ESTIMATORS = ("area_ratio", "instantaneous")
_DECAY_MODELS = ("mono", "biexp")
# "first_photon" keeps only each pulse's earliest photon for the lifetime
# histogram (start-stop TCSPC); peak intensity still uses the full stream.
_DECAY_MODES = ("all", "first_photon")


class ConfigError(ValueError):
    """Experiment configuration violates the schema."""


def _check_keys(d: dict, allowed, path: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{path} must be a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {path}")


def _get(d: dict, key: str, path: str):
    if key not in d:
        raise ConfigError(f"missing required key {key!r} in {path}")
    return d[key]


@dataclass(frozen=True)
class NanoparticleConfig:
    """One simulated nanoparticle: emitter count plus a coupling recipe.

    ``coupling`` selects between ``uniform`` (all-to-all Gamma_ij =
    kappa * gamma0, no coherent shifts) and ``free_space`` (positions
    sampled in a sphere, dipole-dipole coupling from the free-space field).
    Geometry keys are only legal under ``free_space`` and ``kappa`` only
    under ``uniform``; mixing them is a config error.

    ``tau0_ns`` is the intrinsic single-emitter lifetime of the species.
    ``tau0_ref_ns`` optionally pins the reference lifetime used when
    resolving this record's emitter number; it defaults to the analysis
    reference (explicit or derived from single-emitter records).
    """

    label: str
    n_emitters: int
    coupling: str
    tau0_ns: float = 48.95
    tau0_ref_ns: float | None = None
    kappa: float = 0.0
    radius_nm: float = 50.0
    min_distance_nm: float = 0.0
    wavelength_nm: float = 620.0
    tau0_spread_rel: float = 0.0
    dipole: str = "isotropic"

    def __post_init__(self):
        if not _LABEL_RE.fullmatch(self.label):
            raise ConfigError(f"invalid record label {self.label!r}")
        if not 1 <= self.n_emitters <= MAX_TRAJECTORY_EMITTERS:
            raise ConfigError(
                f"n_emitters must be in [1, {MAX_TRAJECTORY_EMITTERS}], "
                f"got {self.n_emitters}"
            )
        if self.coupling not in ("uniform", "free_space"):
            raise ConfigError(f"unknown coupling mode {self.coupling!r}")
        if self.tau0_ns <= 0:
            raise ConfigError("tau0_ns must be positive")
        if self.tau0_ref_ns is not None and self.tau0_ref_ns <= 0:
            raise ConfigError("tau0_ref_ns must be positive")
        if self.coupling == "uniform" and self.tau0_spread_rel != 0.0:
            raise ConfigError("tau0_spread_rel requires free_space coupling")

    _COMMON = ("label", "n_emitters", "coupling", "tau0_ns", "tau0_ref_ns")
    _UNIFORM = _COMMON + ("kappa",)
    _FREE = _COMMON + (
        "radius_nm",
        "min_distance_nm",
        "wavelength_nm",
        "tau0_spread_rel",
        "dipole",
    )

    @classmethod
    def from_dict(cls, d: dict, index: int) -> "NanoparticleConfig":
        path = f"nanoparticles[{index}]"
        if not isinstance(d, dict):
            raise ConfigError(f"{path} must be a JSON object")
        mode = _get(d, "coupling", path)
        if mode == "uniform":
            _check_keys(d, cls._UNIFORM, path)
        elif mode == "free_space":
            _check_keys(d, cls._FREE, path)
        else:
            raise ConfigError(f"unknown coupling mode {mode!r} in {path}")
        d = dict(d)
        d.setdefault("label", f"np{index:02d}")
        d["n_emitters"] = _get(d, "n_emitters", path)
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        out = {
            "label": self.label,
            "n_emitters": self.n_emitters,
            "coupling": self.coupling,
            "tau0_ns": self.tau0_ns,
            "tau0_ref_ns": self.tau0_ref_ns,
        }
        if self.coupling == "uniform":
            out["kappa"] = self.kappa
        else:
            out.update(
                radius_nm=self.radius_nm,
                min_distance_nm=self.min_distance_nm,
                wavelength_nm=self.wavelength_nm,
                tau0_spread_rel=self.tau0_spread_rel,
                dipole=self.dipole,
            )
        return out


@dataclass(frozen=True)
class AnalysisConfig:
    """Histogramming, estimator, and resolution knobs shared by a batch.

    ``tau0_mean_ns`` is the reference single-emitter lifetime for the
    resolver; when absent it is derived as the mean fitted lifetime of the
    batch's records that classify as single emitters, mirroring the usual
    workflow of calibrating the reference on identified singles.
    """

    decay_bin_width_ps: int = 100
    coincidence_bin_width_ps: int = 500
    coincidence_k_periods: int = 5
    estimator: str = "instantaneous"
    g2_window_ps: float | None = None
    peak_window_ps: float | None = None
    decay_model: str = "biexp"
    decay_mode: str = "all"
    tau0_mean_ns: float | None = None

    def __post_init__(self):
        if self.decay_bin_width_ps < 1 or self.coincidence_bin_width_ps < 1:
            raise ConfigError("bin widths must be >= 1 ps")
        if self.coincidence_k_periods < 3:
            raise ConfigError("coincidence_k_periods must be >= 3")
        if self.estimator not in _ESTIMATORS:
            raise ConfigError(
                f"estimator must be one of {_ESTIMATORS}, got {self.estimator!r}"
            )
        if self.decay_model not in _DECAY_MODELS:
            raise ConfigError(
                f"decay_model must be one of {_DECAY_MODELS}, got {self.decay_model!r}"
            )
        if self.decay_mode not in _DECAY_MODES:
            raise ConfigError(
                f"decay_mode must be one of {_DECAY_MODES}, got {self.decay_mode!r}"
            )
        for name in ("g2_window_ps", "peak_window_ps", "tau0_mean_ns"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive when given")

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        _check_keys(
            d,
            (
                "decay_bin_width_ps",
                "coincidence_bin_width_ps",
                "coincidence_k_periods",
                "estimator",
                "g2_window_ps",
                "peak_window_ps",
                "decay_model",
                "decay_mode",
                "tau0_mean_ns",
            ),
            "analysis",
        )
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "decay_bin_width_ps": self.decay_bin_width_ps,
            "coincidence_bin_width_ps": self.coincidence_bin_width_ps,
            "coincidence_k_periods": self.coincidence_k_periods,
            "estimator": self.estimator,
            "g2_window_ps": self.g2_window_ps,
            "peak_window_ps": self.peak_window_ps,
            "decay_model": self.decay_model,
            "decay_mode": self.decay_mode,
            "tau0_mean_ns": self.tau0_mean_ns,
        }


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _jsonify(x):
    """Recursively convert numpy scalars/arrays so json.dumps accepts them."""
    if isinstance(x, dict):
        return {k: _jsonify(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonify(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return _jsonify(x.tolist())
    return x


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated batch configuration (one JSON document).

    Top-level keys: ``schema_version`` (optional, must be 1), ``seed``,
    ``nanoparticles`` (non-empty list), ``excitation``, and optional
    ``detector``, ``analysis``, ``output_dir``.  Every physical quantity
    carries its unit in the key name.
    """

    seed: int
    nanoparticles: tuple
    excitation: ExcitationModel
    detector: DetectorConfig
    analysis: AnalysisConfig
    output_dir: str | None = None

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not self.nanoparticles:
            raise ConfigError("nanoparticles must be a non-empty list")
        labels = [p.label for p in self.nanoparticles]
        if len(set(labels)) != len(labels):
            raise ConfigError("record labels must be unique")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _check_keys(
            d,
            (
                "schema_version",
                "seed",
                "nanoparticles",
                "excitation",
                "detector",
                "analysis",
                "output_dir",
            ),
            "config",
        )
        version = d.get("schema_version", _SCHEMA_VERSION)
        if version != _SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r}")
        seed = _get(d, "seed", "config")
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed must be an integer")

        exc_d = _get(d, "excitation", "config")
        _check_keys(exc_d, ("period_ns", "p_excite", "n_pulses"), "excitation")
        try:
            excitation = ExcitationModel(**exc_d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"excitation: {exc}") from exc

        det_d = d.get("detector", {})
        _check_keys(
            det_d,
            (
                "efficiency",
                "dead_time_ns",
                "jitter_sigma_ps",
                "dark_rate_cps",
                "splitter_ratio",
            ),
            "detector",
        )
        try:
            detector = DetectorConfig(**det_d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"detector: {exc}") from exc

        analysis = AnalysisConfig.from_dict(d.get("analysis", {}))

        nps_d = _get(d, "nanoparticles", "config")
        if not isinstance(nps_d, list) or not nps_d:
            raise ConfigError("nanoparticles must be a non-empty list")
        nps = tuple(
            NanoparticleConfig.from_dict(p, i) for i, p in enumerate(nps_d)
        )

        out_dir = d.get("output_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("output_dir must be a string path")
        return cls(
            seed=seed,
            nanoparticles=nps,
            excitation=excitation,
            detector=detector,
            analysis=analysis,
            output_dir=out_dir,
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        exc = self.excitation
        det = self.detector
        return {
            "schema_version": _SCHEMA_VERSION,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "excitation": {
                "period_ns": exc.period_ns,
                "p_excite": exc.p_excite,
                "n_pulses": exc.n_pulses,
            },
            "detector": {
                "efficiency": det.efficiency,
                "dead_time_ns": det.dead_time_ns,
                "jitter_sigma_ps": det.jitter_sigma_ps,
                "dark_rate_cps": det.dark_rate_cps,
                "splitter_ratio": det.splitter_ratio,
            },
            "analysis": self.analysis.to_dict(),
            "nanoparticles": [p.to_dict() for p in self.nanoparticles],
        }

    @property
    def config_hash(self) -> str:
        """sha256 of the canonical (defaults-filled) JSON form."""
        return hashlib.sha256(
            _canonical_json(_jsonify(self.to_dict())).encode()
        ).hexdigest()[:16]

    def record_seed(self, index: int) -> int:
        """Deterministic per-record master seed."""
        return (self.seed + index * _SEED_STRIDE) % (1 << 63)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _report_hash(d: dict) -> str:
    core = {
        k: v
        for k, v in d.items()
        if k not in ("created_at", "wall_clock_s", "report_hash")
    }
    return hashlib.sha256(_canonical_json(core).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunReport:
    """End-to-end batch results.

    ``report_hash`` covers everything except ``created_at`` and
    ``wall_clock_s``, so two runs of the same config + seed produce the
    same hash (and byte-identical content apart from those two fields).
    """

    schema_version: int
    toolkit_version: str
    created_at: str
    wall_clock_s: float
    config: dict
    config_hash: str
    reference: dict
    records: tuple
    batch: dict
    report_hash: str

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "toolkit_version": self.toolkit_version,
            "created_at": self.created_at,
            "wall_clock_s": self.wall_clock_s,
            "config": self.config,
            "config_hash": self.config_hash,
            "reference": self.reference,
            "records": list(self.records),
            "batch": self.batch,
            "report_hash": self.report_hash,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "RunReport":
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        d["records"] = tuple(d["records"])
        return cls(**d)

    def record(self, label: str) -> dict:
        for rec in self.records:
            if rec["label"] == label:
                return rec
        raise KeyError(f"no record labeled {label!r}")


def _build_coupling(cfg: NanoparticleConfig, seed: int):
    if cfg.coupling == "uniform":
        coupling = coupling_uniform(cfg.n_emitters, 1.0 / cfg.tau0_ns, cfg.kappa)
    else:
        spec = EnsembleSpec(
            n=cfg.n_emitters,
            radius_nm=cfg.radius_nm,
            min_distance_nm=cfg.min_distance_nm,
            wavelength_nm=cfg.wavelength_nm,
            tau0_ns=cfg.tau0_ns,
            tau0_spread_rel=cfg.tau0_spread_rel,
            dipole=cfg.dipole,
        )
        coupling = coupling_free_space(build_ensemble(spec, seed))
    return coupling, collective_modes(coupling)


def _mean_or_none(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def run_pipeline(config: ExperimentConfig, out_dir=None) -> RunReport:
    """Process every configured nanoparticle and assemble the run report.

    Per record: simulate the pulsed experiment, apply the detector chain,
    build decay and coincidence histograms, fit the decay, estimate g2 with
    both estimators, and measure the peak intensity.  The batch then fixes
    the resolution references (reference lifetime and single-emitter peak
    intensity), resolves every record, fits the batch lifetime-scaling and
    brightness power laws, and finally re-resolves ambiguous records with
    the brightness constraint.

    Record-level failures (packing, non-converging fits, too few pairs, no
    physical root) are recorded in the report's ``notes`` instead of
    aborting the batch; genuine bugs still propagate.

    Parameters
    ----------
    config : ExperimentConfig
    out_dir : path-like, optional
        When given, intermediate files (streams, histograms) and
        ``report.json`` are written there; defaults to ``config.output_dir``
        (no files at all when both are None).

    Returns
    -------
    RunReport
    """
    t_start = time.monotonic()
    an = config.analysis
    if out_dir is None:
        out_dir = config.output_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    work = []
    for idx, np_cfg in enumerate(config.nanoparticles):
        seed_i = config.record_seed(idx)
        rec = {
            "label": np_cfg.label,
            "n_configured": np_cfg.n_emitters,
            "seed": seed_i,
            "config_hash": None,
            "n_photons_detected": None,
            "decay_fit": None,
            "tau1_ns": None,
            "g2": {},
            "i_max": None,
            "brightness_rel": None,
            "single_emitter": None,
            "n_estimate": None,
            "files": {},
            "notes": [],
        }
        chosen = None
        try:
            coupling, modes = _build_coupling(np_cfg, seed_i)
        except PackingError as exc:
            rec["notes"].append(f"geometry: {exc}")
            work.append((rec, np_cfg, None))
            continue

        raw = simulate_pulsed_experiment(coupling, modes, config.excitation, seed_i)
        detected = apply_detector_chain(raw, config.detector, seed_i)
        rec["config_hash"] = raw.meta["config_hash"]
        rec["n_photons_detected"] = len(detected)

        decay = build_decay_histogram(detected, an.decay_bin_width_ps)
        if an.decay_mode == "first_photon":
            decay_fit_h = build_decay_histogram(
                detected, an.decay_bin_width_ps, first_photon_only=True
            )
        else:
            decay_fit_h = decay
        coinc = build_coincidence_histogram(
            detected, an.coincidence_bin_width_ps, an.coincidence_k_periods
        )

        if out_dir is not None:
            names = {
                "raw_stream": f"{np_cfg.label}.raw.csv",
                "detected_stream": f"{np_cfg.label}.detected.csv",
                "decay_histogram": f"{np_cfg.label}.decay.csv",
                "coincidence_histogram": f"{np_cfg.label}.coincidence.csv",
            }
            write_stream(raw, out_dir / names["raw_stream"])
            write_stream(detected, out_dir / names["detected_stream"])
            decay.to_csv(out_dir / names["decay_histogram"])
            coinc.to_csv(out_dir / names["coincidence_histogram"])
            if decay_fit_h is not decay:
                names["decay_fit_histogram"] = f"{np_cfg.label}.decay_first.csv"
                decay_fit_h.to_csv(out_dir / names["decay_fit_histogram"])
            rec["files"] = names

        try:
            fit = fit_decay(decay_fit_h, model=an.decay_model)
            rec["decay_fit"] = fit.to_dict()
            rec["tau1_ns"] = float(fit.tau1_ns)
        except (FitConvergenceError, ValueError) as exc:
            rec["notes"].append(f"decay fit: {exc}")

        for name in _ESTIMATORS:
            try:
                if name == "area_ratio":
                    est = estimate_g2_area_ratio(coinc, an.peak_window_ps)
                else:
                    est = estimate_g2_instantaneous(detected, decay, an.g2_window_ps)
                rec["g2"][name] = est.to_dict()
                if name == an.estimator:
                    chosen = est
            except (InsufficientPairsError, ValueError, ZeroDivisionError) as exc:
                rec["g2"][name] = {"error": str(exc)}
                if name == an.estimator:
                    rec["notes"].append(f"g2 ({name}): {exc}")

        try:
            peak = peak_intensity(decay)
            rec["i_max"] = {
                "counts": peak.value,
                "per_pulse": peak.value / config.excitation.n_pulses,
                "time_ns": peak.time_ns,
            }
        except ValueError as exc:
            rec["notes"].append(f"peak intensity: {exc}")

        if chosen is not None:
            rec["single_emitter"] = classify_single_emitter(chosen)
        work.append((rec, np_cfg, chosen))

    # batch references: explicit analysis value wins, else calibrate on the
    # records that classify as single emitters
    derived_tau0 = _mean_or_none(
        rec["tau1_ns"] for rec, _, _ in work if rec["single_emitter"]
    )
    ref_imax = _mean_or_none(
        rec["i_max"]["per_pulse"]
        for rec, _, _ in work
        if rec["single_emitter"] and rec["i_max"] is not None
    )
    if an.tau0_mean_ns is not None:
        tau0_source = "analysis"
    elif derived_tau0 is not None:
        tau0_source = "derived_from_singles"
    else:
        tau0_source = "none"
    reference = {
        "tau0_mean_ns": an.tau0_mean_ns if an.tau0_mean_ns is not None else derived_tau0,
        "i_max_single_per_pulse": ref_imax,
        "tau0_source": tau0_source,
    }

    def _tau0_for(np_cfg: NanoparticleConfig):
        if np_cfg.tau0_ref_ns is not None:
            return np_cfg.tau0_ref_ns
        return reference["tau0_mean_ns"]

    # first resolution pass, unconstrained
    for rec, np_cfg, chosen in work:
        tau0_ref = _tau0_for(np_cfg)
        if chosen is None or rec["tau1_ns"] is None:
            continue
        if tau0_ref is None:
            rec["notes"].append(
                "resolution skipped: no reference lifetime (set analysis.tau0_mean_ns "
                "or tau0_ref_ns, or include a single-emitter record)"
            )
            continue
        if rec["i_max"] is not None and ref_imax:
            rec["brightness_rel"] = rec["i_max"]["per_pulse"] / ref_imax
        try:
            rec["n_estimate"] = solve_n(chosen.value, rec["tau1_ns"], tau0_ref).to_dict()
        except NoPhysicalRootError as exc:
            rec["notes"].append(f"resolution: {exc}")

    def _scaling_points(statuses):
        pts_tau, pts_imax = [], []
        for rec, _, _ in work:
            est = rec["n_estimate"]
            if est is None or est["status"] not in statuses:
                continue
            if rec["tau1_ns"] is not None:
                pts_tau.append((est["n_int"], rec["tau1_ns"]))
            if rec["i_max"] is not None:
                pts_imax.append((est["n_int"], rec["i_max"]["per_pulse"]))
        return pts_tau, pts_imax

    def _fit_batch(pts_tau, pts_imax):
        out = {"lifetime_scaling": None, "power_law": None}
        if len({n for n, _ in pts_tau}) >= 3:
            try:
                out["lifetime_scaling"] = fit_lifetime_scaling(pts_tau).to_dict()
            except ValueError:
                pass
        if len({n for n, _ in pts_imax}) >= 3:
            try:
                out["power_law"] = fit_power_law(pts_imax).to_dict()
            except ValueError:
                pass
        return out

    # brightness exponent from unambiguous records, then re-resolve the
    # ambiguous ones with the brightness constraint
    interim = _fit_batch(*_scaling_points(("ok",)))
    p_exp = (interim["power_law"] or {}).get("exponent")
    for rec, np_cfg, chosen in work:
        est = rec["n_estimate"]
        if (
            est is None
            or est["status"] != "ambiguous"
            or rec["brightness_rel"] is None
            or chosen is None
        ):
            continue
        rec["n_estimate"] = resolve_with_constraints(
            chosen.value,
            rec["tau1_ns"],
            _tau0_for(np_cfg),
            brightness=rec["brightness_rel"],
            power_law_exponent=p_exp,
        ).to_dict()

    batch = _fit_batch(*_scaling_points(("ok", "constrained")))

    records = tuple(_jsonify(rec) for rec, _, _ in work)
    core = {
        "schema_version": _SCHEMA_VERSION,
        "toolkit_version": __version__,
        "config": _jsonify(config.to_dict()),
        "config_hash": config.config_hash,
        "reference": _jsonify(reference),
        "records": list(records),
        "batch": _jsonify(batch),
    }
    report = RunReport(
        schema_version=_SCHEMA_VERSION,
        toolkit_version=__version__,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        wall_clock_s=round(time.monotonic() - t_start, 3),
        config=core["config"],
        config_hash=core["config_hash"],
        reference=core["reference"],
        records=records,
        batch=core["batch"],
        report_hash=_report_hash(core),
    )
    if out_dir is not None:
        report.to_json(out_dir / "report.json")
    return report
