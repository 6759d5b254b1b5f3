"""Collective-emission simulator and emitter-number resolver for quantum-dot ensembles.

The toolkit covers the full chain from emitter geometry to an estimate of the
number of emitters inside a diffraction-limited spot:

* ``ensemble``  - emitter placement, dipole-dipole coupling matrices, collective modes
* ``dynamics``  - Lindblad propagation and quantum-jump Monte Carlo photon streams
* ``detection`` - beam splitter, efficiency, jitter, dead time, dark counts, histograms
* ``photstat``  - zero-delay correlation formulas and estimators, decay fitting
* ``resolver``  - emitter-number inversion from (g2, lifetime) pairs
* ``pipeline``  - config-driven end-to-end runs, file formats, reports
"""

from .ensemble import (
    CollectiveModes,
    CouplingMatrix,
    EmitterEnsemble,
    EnsembleSpec,
    PackingError,
    build_ensemble,
    collective_modes,
    coupling_free_space,
    coupling_uniform,
)
from .dynamics import (
    EmissionRecords,
    ExcitationModel,
    QuantumState,
    emission_rate,
    lindblad_propagate,
    quantum_jump_trajectory,
    simulate_pulsed_experiment,
)
from .detection import (
    CoincidenceHistogram,
    DecayHistogram,
    DetectorConfig,
    apply_detector_chain,
    build_coincidence_histogram,
    build_decay_histogram,
)
from .streams import PhotonStream, read_stream, read_stream_chunks, write_stream
from .photstat import (
    DecayFit,
    FitConvergenceError,
    G2Estimate,
    InsufficientPairsError,
    PeakIntensity,
    PowerLawFit,
    estimate_g2_area_ratio,
    estimate_g2_instantaneous,
    fit_decay,
    fit_power_law,
    g2_analytic_modes,
    g2_dominant_channel,
    g2_full,
    g2_oracle_fully_excited,
    peak_intensity,
)
from .resolver import (
    LifetimeScalingFit,
    NEstimate,
    NoPhysicalRootError,
    SurfaceMap,
    classify_single_emitter,
    fit_lifetime_scaling,
    g2_of_n,
    generate_surface,
    resolve_with_constraints,
    solve_n,
)
from .pipeline import (
    AnalysisConfig,
    ConfigError,
    ExperimentConfig,
    NanoparticleConfig,
    RunReport,
    run_pipeline,
)
from ._version import __version__

__all__ = [
    "AnalysisConfig",
    "CollectiveModes",
    "CoincidenceHistogram",
    "ConfigError",
    "CouplingMatrix",
    "DecayFit",
    "DecayHistogram",
    "DetectorConfig",
    "EmissionRecords",
    "EmitterEnsemble",
    "EnsembleSpec",
    "ExcitationModel",
    "ExperimentConfig",
    "FitConvergenceError",
    "G2Estimate",
    "InsufficientPairsError",
    "LifetimeScalingFit",
    "NEstimate",
    "NanoparticleConfig",
    "NoPhysicalRootError",
    "PackingError",
    "PeakIntensity",
    "PhotonStream",
    "PowerLawFit",
    "QuantumState",
    "RunReport",
    "SurfaceMap",
    "apply_detector_chain",
    "build_coincidence_histogram",
    "build_decay_histogram",
    "build_ensemble",
    "classify_single_emitter",
    "collective_modes",
    "coupling_free_space",
    "coupling_uniform",
    "emission_rate",
    "estimate_g2_area_ratio",
    "estimate_g2_instantaneous",
    "fit_decay",
    "fit_lifetime_scaling",
    "fit_power_law",
    "g2_analytic_modes",
    "g2_dominant_channel",
    "g2_full",
    "g2_of_n",
    "g2_oracle_fully_excited",
    "generate_surface",
    "lindblad_propagate",
    "peak_intensity",
    "quantum_jump_trajectory",
    "read_stream",
    "read_stream_chunks",
    "resolve_with_constraints",
    "run_pipeline",
    "simulate_pulsed_experiment",
    "solve_n",
    "write_stream",
]
