"""Command-line interface.

Subcommands: ``simulate``, ``trpl``, ``g2``, ``fit-decay``, ``resolve``,
``map``, ``pipeline``.  The flags ``--seed``, ``--out``, ``--config`` are
accepted globally (before or after the subcommand).  Results are JSON on
stdout or written to ``--out``; every failure prints a machine-readable
JSON object on stderr and exits non-zero (2 for usage/config errors, 1 for
runtime errors).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from ._version import __version__
from .detection import (
    DecayHistogram,
    apply_detector_chain,
    build_coincidence_histogram,
    build_decay_histogram,
)
from .dynamics import simulate_pulsed_experiment
from .photstat import (
    estimate_g2_area_ratio,
    estimate_g2_instantaneous,
    fit_decay,
)
from .pipeline import (
    ConfigError,
    ExperimentConfig,
    _build_coupling,
    run_pipeline,
)
from .resolver import (
    LifetimeScalingFit,
    NoPhysicalRootError,
    generate_surface,
    resolve_with_constraints,
)
from .streams import PhotonStream, read_stream, read_stream_chunks, write_stream

__all__ = ["main"]

_EXIT_RUNTIME = 1
_EXIT_USAGE = 2


def _fail(kind: str, message: str, code: int = _EXIT_RUNTIME, **extra):
    payload = {"error": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    raise SystemExit(code)


class _JsonParser(argparse.ArgumentParser):
    """Parser whose usage errors go to stderr as JSON (exit code 2)."""

    def error(self, message):
        _fail("usage", f"{self.prog}: {message}", _EXIT_USAGE)


def _write_json(payload: dict, out) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        print(json.dumps({"written": str(out)}, sort_keys=True))
    else:
        sys.stdout.write(text)


def _need(ns, attr: str, what: str):
    value = getattr(ns, attr, None)
    if not value:
        _fail("usage", f"{ns.cmd} requires --{attr} ({what})", _EXIT_USAGE)
    return value


def _load_config(ns) -> ExperimentConfig:
    path = _need(ns, "config", "experiment config JSON")
    cfg = ExperimentConfig.from_json(path)
    seed = getattr(ns, "seed", None)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _cmd_simulate(ns):
    cfg = _load_config(ns)
    out = _need(ns, "out", "stream file path")
    labels = [p.label for p in cfg.nanoparticles]
    if ns.record is None:
        idx = 0
    elif ns.record in labels:
        idx = labels.index(ns.record)
    else:
        _fail(
            "config",
            f"no nanoparticle labeled {ns.record!r}; config has {labels}",
            _EXIT_USAGE,
        )
    np_cfg = cfg.nanoparticles[idx]
    seed_i = cfg.record_seed(idx)
    coupling, modes = _build_coupling(np_cfg, seed_i)
    raw = simulate_pulsed_experiment(coupling, modes, cfg.excitation, seed_i)
    stream = raw if ns.raw else apply_detector_chain(raw, cfg.detector, seed_i)
    write_stream(stream, out, format=ns.format)
    print(
        json.dumps(
            {
                "written": str(out),
                "record": np_cfg.label,
                "n_photons": len(stream),
                "config_hash": raw.meta["config_hash"],
            },
            sort_keys=True,
        )
    )


def _cmd_trpl(ns):
    out = _need(ns, "out", "histogram CSV path")
    counts = None
    first = None
    last_pulse = -1
    for chunk in read_stream_chunks(ns.infile, chunk_size=ns.chunk_size):
        if ns.first_photon and len(chunk):
            # a pulse can straddle a chunk boundary; its first photon was
            # already counted in the previous chunk
            keep = chunk.pulse_index > last_pulse
            last_pulse = int(chunk.pulse_index[-1])
            if not keep.all():
                chunk = PhotonStream(
                    pulse_index=chunk.pulse_index[keep],
                    detector=chunk.detector[keep],
                    delay_ps=chunk.delay_ps[keep],
                    meta=chunk.meta,
                )
        h = build_decay_histogram(chunk, ns.bin_width_ps, ns.first_photon)
        if counts is None:
            counts, first = h.counts.copy(), h
        else:
            counts += h.counts
    hist = DecayHistogram(
        bin_width_ps=ns.bin_width_ps,
        counts=counts,
        n_pulses=first.n_pulses,
        period_ns=first.period_ns,
    )
    hist.to_csv(out)
    print(
        json.dumps(
            {"written": str(out), "total_counts": hist.total_counts, "bins": int(counts.size)},
            sort_keys=True,
        )
    )


def _cmd_g2(ns):
    stream = read_stream(ns.infile)
    if ns.estimator == "instantaneous":
        decay = build_decay_histogram(stream, ns.bin_width_ps or 100)
        est = estimate_g2_instantaneous(stream, decay, ns.window_ps)
    else:
        coinc = build_coincidence_histogram(
            stream, ns.bin_width_ps or 500, ns.k_periods
        )
        est = estimate_g2_area_ratio(coinc, ns.peak_window_ps)
    _write_json(
        {"schema_version": 1, "kind": "g2_estimate", **est.to_dict()},
        getattr(ns, "out", None),
    )


def _cmd_fit_decay(ns):
    hist = DecayHistogram.from_csv(ns.infile)
    fit = fit_decay(hist, model=ns.model)
    _write_json(
        {"schema_version": 1, "kind": "decay_fit", **fit.to_dict()},
        getattr(ns, "out", None),
    )


def _cmd_resolve(ns):
    est = resolve_with_constraints(
        ns.g2,
        ns.tau1_ns,
        ns.tau0_ns,
        brightness=ns.brightness,
        power_law_exponent=ns.power_law_exponent,
    )
    _write_json(
        {"schema_version": 1, "kind": "n_estimate", **est.to_dict()},
        getattr(ns, "out", None),
    )


def _cmd_map(ns):
    out = _need(ns, "out", "surface CSV or JSON path")
    if ns.tau1_min_ns is not None or ns.tau1_max_ns is not None:
        if ns.tau1_min_ns is None or ns.tau1_max_ns is None:
            _fail(
                "usage",
                "--tau1-min-ns and --tau1-max-ns must be given together",
                _EXIT_USAGE,
            )
        source = (ns.tau1_min_ns, ns.tau1_max_ns)
    else:
        source = LifetimeScalingFit(
            a_ns=ns.a_ns, b_ns=ns.b_ns, covariance=np.zeros((2, 2)), goodness=0.0
        )
    surface = generate_surface(
        source,
        ns.tau0_ns,
        n_max=ns.n_max,
        n_tau1=ns.n_tau1,
        n_g2=ns.n_g2,
        band_tolerance=ns.band_tolerance,
    )
    if str(out).lower().endswith(".json"):
        _write_json({"schema_version": 1, "kind": "surface", **surface.to_dict()}, out)
    else:
        surface.to_csv(out)
        print(json.dumps({"written": str(out)}, sort_keys=True))


def _cmd_pipeline(ns):
    cfg = _load_config(ns)
    out = getattr(ns, "out", None) or cfg.output_dir
    if not out:
        _fail(
            "usage",
            "pipeline requires --out (output directory) or config output_dir",
            _EXIT_USAGE,
        )
    report = run_pipeline(cfg, out_dir=out)
    summary = {
        "report": str(Path(out) / "report.json"),
        "report_hash": report.report_hash,
        "records": [
            {
                "label": r["label"],
                "n_configured": r["n_configured"],
                "n_int": (r["n_estimate"] or {}).get("n_int"),
                "status": (r["n_estimate"] or {}).get("status"),
            }
            for r in report.records
        ],
    }
    print(json.dumps(summary, sort_keys=True))


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help="override the config seed"
    )
    common.add_argument(
        "--out", default=argparse.SUPPRESS, help="output file or directory"
    )
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="experiment config JSON path"
    )

    p = _JsonParser(
        prog="qdcount",
        description=(
            "Simulate pulsed emission of coupled quantum emitters and resolve "
            "the emitter number from photon statistics."
        ),
    )
    p.add_argument("--version", action="version", version=f"qdcount {__version__}")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--config", default=None, help="experiment config JSON path")
    sub = p.add_subparsers(dest="cmd", metavar="command")

    sp = sub.add_parser(
        "simulate",
        parents=[common],
        help="simulate one nanoparticle record to a photon stream file",
        description="Simulate one configured nanoparticle and write the "
        "detected photon stream (or the raw pre-detector stream with --raw).",
    )
    sp.add_argument("--record", default=None, help="nanoparticle label (default: first)")
    sp.add_argument(
        "--raw", action="store_true", help="skip the detector chain (detector = -1)"
    )
    sp.add_argument(
        "--format", choices=("csv", "binary"), default=None, help="stream file format"
    )
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser(
        "trpl",
        parents=[common],
        help="decay (TRPL) histogram from a stream file",
        description="Histogram photon delays against the excitation pulse; "
        "the stream file is read in bounded-memory chunks.",
    )
    sp.add_argument("--in", dest="infile", required=True, help="stream file")
    sp.add_argument("--bin-width-ps", type=int, default=100, help="bin width (ps)")
    sp.add_argument(
        "--chunk-size", type=int, default=1_000_000, help="photons per read chunk"
    )
    sp.add_argument(
        "--first-photon",
        action="store_true",
        help="keep only each pulse's earliest photon (start-stop TCSPC)",
    )
    sp.set_defaults(func=_cmd_trpl)

    sp = sub.add_parser(
        "g2",
        parents=[common],
        help="zero-delay correlation estimate from a stream file",
        description="Estimate g2(0) from a detected stream, either by "
        "coincidence-peak areas or by short-window pair extrapolation.",
    )
    sp.add_argument("--in", dest="infile", required=True, help="stream file")
    sp.add_argument(
        "--estimator",
        choices=("instantaneous", "area_ratio"),
        default="instantaneous",
    )
    sp.add_argument(
        "--bin-width-ps",
        type=int,
        default=None,
        help="histogram bin width (default 100 instantaneous, 500 area)",
    )
    sp.add_argument(
        "--window-ps",
        type=float,
        default=None,
        help="instantaneous pair window (default 5%% of the fitted lifetime)",
    )
    sp.add_argument(
        "--k-periods", type=int, default=5, help="coincidence side peaks per side"
    )
    sp.add_argument(
        "--peak-window-ps",
        type=float,
        default=None,
        help="area half-window around each peak (default quarter period)",
    )
    sp.set_defaults(func=_cmd_g2)

    sp = sub.add_parser(
        "fit-decay",
        parents=[common],
        help="exponential fit of a decay histogram CSV",
        description="Weighted mono- or bi-exponential fit of a decay "
        "histogram; reports rates, lifetimes, and goodness of fit.",
    )
    sp.add_argument("--in", dest="infile", required=True, help="decay histogram CSV")
    sp.add_argument("--model", choices=("biexp", "mono"), default="biexp")
    sp.set_defaults(func=_cmd_fit_decay)

    sp = sub.add_parser(
        "resolve",
        parents=[common],
        help="emitter number from (g2, tau1, tau0)",
        description="Invert the dominant-channel relation for the emitter "
        "number; an optional relative brightness breaks ambiguous cases.",
    )
    sp.add_argument("--g2", type=float, required=True, help="zero-delay correlation")
    sp.add_argument("--tau1-ns", type=float, required=True, help="collective lifetime")
    sp.add_argument(
        "--tau0-ns", type=float, required=True, help="single-emitter reference lifetime"
    )
    sp.add_argument(
        "--brightness",
        type=float,
        default=None,
        help="peak intensity relative to a single emitter",
    )
    sp.add_argument(
        "--power-law-exponent",
        type=float,
        default=None,
        help="brightness scaling exponent p (default 1)",
    )
    sp.set_defaults(func=_cmd_resolve)

    sp = sub.add_parser(
        "map",
        parents=[common],
        help="rasterize the (tau1, g2) -> N surface",
        description="Forward-map integer emitter numbers onto the "
        "(tau1, g2) plane; .csv gives the long format, .json the full grid.",
    )
    sp.add_argument("--a-ns", type=float, required=True, help="lifetime slope vs 1/N")
    sp.add_argument("--b-ns", type=float, default=0.0, help="lifetime floor")
    sp.add_argument(
        "--tau0-ns", type=float, required=True, help="single-emitter reference lifetime"
    )
    sp.add_argument("--n-max", type=int, default=10, help="largest mapped N")
    sp.add_argument("--n-tau1", type=int, default=61, help="tau1 grid points")
    sp.add_argument("--n-g2", type=int, default=81, help="g2 grid points")
    sp.add_argument(
        "--tau1-min-ns", type=float, default=None, help="explicit tau1 axis start"
    )
    sp.add_argument(
        "--tau1-max-ns", type=float, default=None, help="explicit tau1 axis end"
    )
    sp.add_argument(
        "--band-tolerance",
        type=float,
        default=None,
        help="half-width of each N band in g2 (default half a grid step)",
    )
    sp.set_defaults(func=_cmd_map)

    sp = sub.add_parser(
        "pipeline",
        parents=[common],
        help="full batch: simulate, detect, fit, estimate, resolve, report",
        description="Run every configured nanoparticle through the full "
        "chain and write intermediate files plus report.json to --out.",
    )
    sp.set_defaults(func=_cmd_pipeline)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.cmd is None:
        parser.print_help()
        return 0
    try:
        ns.func(ns)
        return 0
    except SystemExit:
        raise
    except ConfigError as exc:
        _fail("config", str(exc), _EXIT_USAGE)
    except NoPhysicalRootError as exc:
        _fail(
            "no_physical_root",
            str(exc),
            _EXIT_RUNTIME,
            coefficients=list(exc.coefficients),
        )
    except (FileNotFoundError, IsADirectoryError, PermissionError, OSError) as exc:
        _fail("io", str(exc), _EXIT_RUNTIME)
    except (ValueError, RuntimeError, OverflowError, KeyError) as exc:
        _fail(type(exc).__name__, str(exc), _EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
