"""Command-line front end.

Verbs: ``landscape``, ``hom-sweep``, ``run``, ``tomography``, ``sync-selftest``.
Every verb reads one scenario file, writes CSV/JSON into ``--out`` and
finishes with ``manifest.json`` listing every file it wrote. Output bytes
depend only on the scenario and seed; wall-clock time appears only in the
manifest.

Exit codes: 0 success, 2 bad configuration or arguments, 3 synchronization
failure (partial outputs, flagged in the manifest), 1 anything else.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .quantum import QuantumInputError, matrix_to_jsonable
from .scenario import ConfigError, Scenario, load_scenario, resolve_config_path

SEED_ENV = "QDTELEPORT_SEED"
EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SYNC = 0, 1, 2, 3


# -- output plumbing ------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


class Outputs:
    """Writes files under one directory and remembers them for the manifest."""

    def __init__(self, root: Path, fmt: str = "csv"):
        self.root = Path(root)
        self.fmt = fmt
        self.files: list[str] = []
        self.root.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, data: bytes) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        if name not in self.files:
            self.files.append(name)
        return path

    def text(self, name: str, text: str) -> Path:
        return self._write(name, text.encode())

    def json(self, name: str, obj) -> Path:
        return self.text(name, _dumps(obj))

    def binary(self, name: str, data: bytes) -> Path:
        return self._write(name, data)

    def table(self, stem: str, header, rows) -> Path:
        """A table as CSV or as a JSON list of records, per ``--format``."""
        rows = [list(r) for r in rows]
        if self.fmt == "json":
            recs = [dict(zip(header, r)) for r in rows]
            return self.json(f"{stem}.json", {"columns": list(header), "rows": recs})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        return self.text(f"{stem}.csv", buf.getvalue())

    def digest(self, name: str) -> str:
        return hashlib.sha256((self.root / name).read_bytes()).hexdigest()


def _module_versions() -> dict:
    import numba
    import scipy
    import yaml

    return {"qdteleport": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "pyyaml": yaml.__version__}


def _write_manifest(out: Outputs, command: str, scen: Scenario | None, start: float, status: str,
                    extra: dict | None = None) -> None:
    files = [{"path": f, "sha256": out.digest(f)} for f in sorted(out.files)]
    manifest = {
        "command": command,
        "scenario": scen.config.name if scen else None,
        "config_hash": scen.config_hash if scen else None,
        "seed": scen.config.seed if scen else None,
        "module_versions": _module_versions(),
        "outputs": files,
        "status": status,
        "wall_clock_s": time.perf_counter() - start,
        **(extra or {}),
    }
    (out.root / "manifest.json").write_text(_dumps(manifest))


# -- verbs ---------------------------------------------------------------------------


def cmd_landscape(scen: Scenario, out: Outputs, args) -> dict:
    from .teleport import average_teleport_fidelity, classical_limit, fidelity_landscape, pair_from_bell_fidelity

    spec = scen.landscape
    land = fidelity_landscape(spec.f_grid, spec.v_grid, spec.pair_model)
    rows = [(f, v, land.fidelity[i, j]) for i, f in enumerate(land.f_grid) for j, v in enumerate(land.v_grid)]
    out.table("landscape", ("f_bell", "v_hom", "fidelity"), rows)
    f_star, v_star = spec.star
    star = {}
    for model in ("dephased_bell", "werner"):
        star[model] = average_teleport_fidelity(pair_from_bell_fidelity(f_star, model), v_star)
    out.json("contour.json", {
        "level": classical_limit(),
        "pair_model": spec.pair_model,
        "polylines": [[{"f_bell": p[0], "v_hom": p[1]} for p in line] for line in land.contour],
    })
    meta = {
        "pair_model": spec.pair_model,
        "grid_shape": list(land.fidelity.shape),
        "classical_limit": classical_limit(),
        "star": {"bell_fidelity": f_star, "hom_visibility": v_star, "fidelity": star[spec.pair_model],
                 "fidelity_by_model": star},
        "monotone": land.is_monotone(),
        "contour_monotone": land.contour_is_monotone(),
        "contour_nonempty": bool(land.contour),
    }
    out.json("landscape_meta.json", meta)
    return {"monotone": meta["monotone"], "star_fidelity": meta["star"]["fidelity"]}


def cmd_hom_sweep(scen: Scenario, out: Outputs, args) -> dict:
    from .events.physics import resolve_photons
    from .interference import hom_curves

    cfg = scen.config
    ph = resolve_photons(cfg)
    curves = hom_curves(ph.wp1, ph.wp2, cfg.bsm_detector, dt=scen.hom.dt)
    windows = np.array(scen.hom.windows, dtype=float)
    vis = curves.visibility(windows)
    par, perp = curves.counts(windows)
    out.table("hom_visibility", ("delta_tau_ps", "visibility", "parallel", "perpendicular"),
              zip(windows, vis, par, perp))
    keep = np.abs(curves.tau) <= scen.hom.tau_export_ps
    out.table("hom_density_parallel", ("tau_ps", "density"), zip(curves.tau[keep], curves.parallel[keep]))
    out.table("hom_density_perpendicular", ("tau_ps", "density"), zip(curves.tau[keep], curves.perpendicular[keep]))
    anchors = {f"{w:g}": float(curves.visibility(w)) for w in (20.0, 30.0)}
    mono = bool(np.all(np.diff(vis) <= 1e-12))
    out.json("hom_meta.json", {"visibility_at": anchors, "monotone_non_increasing": mono,
                               "magnetic_field_t": ph.field, "qd1_detuning_uev": ph.wp1.detuning,
                               "jitter_fwhm_ps": cfg.bsm_detector.jitter_fwhm})
    return {"visibility_at": anchors}


def cmd_tomography(scen: Scenario, out: Outputs, args) -> dict:
    from .events.physics import resolve_photons
    from .quantum import concurrence, fidelity
    from .tomography import read_counts, reconstruct_state, sample_counts

    if args.counts:
        counts = read_counts(args.counts)
        truth = None
    else:
        truth = resolve_photons(scen.config).pair
        rng = np.random.default_rng(np.random.SeedSequence(scen.config.seed, spawn_key=(11,)))
        counts = sample_counts(truth, scen.tomography.pair_counts, rng)
    out.table("pair_counts", ("basis1", "basis2", "counts"),
              [(k[0], k[1] if len(k) > 1 else "", v) for k, v in counts.items()])
    rho = reconstruct_state(counts)
    out.json("pair_state.json", {"rho": matrix_to_jsonable(rho)})
    meta = {"source": "file" if args.counts else "simulated", "total_counts": float(sum(counts.values()))}
    if rho.shape == (4, 4):
        meta.update({"fidelity_phi_plus": fidelity(rho, "phi+"), "concurrence": concurrence(rho)})
    if truth is not None:
        meta.update({"model_fidelity_phi_plus": fidelity(truth, "phi+"), "model_concurrence": concurrence(truth)})
    out.json("tomography_meta.json", meta)
    return meta


def _sync_cases():
    offsets = (0.0, 12_345_678.0, 0.73e12, -0.61e12, 0.999e12)
    drifts = (0.0, 5.0, -5.0, 50.0, -50.0)
    return [(o, d) for o in offsets for d in drifts]


def cmd_sync_selftest(scen: Scenario, out: Outputs, args) -> dict:
    from .events.generate import generate_timetags
    from .events.physics import herald_delay_model
    from .events.sync import synchronize
    from .events.timetags import CH_HERALD, TimeTagStream, sort_tags

    base = scen.config
    duration = args.duration
    model = herald_delay_model(base)
    rows, worst_rms, worst_drift, failures = [], 0.0, 0.0, 0
    for k, (off, drift) in enumerate(_sync_cases()):
        hc = dataclasses.replace(base.herald_clock, offset=off, drift=drift)
        cfg = dataclasses.replace(base, herald_clock=hc, duration=duration)
        gen = generate_timetags(cfg, "H", "HV", setting_index=1000 + k, threads=args.threads)
        res = synchronize(gen.stream, model["sync_centroid"], cfg.period, use_pps=cfg.generation.pps,
                          segment=cfg.analysis.sync_segment)
        rms = drift_err = math.nan
        if res.ok:
            th, _ = gen.stream.channels(list(CH_HERALD))
            grid = np.linspace(th[0], th[-1], 2001)
            truth = gen.truth.herald_to_bsm(grid)
            rms = float(np.sqrt(np.mean((res.map(grid) - truth) ** 2)))
            slope = np.polyfit(grid - grid[0], truth, 1)[0]
            drift_err = float((res.scale - slope) * 1e6)
            worst_rms = max(worst_rms, rms)
            worst_drift = max(worst_drift, abs(drift_err))
        else:
            failures += 1
        rows.append((off, drift, res.ok, res.method, res.offset, res.drift_ppm, rms, drift_err,
                     res.diagnostics.get("reason", "")))
    # failure path: heralds replaced by uncorrelated clicks must yield a diagnostic, not a crash
    cfg = dataclasses.replace(base, duration=min(duration, 1.0))
    gen = generate_timetags(cfg, "H", "HV", setting_index=2000)
    tags = gen.stream.tags.copy()
    her = np.isin(tags["channel"], list(CH_HERALD))
    rng = np.random.default_rng(np.random.SeedSequence(base.seed, spawn_key=(13,)))
    lo, hi = int(tags["timestamp"][her].min()), int(tags["timestamp"][her].max())
    tags["timestamp"][her] = np.sort(rng.integers(lo, hi, her.sum())).astype(np.uint64)
    tags = sort_tags(tags[~np.isin(tags["channel"], [6, 7])])
    bad = synchronize(TimeTagStream(tags), model["sync_centroid"], cfg.period, use_pps=False)
    rows.append(("uncorrelated", "", bad.ok, bad.method, bad.offset, bad.drift_ppm, math.nan, math.nan,
                 bad.diagnostics.get("reason", "")))
    out.table("sync_selftest", ("offset_ps", "drift_ppm", "ok", "method", "est_offset_ps", "est_drift_ppm",
                                "rms_error_ps", "drift_error_ppm", "reason"), rows)
    summary = {"cases": len(rows) - 1, "failures": failures, "worst_rms_ps": worst_rms,
               "worst_drift_error_ppm": worst_drift, "rms_limit_ps": 50.0, "drift_limit_ppm": 0.5,
               "passed": failures == 0 and worst_rms <= 50.0 and worst_drift <= 0.5,
               "failure_path_diagnosed": (not bad.ok) and bool(bad.diagnostics.get("reason")),
               "duration_s": duration}
    out.json("sync_selftest.json", summary)
    return summary


def cmd_run(scen: Scenario, out: Outputs, args) -> dict:
    from .events.coincidences import PROJECTIONS
    from .events.timetags import tags_to_bytes
    from .experiment import OUTCOME_LABELS, model_prediction, run_experiment
    from .quantum import CARDINAL_LABELS

    cfg = scen.config
    res = run_experiment(cfg, threads=args.threads)
    a = cfg.analysis
    for idx, tags in enumerate(res.tag_excerpts):
        if len(tags):
            out.binary(f"timetags/setting_{idx:02d}.bin", tags_to_bytes(tags))
    rows = []
    for p_i, proj in enumerate(PROJECTIONS):
        for w_i, w in enumerate(res.windows):
            for i_i, inp in enumerate(CARDINAL_LABELS):
                for o_i, o in enumerate(OUTCOME_LABELS):
                    rows.append((proj, w, inp, o, int(res.counts[p_i, w_i, i_i, o_i])))
    out.table("coincidences", ("projection", "window_ps", "input", "outcome", "counts"), rows)
    rf = res.retained()
    frows = []
    for k, f in enumerate(res.fidelities):
        frows.append((f.window, f.events[0], f.events[1], f.fidelity[0], f.fidelity_err[0], f.fidelity[1],
                      f.fidelity_err[1], f.average, f.average_err, f.direct[0], f.direct[1],
                      rf.counts[k], rf.fraction[k]))
    out.table("fidelity_vs_window", ("window_ps", "events_psi_minus", "events_psi_plus", "F_psi_minus",
                                     "F_psi_minus_err", "F_psi_plus", "F_psi_plus_err", "F_avg", "F_avg_err",
                                     "F_direct_psi_minus", "F_direct_psi_plus", "retained_events",
                                     "retained_fraction"), frows)
    for proj in PROJECTIONS:
        chi = res.chi[proj]
        payload = chi.to_json() if chi is not None else {"basis": ["I", "X", "Y", "Z"], "projection": proj,
                                                          "chi": None}
        payload["window_ps"] = a.chi_window
        payload["frame"] = "correction_disabled"
        out.json(f"chi_{proj}.json", payload)
    srows = [(s.index, s.input_label, s.basis, s.n_tags, s.sync.method if s.sync else "",
              s.sync.offset if s.sync else math.nan, s.sync.drift_ppm if s.sync else math.nan,
              s.sync_error_rms_ps if s.sync_error_rms_ps is not None else math.nan, s.threefolds)
             for s in res.settings]
    out.table("sync", ("setting", "input", "herald_basis", "tags", "method", "offset_ps", "drift_ppm",
                       "truth_rms_error_ps", "threefolds"), srows)
    chi_w = res.at(a.chi_window) if a.chi_window in res.windows else None
    summary = {
        "topology": cfg.topology,
        "duration_per_setting_s": cfg.duration,
        "settings": len(res.settings),
        "threefold_rate_hz": res.threefold_rate(),
        "retained_fraction_defined": rf.defined,
        "chi_window_ps": a.chi_window,
        "fidelity_at_chi_window": None if chi_w is None else {
            "psi_minus": chi_w.fidelity[0], "psi_minus_err": chi_w.fidelity_err[0],
            "psi_plus": chi_w.fidelity[1], "psi_plus_err": chi_w.fidelity_err[1],
            "average": chi_w.average, "average_err": chi_w.average_err},
        "model_prediction_at_chi_window": model_prediction(cfg, a.chi_window),
        "error_method": f"Poisson parametric bootstrap of coincidence counts, {a.bootstrap_samples} replicates",
        "fidelity_method": "single-qubit tomography per input, chi by least squares, F=(2 F_proc+1)/3",
        "sync_centroid_ps": res.model["sync_centroid"],
        "pair_offset_ps": res.model["pair_offset"],
    }
    out.json("run_summary.json", summary)
    return {"threefold_rate_hz": summary["threefold_rate_hz"]}


VERBS = {
    "landscape": cmd_landscape,
    "hom-sweep": cmd_hom_sweep,
    "run": cmd_run,
    "tomography": cmd_tomography,
    "sync-selftest": cmd_sync_selftest,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qdteleport", description="Quantum-dot teleportation simulator")
    sub = p.add_subparsers(dest="verb", required=True)
    for name in VERBS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True,
                       help="scenario YAML file, or a shipped name (reference-fiber, reference-hybrid)")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help=f"overrides the scenario seed (and ${SEED_ENV})")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "tomography":
            s.add_argument("--counts", default=None, help="reconstruct from this count CSV instead of simulating")
        if name == "sync-selftest":
            s.add_argument("--duration", type=float, default=4.0, help="seconds of data per case")
    return p


def _resolve_seed(flag: int | None) -> int | None:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"environment variable {SEED_ENV} is not an integer: {env!r}") from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    start = time.perf_counter()
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        scen = load_scenario(resolve_config_path(args.config), seed=_resolve_seed(args.seed))
    except (ConfigError, QuantumInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Outputs(Path(args.out), args.format)
    from .events.sync import SyncError

    try:
        result = VERBS[args.verb](scen, out, args)
    except SyncError as exc:
        _write_manifest(out, args.verb, scen, start, "partial",
                        {"error": str(exc), "sync_diagnostics": exc.result.diagnostics})
        print(f"synchronization failed: {exc}", file=sys.stderr)
        return EXIT_SYNC
    except (ConfigError, QuantumInputError) as exc:
        _write_manifest(out, args.verb, scen, start, "failed", {"error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        _write_manifest(out, args.verb, scen, start, "failed", {"error": f"{type(exc).__name__}: {exc}"})
        raise
    _write_manifest(out, args.verb, scen, start, "complete", {"result": result})
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
