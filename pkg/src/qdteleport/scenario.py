"""Scenario files: a YAML tree (schema version 1) describing one experiment.

Every field carries its unit in the key name. Unknown keys are errors, and
errors name the offending field and its line. Two calibration shortcuts are
resolved at parse time:

* ``qd1.resonant_field_t`` replaces ``qd1.exciton_energy_ev``: QD1's zero-field
  energy is chosen so the selected Zeeman branch meets QD2 at that field;
* ``qd2.cross_dephasing`` may be ``{bell_fidelity: F}`` to back-solve the
  cross-dephasing factor that gives fidelity ``F`` at the operating FSS.

The config hash is the SHA-256 of the canonical JSON (sorted keys, compact
separators) of the parsed tree, after the seed override is applied.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .emitter import (QuantumDotParams, cross_dephasing_for_fidelity, detuning_for_resonance,
                      fss_vs_strain)
from .events.config import (AnalysisOptions, ChannelModel, ClockModel, FadingModel, GenerationOptions,
                            ScenarioConfig)
from .interference import DetectorResponse
from .quantum import CARDINAL_LABELS, QuantumInputError, rotation

SCHEMA_VERSION = 1
SHIPPED = ("reference-fiber", "reference-hybrid")


class ConfigError(ValueError):
    def __init__(self, message: str, path: tuple = (), line: int | None = None, source: str = "<config>"):
        self.path = path
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        fld = ".".join(str(p) for p in path) if path else "<root>"
        super().__init__(f"{where}: field '{fld}': {message}")


# -- loading with line numbers --------------------------------------------------


def _line_map(node, path=(), out=None, source="<config>") -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            if path + (key,) in out:
                raise ConfigError("duplicate key", path + (key,), k.start_mark.line + 1, source)
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out, source)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out, source)
    return out


class _Reader:
    """Typed access into the YAML tree that tracks consumed keys."""

    def __init__(self, data, lines, source):
        self.data = data
        self.lines = lines
        self.source = source

    def error(self, msg, path):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        return ConfigError(msg, path, line, self.source)

    def section(self, path, required=True) -> dict:
        node = self._get(path)
        if node is None:
            if required:
                raise self.error("missing section", path)
            return {}
        if not isinstance(node, dict):
            raise self.error("expected a mapping", path)
        return node

    def _walk(self, path):
        node = self.data
        for p in path:
            if isinstance(node, dict) and p in node:
                node = node[p]
            elif isinstance(node, list) and isinstance(p, int) and 0 <= p < len(node):
                node = node[p]
            else:
                return False, None
        return True, node

    def _get(self, path):
        return self._walk(path)[1]

    def has(self, path) -> bool:
        return self._walk(path)[0]

    def check_keys(self, path, allowed):
        sec = self.section(path, required=False)
        for k in sec:
            if k not in allowed:
                raise self.error(f"unknown key (allowed: {', '.join(sorted(allowed))})", path + (k,))

    def number(self, path, default=None, lo=None, hi=None, integer=False):
        val = self._get(path) if self.has(path) else None
        if val is None:
            if default is None:
                raise self.error("required value missing", path)
            return default
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise self.error(f"expected a number, got {val!r}", path)
        if integer and (not isinstance(val, int)):
            raise self.error(f"expected an integer, got {val!r}", path)
        if not math.isfinite(val):
            raise self.error("value must be finite", path)
        if lo is not None and val < lo:
            raise self.error(f"value {val} below minimum {lo}", path)
        if hi is not None and val > hi:
            raise self.error(f"value {val} above maximum {hi}", path)
        return val

    def choice(self, path, options, default=None):
        val = self._get(path) if self.has(path) else None
        if val is None:
            if default is None:
                raise self.error("required value missing", path)
            return default
        if val not in options:
            raise self.error(f"expected one of {list(options)}, got {val!r}", path)
        return val

    def flag(self, path, default):
        val = self._get(path) if self.has(path) else None
        if val is None:
            return default
        if not isinstance(val, bool):
            raise self.error(f"expected true/false, got {val!r}", path)
        return val

    def numbers(self, path, default=None):
        val = self._get(path) if self.has(path) else None
        if val is None:
            if default is None:
                raise self.error("required list missing", path)
            return tuple(default)
        if not isinstance(val, list) or not val:
            raise self.error("expected a non-empty list of numbers", path)
        return tuple(self.number(path + (i,)) for i in range(len(val)))

    def labels(self, path, allowed, default):
        val = self._get(path) if self.has(path) else None
        if val is None:
            return tuple(default)
        if not isinstance(val, list) or not val:
            raise self.error("expected a non-empty list", path)
        for i, v in enumerate(val):
            if v not in allowed:
                raise self.error(f"expected one of {list(allowed)}, got {v!r}", path + (i,))
        if len(set(val)) != len(val):
            raise self.error("duplicate entries", path)
        return tuple(val)


# -- sections --------------------------------------------------------------------

_QD_KEYS = {"exciton_energy_ev", "resonant_field_t", "xx_binding_mev", "lifetime_x_ps", "lifetime_xx_ps",
            "pure_dephasing_per_ns", "fss_min_uev", "fss_slope_uev_per_v", "fss_v0_v", "g_factor",
            "diamagnetic_uev_per_t2", "cross_dephasing"}


def _qd_common(r: _Reader, p) -> dict:
    r.check_keys(p, _QD_KEYS)
    return dict(
        xx_binding=r.number(p + ("xx_binding_mev",), 4.0),
        lifetime_x=r.number(p + ("lifetime_x_ps",), lo=1e-6),
        lifetime_xx=r.number(p + ("lifetime_xx_ps",), lo=1e-6),
        pure_dephasing_rate=r.number(p + ("pure_dephasing_per_ns",), 0.0, lo=0),
        fss_min=r.number(p + ("fss_min_uev",), 0.0, lo=0),
        fss_slope=r.number(p + ("fss_slope_uev_per_v",), 1.0),
        fss_v0=r.number(p + ("fss_v0_v",), 0.0),
        g_factor=r.number(p + ("g_factor",), 0.0),
        diamagnetic_coeff=r.number(p + ("diamagnetic_uev_per_t2",), 0.0),
    )


def _unitary(r: _Reader, p) -> np.ndarray:
    if not r.has(p) or r._get(p) is None:
        return np.eye(2, dtype=complex)
    r.check_keys(p, {"axis", "angle_rad"})
    axis = r.numbers(p + ("axis",))
    if len(axis) != 3 or not any(axis):
        raise r.error("axis must be a non-zero 3-vector", p + ("axis",))
    return rotation(axis, r.number(p + ("angle_rad",)))


def _channel(r: _Reader, p) -> ChannelModel:
    r.check_keys(p, {"transmission", "background_rate_hz", "polarization_error", "fading"})
    fp = p + ("fading",)
    r.check_keys(fp, {"sigma", "correlation_time_s", "block_s"})
    fading = FadingModel(r.number(fp + ("sigma",), 0.0, lo=0), r.number(fp + ("correlation_time_s",), 0.01, lo=1e-9),
                         r.number(fp + ("block_s",), 1e-3, lo=1e-9))
    return ChannelModel(r.number(p + ("transmission",), 1.0, lo=0, hi=1),
                        r.number(p + ("background_rate_hz",), 0.0, lo=0),
                        _unitary(r, p + ("polarization_error",)), fading)


def _detector(r: _Reader, p) -> DetectorResponse:
    r.check_keys(p, {"jitter_fwhm_ps", "efficiency", "dark_rate_hz"})
    return DetectorResponse(r.number(p + ("jitter_fwhm_ps",), 0.0, lo=0), r.number(p + ("efficiency",), 1.0, lo=0, hi=1),
                            r.number(p + ("dark_rate_hz",), 0.0, lo=0))


def _clock(r: _Reader, p) -> ClockModel:
    r.check_keys(p, {"offset_ps", "drift_ppm", "discipline_jitter_rms_ps", "wander_correlation_s"})
    return ClockModel(r.number(p + ("offset_ps",), 0.0), r.number(p + ("drift_ppm",), 0.0),
                      r.number(p + ("discipline_jitter_rms_ps",), 0.0, lo=0),
                      r.number(p + ("wander_correlation_s",), 0.1, lo=1e-9))


@dataclass(frozen=True)
class LandscapeSpec:
    f_grid: np.ndarray
    v_grid: np.ndarray
    pair_model: str
    star: tuple[float, float]  # (Bell fidelity, visibility)


@dataclass(frozen=True)
class HomSpec:
    windows: tuple[float, ...]
    dt: float
    tau_export_ps: float  # half-span of the exported density curves


@dataclass(frozen=True)
class TomographySpec:
    pair_counts: float


@dataclass
class Scenario:
    config: ScenarioConfig
    landscape: LandscapeSpec
    hom: HomSpec
    tomography: TomographySpec
    tree: dict
    source: str
    notes: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.tree)

    def with_seed(self, seed: int) -> "Scenario":
        tree = json.loads(json.dumps(self.tree))
        tree["seed"] = int(seed)
        return build_scenario(tree, None, self.source)


def canonical_bytes(tree: dict) -> bytes:
    return json.dumps(tree, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode()


def config_hash(tree: dict) -> str:
    return hashlib.sha256(canonical_bytes(tree)).hexdigest()


_TOP_KEYS = {"schema", "name", "topology", "seed", "rep_rate_mhz", "duration_s", "qd1", "qd2", "operating_point",
             "channels", "bsm_port_error", "detectors", "clocks", "generation", "analysis", "inputs",
             "herald_bases", "landscape", "hom", "tomography"}


def build_scenario(tree: Any, lines: dict | None = None, source: str = "<config>") -> Scenario:
    r = _Reader(tree, lines or {}, source)
    if not isinstance(tree, dict):
        raise r.error("scenario must be a mapping", ())
    r.check_keys((), _TOP_KEYS)
    schema = r.number(("schema",), integer=True)
    if schema != SCHEMA_VERSION:
        raise r.error(f"unsupported schema version {schema}; expected {SCHEMA_VERSION}", ("schema",))
    name = tree.get("name")
    if not isinstance(name, str) or not name:
        raise r.error("expected a non-empty string", ("name",))
    topology = r.choice(("topology",), ("fiber_only", "hybrid_free_space"))
    seed = r.number(("seed",), integer=True, lo=0, hi=2**64 - 1)

    op = ("operating_point",)
    r.check_keys(op, {"qd1_branch", "magnetic_field_t", "qd2_strain_voltage_v", "x1_arrival_offset_ps",
                      "x2_arrival_offset_ps", "herald_path_delay_ps", "preparation_efficiency"})
    branch = r.choice(op + ("qd1_branch",), ("plus", "minus"), "plus")
    # null or absent: solve for the resonance field
    field_t = r.number(op + ("magnetic_field_t",), lo=0) if r._get(op + ("magnetic_field_t",)) is not None else None
    strain = r.number(op + ("qd2_strain_voltage_v",), 0.0)
    prep = r.numbers(op + ("preparation_efficiency",), (1.0, 1.0))
    if len(prep) != 2 or any(not 0 <= p <= 1 for p in prep):
        raise r.error("expected two efficiencies in [0, 1]", op + ("preparation_efficiency",))

    # QD2 first: it is the reference energy
    p2 = ("qd2",)
    r.section(p2)
    common2 = _qd_common(r, p2)
    if r.has(p2 + ("resonant_field_t",)):
        raise r.error("only qd1 can be placed by resonant_field_t", p2 + ("resonant_field_t",))
    e2 = r.number(p2 + ("exciton_energy_ev",), lo=0.1)
    notes = {}
    cd_node = r._get(p2 + ("cross_dephasing",))
    if isinstance(cd_node, dict):
        r.check_keys(p2 + ("cross_dephasing",), {"bell_fidelity"})
        f_target = r.number(p2 + ("cross_dephasing", "bell_fidelity"), lo=0.5, hi=1.0)
        probe = QuantumDotParams(exciton_energy=e2, **common2)
        fss = fss_vs_strain(probe, strain)
        try:
            cd2 = cross_dephasing_for_fidelity(f_target, fss, common2["lifetime_x"])
        except QuantumInputError as exc:
            raise r.error(str(exc), p2 + ("cross_dephasing",)) from None
        notes["qd2_cross_dephasing"] = cd2
    else:
        cd2 = r.number(p2 + ("cross_dephasing",), 1.0, lo=0, hi=1)
    qd2 = QuantumDotParams(exciton_energy=e2, cross_dephasing=cd2, **common2)

    p1 = ("qd1",)
    r.section(p1)
    common1 = _qd_common(r, p1)
    cd1 = r.number(p1 + ("cross_dephasing",), 1.0, lo=0, hi=1)
    if r.has(p1 + ("resonant_field_t",)):
        if r.has(p1 + ("exciton_energy_ev",)):
            raise r.error("give either exciton_energy_ev or resonant_field_t", p1 + ("resonant_field_t",))
        b_res = r.number(p1 + ("resonant_field_t",), lo=0, hi=9)
        probe = QuantumDotParams(exciton_energy=0.0, cross_dephasing=cd1, **common1)
        # branch energy is linear in the zero-field energy, so shift QD1 onto QD2
        e1 = e2 - detuning_for_resonance(probe, b_res, branch)
        notes["qd1_exciton_energy_ev"] = e1
    else:
        e1 = r.number(p1 + ("exciton_energy_ev",), lo=0.1)
    qd1 = QuantumDotParams(exciton_energy=e1, cross_dephasing=cd1, **common1)

    ch = ("channels",)
    r.section(ch)
    r.check_keys(ch, {"x1", "x2", "xx2"})
    det = ("detectors",)
    r.check_keys(det, {"bsm", "herald"})
    clk = ("clocks",)
    r.check_keys(clk, {"bsm", "herald"})
    gp = ("generation",)
    r.check_keys(gp, {"min_detected_photons", "slab_s", "pps", "pps_jitter_ps", "timetag_dump_s"})
    gen = GenerationOptions(int(r.number(gp + ("min_detected_photons",), 2, lo=1, hi=3, integer=True)),
                            r.number(gp + ("slab_s",), 1.0, lo=1e-6), r.flag(gp + ("pps",), True),
                            r.number(gp + ("pps_jitter_ps",), 1000.0, lo=0),
                            r.number(gp + ("timetag_dump_s",), 0.0, lo=0))
    ap = ("analysis",)
    r.check_keys(ap, {"windows_ps", "reference_window_ps", "heralding_window_ps", "chi_window_ps",
                      "bootstrap_samples", "sync_segment_s"})
    windows = r.numbers(ap + ("windows_ps",), AnalysisOptions.windows)
    try:
        analysis = AnalysisOptions(windows, r.number(ap + ("reference_window_ps",), 400.0, lo=1e-9),
                                   r.number(ap + ("heralding_window_ps",), 1000.0, lo=1e-9),
                                   r.number(ap + ("chi_window_ps",), 30.0, lo=1e-9),
                                   int(r.number(ap + ("bootstrap_samples",), 200, lo=0, integer=True)),
                                   r.number(ap + ("sync_segment_s",), 1.0, lo=1e-6))
    except QuantumInputError as exc:
        raise r.error(str(exc), ap) from None
    if analysis.chi_window not in analysis.windows:
        raise r.error("chi_window_ps must be one of windows_ps", ap + ("chi_window_ps",))

    try:
        cfg = ScenarioConfig(
            name=name, topology=topology, seed=int(seed),
            rep_rate=r.number(("rep_rate_mhz",), lo=1e-9), duration=r.number(("duration_s",), lo=0),
            qd1=qd1, qd2=qd2, qd1_branch=branch, magnetic_field=field_t, qd2_strain_voltage=strain,
            x1_arrival_offset=r.number(op + ("x1_arrival_offset_ps",), 0.0),
            x2_arrival_offset=r.number(op + ("x2_arrival_offset_ps",), 0.0),
            herald_path_delay=r.number(op + ("herald_path_delay_ps",), 0.0, lo=0),
            preparation_efficiency=tuple(prep),
            x1_channel=_channel(r, ch + ("x1",)), x2_channel=_channel(r, ch + ("x2",)),
            xx2_channel=_channel(r, ch + ("xx2",)),
            bsm_port_error=_unitary(r, ("bsm_port_error",)),
            bsm_detector=_detector(r, det + ("bsm",)), herald_detector=_detector(r, det + ("herald",)),
            bsm_clock=_clock(r, clk + ("bsm",)), herald_clock=_clock(r, clk + ("herald",)),
            generation=gen, analysis=analysis,
            inputs=r.labels(("inputs",), CARDINAL_LABELS, CARDINAL_LABELS),
            herald_bases=r.labels(("herald_bases",), ("HV", "DA", "RL"), ("HV", "DA", "RL")),
        )
    except QuantumInputError as exc:
        raise r.error(str(exc), ()) from None

    lp = ("landscape",)
    r.check_keys(lp, {"bell_fidelity", "visibility", "points", "pair_model", "star"})
    f_rng = r.numbers(lp + ("bell_fidelity",), (0.25, 1.0))
    v_rng = r.numbers(lp + ("visibility",), (0.0, 1.0))
    pts = r.numbers(lp + ("points",), (101, 101))
    for key, rng_, lo in (("bell_fidelity", f_rng, 0.25), ("visibility", v_rng, 0.0)):
        if len(rng_) != 2 or rng_[0] > rng_[1] or rng_[0] < lo or rng_[1] > 1:
            raise r.error(f"expected [min, max] within [{lo}, 1]", lp + (key,))
    if len(pts) != 2 or any(int(p) != p or p < 1 for p in pts):
        raise r.error("expected two positive integers", lp + ("points",))
    star_p = lp + ("star",)
    r.check_keys(star_p, {"bell_fidelity", "visibility"})
    star = (r.number(star_p + ("bell_fidelity",), 0.94, lo=0.25, hi=1),
            r.number(star_p + ("visibility",), 0.57, lo=0, hi=1))
    land = LandscapeSpec(np.linspace(f_rng[0], f_rng[1], int(pts[0])), np.linspace(v_rng[0], v_rng[1], int(pts[1])),
                         r.choice(lp + ("pair_model",), ("dephased_bell", "werner"), "dephased_bell"), star)

    hp = ("hom",)
    r.check_keys(hp, {"windows_ps", "dt_ps", "tau_export_ps"})
    hw = r.numbers(hp + ("windows_ps",), tuple(float(w) for w in range(10, 401, 10)))
    if any(w <= 0 for w in hw) or list(hw) != sorted(set(hw)):
        raise r.error("windows must be positive and strictly ascending", hp + ("windows_ps",))
    hom = HomSpec(hw, r.number(hp + ("dt_ps",), 0.25, lo=1e-3, hi=10), r.number(hp + ("tau_export_ps",), 1500.0, lo=1))

    tp = ("tomography",)
    r.check_keys(tp, {"pair_counts"})
    tomo = TomographySpec(r.number(tp + ("pair_counts",), 1e6, lo=1))
    return Scenario(cfg, land, hom, tomo, tree, source, notes)


def load_scenario(path, seed: int | None = None) -> Scenario:
    """Parse a scenario file; ``seed`` overrides the file's seed."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file ({exc.strerror})", source=str(path)) from None
    return parse_scenario(text, str(path), seed)


def parse_scenario(text: str, source: str = "<config>", seed: int | None = None) -> Scenario:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None, source=source) from None
    if node is None:
        raise ConfigError("empty scenario file", source=source)
    if seed is not None and isinstance(tree, dict):
        if not 0 <= int(seed) < 2**64:
            raise ConfigError("seed override must be a 64-bit unsigned integer", ("seed",), source=source)
        tree["seed"] = int(seed)
    return build_scenario(tree, _line_map(node, source=source), source)


def shipped_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (``reference-fiber``, ``reference-hybrid``)."""
    from importlib import resources

    if name not in SHIPPED:
        raise ConfigError(f"no shipped scenario named {name!r}; choose from {SHIPPED}")
    return Path(str(resources.files("qdteleport") / "scenarios" / f"{name}.yaml"))


def resolve_config_path(spec: str) -> Path:
    """A file path, or the bare name of a shipped scenario."""
    p = Path(spec)
    if p.exists() or spec not in SHIPPED:
        return p
    return shipped_scenario_path(spec)
