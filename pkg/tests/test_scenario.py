import pytest

from qdteleport.scenario import (SHIPPED, ConfigError, canonical_bytes, config_hash, load_scenario,
                                 parse_scenario, resolve_config_path, shipped_scenario_path)


@pytest.fixture(scope="module")
def fiber_text():
    return shipped_scenario_path("reference-fiber").read_text()


def _replace_line(text, old, new):
    assert old in text
    return text.replace(old, new, 1)


def _line_of(text, needle):
    return next(i for i, ln in enumerate(text.splitlines(), start=1) if needle in ln)


def test_shipped_scenarios_load():
    for name in SHIPPED:
        scen = load_scenario(shipped_scenario_path(name))
        assert scen.config.name == name
    assert load_scenario(shipped_scenario_path("reference-hybrid")).config.topology == "hybrid_free_space"
    with pytest.raises(ConfigError):
        shipped_scenario_path("nope")


def test_resolve_config_path(tmp_path):
    assert resolve_config_path("reference-fiber") == shipped_scenario_path("reference-fiber")
    p = tmp_path / "x.yaml"
    assert resolve_config_path(str(p)) == p


def test_reference_values(fiber_scenario):
    cfg = fiber_scenario.config
    assert cfg.rep_rate == 80.0 and cfg.duration == 60.0
    assert cfg.analysis.windows[-1] == 400.0 and cfg.analysis.chi_window == 30.0
    assert cfg.bsm_detector.jitter_fwhm == 19.0
    assert fiber_scenario.landscape.pair_model == "dephased_bell"
    assert fiber_scenario.landscape.star == (0.94, 0.57)
    assert len(cfg.inputs) == 6 and len(cfg.herald_bases) == 3


def test_hash_is_canonical(fiber_text):
    a = parse_scenario(fiber_text)
    b = parse_scenario(fiber_text.replace("# Fiber-only", "# reformatted\n# Fiber-only"))
    assert a.config_hash == b.config_hash
    assert config_hash({"b": 1, "a": [1, 2]}) == config_hash({"a": [1, 2], "b": 1})
    assert canonical_bytes({"b": 1, "a": 2}) == b'{"a":2,"b":1}'
    c = parse_scenario(fiber_text, seed=7)
    assert c.config.seed == 7 and c.config_hash != a.config_hash
    assert a.with_seed(7).config_hash == c.config_hash


def test_unknown_key_reports_line(fiber_text):
    text = _replace_line(fiber_text, "  lifetime_x_ps: 174.0", "  lifetime_x_ps: 174.0\n  lifetim_xx_ps: 3")
    with pytest.raises(ConfigError) as err:
        parse_scenario(text, "s.yaml")
    assert err.value.line == _line_of(text, "lifetim_xx_ps")
    assert "qd1.lifetim_xx_ps" in str(err.value) and str(err.value).startswith(f"s.yaml:{err.value.line}:")


def test_duplicate_key_reports_second_line(fiber_text):
    text = _replace_line(fiber_text, "  lifetime_x_ps: 174.0", "  lifetime_x_ps: 174.0\n  lifetime_x_ps: 150.0")
    with pytest.raises(ConfigError) as err:
        parse_scenario(text, "s.yaml")
    assert err.value.line == _line_of(text, "lifetime_x_ps: 150.0")
    assert err.value.path == ("qd1", "lifetime_x_ps") and "duplicate" in str(err.value)


@pytest.mark.parametrize("old,new,field", [
    ("rep_rate_mhz: 80.0", "rep_rate_mhz: fast", "rep_rate_mhz"),
    ("rep_rate_mhz: 80.0", "rep_rate_mhz: -1", "rep_rate_mhz"),
    ("topology: fiber_only", "topology: satellite", "topology"),
    ("  pps: true", "  pps: maybe", "generation.pps"),
    ("preparation_efficiency: [0.6, 0.6]", "preparation_efficiency: [0.6, 1.6]",
     "operating_point.preparation_efficiency"),
    ("inputs: [H, V, D, A, R, L]", "inputs: [H, V, Q]", "inputs.2"),
    ("schema: 1", "schema: 2", "schema"),
    ("seed: 20250117", "seed: -3", "seed"),
])
def test_bad_values_report_field(fiber_text, old, new, field):
    text = _replace_line(fiber_text, old, new)
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert err.value.path == tuple(int(p) if p.isdigit() else p for p in field.split("."))
    assert err.value.line == _line_of(text, new.strip())


def test_missing_required(fiber_text):
    text = _replace_line(fiber_text, "  exciton_energy_ev: 1.58\n", "")
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert "qd2.exciton_energy_ev" in str(err.value)


def test_yaml_syntax_error():
    with pytest.raises(ConfigError) as err:
        parse_scenario("a: [1, 2\nb: 3\n", "bad.yaml")
    assert err.value.line is not None and "YAML" in str(err.value)


def test_empty_and_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        parse_scenario("")
    with pytest.raises(ConfigError):
        parse_scenario("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "missing.yaml")


def test_fixed_field_and_explicit_cross_dephasing(fiber_text):
    text = _replace_line(fiber_text, "magnetic_field_t: null", "magnetic_field_t: 0.5")
    assert parse_scenario(text).config.magnetic_field == 0.5
    text = _replace_line(fiber_text, "cross_dephasing: {bell_fidelity: 0.94}", "cross_dephasing: 0.8")
    assert parse_scenario(text).config.qd2.cross_dephasing == 0.8


def test_unreachable_bell_fidelity(fiber_text):
    text = _replace_line(fiber_text, "fss_min_uev: 0.3", "fss_min_uev: 30.0")
    with pytest.raises(ConfigError) as err:
        parse_scenario(text)
    assert "cross_dephasing" in str(err.value)


def test_seed_override_bounds(fiber_text):
    with pytest.raises(ConfigError):
        parse_scenario(fiber_text, seed=-1)
