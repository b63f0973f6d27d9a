from __future__ import annotations

import math

import pytest

from utils.errors import ConfigError
from utils.scenario import (
    PRESETS,
    PumpMode,
    ScenarioConfig,
    apply_overrides,
    derived_quantities,
    dump_scenario,
    load_scenario,
    parse_config,
    ring_starts,
    validate_scenario,
    with_capacity,
)


def test_parse_config_skips_comments_and_blank_lines():
    text = """
    # whole-line comment
    vessel_radius = 4e-6   # trailing comment

    robot.ring_count=3
    """
    assert parse_config(text) == {'vessel_radius': '4e-6', 'robot.ring_count': '3'}


def test_parse_config_rejects_lines_without_equals():
    with pytest.raises(ConfigError):
        parse_config("vessel_radius 4e-6")


def test_preset_applies_first_and_keys_override_it():
    cfg = load_scenario("preset = high_demand\ntissue.max_power_density = 1e4")
    assert cfg.name == 'high_demand'
    assert cfg.pressure_gradient == 5.0e5
    assert cfg.tissue.max_power_density == 1.0e4


@pytest.mark.parametrize("preset", sorted(PRESETS))
def test_presets_load_by_name(preset):
    cfg = load_scenario(preset)
    assert cfg.name == preset
    assert cfg.oxygen.inlet_concentration == 7.0e22


def test_types_are_coerced():
    cfg = load_scenario(
        "robot.ring_count = 1\nrobot.pumps = no\nrobot.ring_positions = 1e-5\n"
        "rbc.saturation_average = cross_section\nmesh.face_spacing = auto"
    )
    assert cfg.robot.ring_count == 1
    assert cfg.robot.pumps is False
    assert cfg.robot.ring_positions == (1.0e-5,)
    assert cfg.rbc.saturation_average.value == 'cross_section'
    assert cfg.mesh.face_spacing is None


def test_empty_document_is_rejected():
    with pytest.raises(ConfigError):
        load_scenario("# nothing here\n")


@pytest.mark.parametrize("text, key", [
    ("vessel_radius = -1e-6", 'vessel_radius'),
    ("no_such_key = 1", 'no_such_key'),
    ("robot.colour = red", 'robot.colour'),
    ("hematocrit = 1.2", 'hematocrit'),
    ("tissue_radius = 3e-6", 'tissue_radius'),
    ("robot.size = 5e-6", 'robot.size'),
    ("robot.ring_count = 200", 'robot.ring_count'),
    ("robot.ring_count = 2.5", 'robot.ring_count'),
    ("robot.volume = 1e-18", 'robot.volume'),
    ("robot.pumps = false\nrobot.pump_mode = duty_cycle", 'robot.pump_mode'),
    ("preset = resting", 'preset'),
])
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as excinfo:
        load_scenario(text)
    assert excinfo.value.key == key
    assert key in str(excinfo.value)


def test_ring_positions_must_not_overlap():
    with pytest.raises(ConfigError):
        load_scenario("robot.ring_count = 2\nrobot.ring_positions = 1e-5, 1.05e-5")


def test_dump_then_load_is_exact(low_cfg):
    cfg = apply_overrides(low_cfg, {'robot.ring_count': 3, 'robot.ring_positions': (1e-5, 3e-5, 6e-5),
                                    'robot.pump_mode': PumpMode.DUTY_CYCLE})
    assert load_scenario(dump_scenario(cfg)) == cfg


def test_apply_overrides_rejects_unknown_keys(default_cfg):
    with pytest.raises(ConfigError):
        apply_overrides(default_cfg, {'robot.colour': 'red'})


def test_with_capacity_switches_site_density(default_cfg):
    assert with_capacity(default_cfg, 'low').robot.site_density == 6.0e19
    assert with_capacity(default_cfg, 'high').robot.site_density == 3.0e21
    with pytest.raises(ConfigError):
        with_capacity(default_cfg, 'medium')


def test_derived_quantities_of_the_default_scenario(default_cfg):
    derived = derived_quantities(default_cfg)
    assert derived.mean_velocity == pytest.approx(2.0e-4)
    assert derived.robot_volume == pytest.approx(math.pi * (16e-12 - 9e-12) * 1e-6 / 20)
    assert derived.max_robot_uptake == pytest.approx(6.0 * derived.site_count * 1.0e6)
    assert derived.diffusion_length == pytest.approx(1.0e-5)
    assert derived.face_spacing == 1.0e-7
    assert 0.0 < derived.inlet_gap < default_cfg.vessel_radius


def test_single_ring_gets_finer_face_spacing(default_cfg):
    one = apply_overrides(default_cfg, {'robot.ring_count': 1})
    assert derived_quantities(one).face_spacing == 1.0e-8


def test_zero_flow_has_infinite_diffusion_length(default_cfg):
    still = apply_overrides(default_cfg, {'pressure_gradient': 0.0})
    assert math.isinf(derived_quantities(still).diffusion_length)


def test_ringset_is_centred(default_cfg):
    starts = ring_starts(default_cfg)
    assert len(starts) == 10
    assert starts[0] == pytest.approx(4.5e-5)
    assert starts[-1] + default_cfg.robot.size == pytest.approx(5.5e-5)


def test_default_config_is_valid():
    validate_scenario(ScenarioConfig())
