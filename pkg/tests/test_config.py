import math

import pytest

from dpsim.config import (AlgoConfig, ConfigError, SPEED_OF_LIGHT, SystemConfig,
                          dbm_to_watts, parse_config, render_config, validate,
                          watts_to_dbm, with_overrides)

TABLE_DOC = """
# transceiver
streams_per_pol = 3          # 6 data streams total
tx_layers = 3
rx_layers = 3
tx_units_per_layer = 100
rx_units_per_layer = 100
tx_thickness = 0.05
rx_thickness = 0.05
link_distance = 250.0
transmit_power = 20.0        # dBm
noise_power = -110.0         # dBm
carrier_frequency = 28e9
pol_conversion_ratio = 0.2
pathloss_ref_distance = 1.0
pathloss_exponent = 3.5
shadowing_std = 9.0

# optimizer
init_candidates = 100
max_epochs = 20
initial_lr = 0.1
decay = 0.5
monte_carlo_trials = 100
initial_alpha = 1+0j
"""


def test_parse_reference_document():
    sys_cfg, algo_cfg = parse_config(TABLE_DOC)
    assert sys_cfg.streams_per_pol == 3
    assert sys_cfg.streams_total == 6
    assert sys_cfg.tx_layer_spacing == 0.05 / 3
    assert sys_cfg.rx_layer_spacing == 0.05 / 3
    assert sys_cfg.transmit_power_w == 0.1
    assert sys_cfg.noise_power_w == 1e-14
    assert sys_cfg.resolved_wavelength == SPEED_OF_LIGHT / 28e9
    assert sys_cfg.resolved_unit_spacing == sys_cfg.resolved_wavelength / 2
    assert algo_cfg.init_candidates == 100
    assert algo_cfg.max_epochs == 20
    assert algo_cfg.initial_lr == 0.1
    assert algo_cfg.decay == 0.5
    assert algo_cfg.initial_alpha == 1 + 0j


def test_empty_document_equals_reference():
    assert parse_config("") == parse_config(TABLE_DOC)
    assert parse_config("") == (SystemConfig(), AlgoConfig())


def test_conversion_ratio_out_of_range():
    with pytest.raises(ConfigError, match=r"pol_conversion_ratio out of \[0,1\]"):
        parse_config("pol_conversion_ratio = 1.3")


def test_dbm_watt_conversion():
    assert dbm_to_watts(20.0) == 0.1
    assert dbm_to_watts(-110.0) == 1e-14
    assert watts_to_dbm(0.1) == pytest.approx(20.0, abs=1e-12)


def test_wavelength_override():
    sys_cfg, _ = parse_config("wavelength = 10.7e-3")
    assert sys_cfg.resolved_wavelength == 10.7e-3
    assert sys_cfg.resolved_unit_spacing == 10.7e-3 / 2


def test_validate_reference_ok():
    sys_cfg, algo_cfg = SystemConfig(), AlgoConfig()
    assert validate(sys_cfg, algo_cfg) == (sys_cfg, algo_cfg)


def test_validate_non_square_units():
    with pytest.raises(ConfigError, match="units_per_layer must be a perfect square"):
        validate(SystemConfig(tx_units_per_layer=2, streams_per_pol=1), AlgoConfig())


def test_validate_too_few_units_for_streams():
    # 2 is both non-square and below the stream count: both errors collected
    with pytest.raises(ConfigError) as err:
        validate(SystemConfig(rx_units_per_layer=2), AlgoConfig())
    assert "units_per_layer must be a perfect square" in str(err.value)
    assert "N ≥ S violated" in str(err.value)
    with pytest.raises(ConfigError, match="M ≥ S violated"):
        validate(SystemConfig(tx_units_per_layer=1, rx_units_per_layer=1,
                              streams_per_pol=2), AlgoConfig())


def test_validate_decay_range():
    with pytest.raises(ConfigError, match=r"decay must be in \(0,1\)"):
        validate(SystemConfig(), AlgoConfig(decay=1.0))
    with pytest.raises(ConfigError, match=r"decay must be in \(0,1\)"):
        validate(SystemConfig(), AlgoConfig(decay=0.0))


def test_parse_error_line_numbers():
    with pytest.raises(ConfigError, match="line 2: unknown key 'bogus'"):
        parse_config("tx_layers = 3\nbogus = 1\n")
    with pytest.raises(ConfigError, match="line 1: expected 'key = value'"):
        parse_config("not a key value line")
    with pytest.raises(ConfigError, match="line 3: duplicate key 'tx_layers'"):
        parse_config("tx_layers = 3\n\ntx_layers = 2\n")
    with pytest.raises(ConfigError, match="line 1: invalid value 'abc'"):
        parse_config("tx_layers = abc")


def test_multiple_validation_errors_collected():
    with pytest.raises(ConfigError) as err:
        parse_config("pol_conversion_ratio = 2.0\nlink_distance = -1.0")
    assert len(err.value.errors) == 2


@pytest.mark.parametrize("doc", [
    "",
    "wavelength = 10.7e-3\nunit_spacing = 5.35e-3",
    ("streams_per_pol = 2\ntx_units_per_layer = 49\nrx_units_per_layer = 49\n"
     "stack_mode = tied_sim_baseline\ninitial_alpha = 0.5-0.25j\nmaster_seed = 987\n"
     "transmit_power = 17.5\nshadowing_std = 0.0"),
])
def test_render_parse_round_trip(doc):
    pair = parse_config(doc)
    assert parse_config(render_config(*pair)) == pair


def test_with_overrides_converts_strings():
    sys_cfg, algo_cfg = with_overrides(SystemConfig(), AlgoConfig(),
                                       {"tx_layers": "2", "transmit_power": "15",
                                        "stack_mode": "tied_sim_baseline"})
    assert sys_cfg.tx_layers == 2
    assert sys_cfg.transmit_power == 15.0
    assert sys_cfg.stack_mode == "tied_sim_baseline"
    assert algo_cfg == AlgoConfig()
    with pytest.raises(ConfigError, match="unknown key"):
        with_overrides(SystemConfig(), AlgoConfig(), {"nope": 1})


def test_invalid_mode_strings():
    with pytest.raises(ConfigError, match="stack_mode"):
        parse_config("stack_mode = linear")
    with pytest.raises(ConfigError, match="correlation_placement"):
        parse_config("correlation_placement = dense")
