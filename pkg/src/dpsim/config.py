"""System and algorithm parameters, config file parsing, and validation.

Powers cross the config boundary in dBm and are exposed in watts through
derived properties; wavelength is derived from the carrier frequency unless
an explicit override is given. Layer spacings are always derived from the
stack thickness and layer count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

SPEED_OF_LIGHT = 299_792_458.0  # m/s

STACK_MODES = ("dual_polarized", "tied_sim_baseline")
CORRELATION_PLACEMENTS = ("block_diagonal", "replicated")


class ConfigError(ValueError):
    """Raised on malformed config text or violated parameter constraints."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def is_perfect_square(n: int) -> bool:
    if n < 0:
        return False
    r = math.isqrt(n)
    return r * r == n


@dataclass(frozen=True)
class SystemConfig:
    """Physical and link-level parameters of the dual-polarized stack system.

    ``transmit_power`` and ``noise_power`` are in dBm (use the ``*_w``
    properties for watts). ``wavelength`` is an optional explicit override;
    when None it is derived as c / carrier_frequency. ``unit_spacing`` is in
    meters and defaults to half the resolved wavelength.
    """

    streams_per_pol: int = 3
    tx_layers: int = 3
    rx_layers: int = 3
    tx_units_per_layer: int = 100
    rx_units_per_layer: int = 100
    carrier_frequency: float = 28e9
    wavelength: float | None = None
    unit_spacing: float | None = None
    tx_thickness: float = 0.05
    rx_thickness: float = 0.05
    link_distance: float = 250.0
    transmit_power: float = 20.0
    noise_power: float = -110.0
    pol_conversion_ratio: float = 0.2
    pathloss_ref_distance: float = 1.0
    pathloss_exponent: float = 3.5
    shadowing_std: float = 9.0
    stack_mode: str = "dual_polarized"
    correlation_placement: str = "block_diagonal"

    @property
    def streams_total(self) -> int:
        return 2 * self.streams_per_pol

    @property
    def resolved_wavelength(self) -> float:
        if self.wavelength is not None:
            return self.wavelength
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def resolved_unit_spacing(self) -> float:
        if self.unit_spacing is not None:
            return self.unit_spacing
        return self.resolved_wavelength / 2.0

    @property
    def tx_layer_spacing(self) -> float:
        return self.tx_thickness / self.tx_layers

    @property
    def rx_layer_spacing(self) -> float:
        return self.rx_thickness / self.rx_layers

    @property
    def transmit_power_w(self) -> float:
        return dbm_to_watts(self.transmit_power)

    @property
    def noise_power_w(self) -> float:
        return dbm_to_watts(self.noise_power)


@dataclass(frozen=True)
class AlgoConfig:
    """Hyperparameters of the layer-by-layer descent and the campaign driver."""

    init_candidates: int = 100
    max_epochs: int = 20
    initial_lr: float = 0.1
    decay: float = 0.5
    monte_carlo_trials: int = 100
    initial_alpha: complex = 1 + 0j
    master_seed: int = 0


_SYS_FIELDS = {f.name: f for f in fields(SystemConfig)}
_ALGO_FIELDS = {f.name: f for f in fields(AlgoConfig)}

_INT_KEYS = {
    "streams_per_pol", "tx_layers", "rx_layers",
    "tx_units_per_layer", "rx_units_per_layer",
    "init_candidates", "max_epochs", "monte_carlo_trials", "master_seed",
}
_STR_KEYS = {"stack_mode", "correlation_placement"}
_COMPLEX_KEYS = {"initial_alpha"}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        return int(raw)
    if key in _COMPLEX_KEYS:
        return complex(raw.replace(" ", ""))
    return float(raw)


def parse_config(text: str) -> tuple[SystemConfig, AlgoConfig]:
    """Parse ``key = value`` lines ('#' starts a comment) into validated records.

    Omitted keys take their defaults; unknown and duplicate keys are rejected
    with the offending line number.
    """
    sys_kwargs: dict = {}
    algo_kwargs: dict = {}
    seen: set[str] = set()
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key in seen:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        seen.add(key)
        target = None
        if key in _SYS_FIELDS:
            target = sys_kwargs
        elif key in _ALGO_FIELDS:
            target = algo_kwargs
        else:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            target[key] = _convert(key, raw)
        except ValueError:
            errors.append(f"line {lineno}: invalid value {raw.strip()!r} for {key!r}")
    if errors:
        raise ConfigError(errors)
    return validate(SystemConfig(**sys_kwargs), AlgoConfig(**algo_kwargs))


def _render_value(value) -> str:
    if isinstance(value, str):
        return value
    return repr(value)


def render_config(sys_cfg: SystemConfig, algo_cfg: AlgoConfig) -> str:
    """Render both records back to config text; parse(render(..)) round-trips."""
    lines = []
    for f in fields(SystemConfig):
        value = getattr(sys_cfg, f.name)
        if value is None:
            continue
        lines.append(f"{f.name} = {_render_value(value)}")
    for f in fields(AlgoConfig):
        lines.append(f"{f.name} = {_render_value(getattr(algo_cfg, f.name))}")
    return "\n".join(lines) + "\n"


def validate(sys_cfg: SystemConfig, algo_cfg: AlgoConfig) -> tuple[SystemConfig, AlgoConfig]:
    """Check every parameter constraint; collects all violations into one error."""
    errors: list[str] = []
    s = sys_cfg

    if s.streams_per_pol < 1:
        errors.append("streams_per_pol must be >= 1")
    if s.tx_layers < 1:
        errors.append("tx_layers must be >= 1")
    if s.rx_layers < 1:
        errors.append("rx_layers must be >= 1")
    for name, count in (("tx_units_per_layer", s.tx_units_per_layer),
                        ("rx_units_per_layer", s.rx_units_per_layer)):
        if count < 1:
            errors.append(f"{name} must be >= 1")
        elif not is_perfect_square(count):
            errors.append(f"{name}: units_per_layer must be a perfect square")
    if s.streams_per_pol >= 1:
        if s.tx_units_per_layer < s.streams_per_pol:
            errors.append("M ≥ S violated")
        if s.rx_units_per_layer < s.streams_per_pol:
            errors.append("N ≥ S violated")
    if not (0.0 <= s.pol_conversion_ratio <= 1.0):
        errors.append("pol_conversion_ratio out of [0,1]")
    for name in ("carrier_frequency", "tx_thickness", "rx_thickness",
                 "link_distance", "pathloss_ref_distance", "pathloss_exponent"):
        if getattr(s, name) <= 0:
            errors.append(f"{name} must be > 0")
    if s.wavelength is not None and s.wavelength <= 0:
        errors.append("wavelength must be > 0")
    if s.unit_spacing is not None and s.unit_spacing <= 0:
        errors.append("unit_spacing must be > 0")
    if s.shadowing_std < 0:
        errors.append("shadowing_std must be >= 0")
    if s.stack_mode not in STACK_MODES:
        errors.append(f"stack_mode must be one of {STACK_MODES}")
    if s.correlation_placement not in CORRELATION_PLACEMENTS:
        errors.append(f"correlation_placement must be one of {CORRELATION_PLACEMENTS}")

    a = algo_cfg
    if a.init_candidates < 1:
        errors.append("init_candidates must be >= 1")
    if a.max_epochs < 1:
        errors.append("max_epochs must be >= 1")
    if a.initial_lr <= 0:
        errors.append("initial_lr must be > 0")
    if not (0.0 < a.decay < 1.0):
        errors.append("decay must be in (0,1)")
    if a.monte_carlo_trials < 1:
        errors.append("monte_carlo_trials must be >= 1")
    if not (0 <= a.master_seed < 2 ** 64):
        errors.append("master_seed must be a 64-bit unsigned integer")

    if errors:
        raise ConfigError(errors)
    return sys_cfg, algo_cfg


def with_overrides(sys_cfg: SystemConfig, algo_cfg: AlgoConfig,
                   overrides: dict) -> tuple[SystemConfig, AlgoConfig]:
    """Apply {key: value-or-string} overrides to the matching record and revalidate."""
    sys_kwargs: dict = {}
    algo_kwargs: dict = {}
    for key, value in overrides.items():
        if isinstance(value, str):
            value = _convert(key, value)
        if key in _SYS_FIELDS:
            sys_kwargs[key] = value
        elif key in _ALGO_FIELDS:
            algo_kwargs[key] = value
        else:
            raise ConfigError([f"unknown key {key!r}"])
    if sys_kwargs:
        sys_cfg = replace(sys_cfg, **sys_kwargs)
    if algo_kwargs:
        algo_cfg = replace(algo_cfg, **algo_kwargs)
    return validate(sys_cfg, algo_cfg)
