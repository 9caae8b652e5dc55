"""Dual-polarized stacked-metasurface holographic MIMO toolkit."""

__version__ = "0.1.0"

from .config import AlgoConfig, ConfigError, SystemConfig, parse_config, render_config, validate
from .propagation import (LayerGeometry, PropagationSet, build_layer_grid,
                          build_propagation, diffraction_matrix)
from .channel import (ChannelRealization, CorrelationPair, correlation_for_config,
                      correlation_matrix, draw_channel, path_loss_db, psd_sqrt,
                      svd_target)
from .stack import PhaseStack, assemble_rx, assemble_tx, end_to_end, simulate_reception
from .optimizer import (ObjectiveContext, OptTrace, grad_rx_layer, grad_tx_layer,
                        init_multistart, normalize_gradient, objective, run_lgd,
                        update_alpha)
from .metrics import (MetricsReport, PowerAllocation, energy_efficiency, nmse,
                      se_upper_bound, spectral_efficiency, waterfill)
from .experiments import (ExperimentReport, ExperimentSpec, derive_trial_rng,
                          emit, load_report, run_experiment)
