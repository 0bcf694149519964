"""Sum-rate simulator for coordinated multi-BS rate-splitting downlinks with movable user antennas."""

from .autodiff import Node, NumericFault, ShapeError, backward
from .adam import AdamState, adam_step
from .cmatrix import CMatrix, hermitian_quadratic
from .channel import (
    ChannelRealization,
    PathSet,
    ScenarioConfig,
    channel_vector,
    dump_scenario,
    load_scenario,
    receive_frv,
    sample_scenario,
    transmit_frv,
)
from .errors import ConfigError
from .meta import MetaConfig, OptimizerTrace, inner_cycle, project_power, run
from .networks import SubNetwork, subnet_forward
from .rates import RateReport, Variables, common_sinr, feasibility, private_sinr, rates, sdma_rates
from .baselines import ALL_KINDS, BenchmarkKind, grid_oracle_positions, pga_oracle, run_benchmark

__version__ = "0.1.0"
