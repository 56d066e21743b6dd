from .mesh import DeviceMesh, ShardingPlan, validate_plan
from .specs import ModelSpec, ClusterSpec, llama_model
from .presets import preset, PRESET_NAMES, InfeasiblePresetError
from .partition import partition_tensors_greedy
from .cost import CostConfig, CostModel, total_comm_time, memory_breakdown
from .planner import Planner, InfeasiblePlanError
from .overlap import SimConfig, OverlapSimulator, build_schedule
from .timeline import simulate_step, bubble_report
from .placement import Topology, assign_nodes, placed_collective_time

from shardsim.comm import BandwidthProfile, RingModel, AlphaBetaParams
from shardsim.comm import synthetic_profile, calibrated_profile

from os import environ, path

param_dir = environ.get('SHARDSIM_PARAMETERS', path.join(path.dirname(path.dirname(path.abspath(__file__))),'param'))

from shardsim.version import shardsim_version
