"""Monte Carlo risk analysis of wastewater collection networks.

Six models are combined from two network granularities (full, arterial) and
three analysis fidelities (dynamic wave, kinematic wave, connectivity).
"""

from .analysis import (CapacityBasis, Fidelity, PathIndex, connected_nodes, flagged_conduits,
                       pm_connectivity, pm_flow, scenario_pm)
from .compare import ComparisonReport, average_pm, mae, run_matrix
from .damage import (DamagedNetwork, DamageModel, DamageScenario, DamageState,
                     apply_scenario, sample_scenario)
from .hydraulics import route_dynamic, route_kinematic
from .hydraulics.routing import RoutingResult, SolverConfig
from .inp import parse_inp, read_inp, write_geojson, write_inp, write_results_csv
from .montecarlo import (ALL_MODELS, ConvergenceConfig, Granularity, ModelRunResult, ModelSpec,
                         NodePmEstimate, delta_pm, expand_to_full, run_model)
from .network import (ArterialMapping, Conduit, Junction, Network, NetworkError, Outfall, Pump,
                      StorageTank, downstream_path, extract_arterial, validate)
from .synth import SynthesisParams, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ALL_MODELS", "ArterialMapping", "CapacityBasis", "ComparisonReport", "Conduit",
    "ConvergenceConfig", "DamageModel", "DamageScenario", "DamageState", "DamagedNetwork",
    "Fidelity", "Granularity", "Junction", "ModelRunResult", "ModelSpec", "Network",
    "NetworkError", "NodePmEstimate", "Outfall", "PathIndex", "Pump", "RoutingResult",
    "SolverConfig", "StorageTank", "SynthesisParams", "apply_scenario", "average_pm",
    "connected_nodes", "delta_pm", "downstream_path", "expand_to_full", "extract_arterial",
    "flagged_conduits", "generate_synthetic", "mae", "parse_inp", "pm_connectivity", "pm_flow",
    "read_inp", "route_dynamic", "route_kinematic", "run_matrix", "run_model",
    "sample_scenario", "scenario_pm", "validate", "write_geojson", "write_inp",
    "write_results_csv",
]
