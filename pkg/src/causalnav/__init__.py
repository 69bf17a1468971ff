"""Causality-aware warehouse robot planning: simulation, learning, inference,
routing, and an ablation benchmark harness."""

from .world import (Waypoint, WaypointGraph, ScenarioSchedule, TimeSlot, ScenarioError,
                    load_scenario, load_scenario_file, pairwise_distance, coverage_route)
from .simulation import (BatteryParams, SimParams, TimeSeriesLog, World, WorkerCrowd,
                         battery_delta, apply_battery, waypoint_density, classify_proxemics,
                         detect_collision, sample_goal, generate_training_log)
from .pipeline import (DiscretizationSchema, ProcessedDataset, QuantileDiscretizer,
                       build_dataset, derive_series, elbow_bins, nyquist_subsample,
                       quantile_discretize, spectral_bandwidth)
from .graphs import (Edge, LaggedDag, StructureLearner, discover_structure,
                     edge_set_f1, ground_truth_model)
from .inference import (CausalInferenceEngine, DiscreteCpd, QuerySpec, ZeroProbabilityError,
                        do_query, fit_mle)
from .planning import (ArcEstimate, ArcEstimates, DecisionPolicy, HeuristicWeights,
                       NoPathError, PathPlan, TaskDecision, decide_task, estimate_arcs,
                       plan_path)
from .experiments import (ApproachConfig, MetricsReport, TaskOutcome, approach_registry,
                          compute_metrics, run_ablation, run_experiment,
                          scalability_bench, sensitivity_sweep)
from .stats import StatTestResult, chi_square_2x2, mann_whitney_u, negative_binomial_lrt, stat_test

__version__ = "0.1.0"
