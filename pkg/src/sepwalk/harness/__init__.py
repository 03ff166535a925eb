from .config import ExperimentConfig, build_config, load_config
from .experiments import (initial_entropy_limit, run_diagnostics,
                          run_entropy_experiment, run_hydro_command,
                          run_importance_sampling, run_lln_experiment,
                          run_rate_command, run_simulate_command)
from .report import Assertion, ExperimentReport
