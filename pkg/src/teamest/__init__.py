"""Team-optimal distributed MMSE estimation over agent networks."""
from .baseline import drls_run, relative_variance_combiner
from .disclosure import span_sufficiency, span_table
from .harness import ExperimentConfig, compare_report, load_config, run_experiment
from .model import WorldModel, folded_normal_stds, random_world, sample_trace, scalar_model
from .oedol import oedol_run, oedol_schedule, write_message_log
from .oracle import batch_mmse, odol_run, odol_schedule, oracle_information_set
from .sdol import sdol_run, sdol_weights
from .topology import NetworkTopology, hop_structure, is_cell_tree, is_tree, make_topology, spanning_tree

__version__ = "0.1.0"
