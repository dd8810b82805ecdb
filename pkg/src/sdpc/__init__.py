"""Learning structured-decomposable probabilistic circuits from binary data."""
from .circuit import Circuit, StructureReport, check_structure, compile_clt, evaluate_classical, read_circuit, write_circuit
from .cltree import ChowLiuTree, estimate_mi, learn_clt, maximum_spanning_tree, root_at_jordan_center
from .dataset import Dataset, bag_resample, load_dataset, save_dataset
from .ensemble import SharedMixture, bem_fit, em_fit
from .flows import FlowMatrix, aggregate_flows, compute_flows, log_likelihood, mixture_log_likelihood, mle_parameters
from .search import SearchConfig, split, learn_circuit
from .vtree import Vtree, validate_vtree, vtree_from_clt

__version__ = "0.1.0"
