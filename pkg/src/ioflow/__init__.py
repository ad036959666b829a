"""Google-matrix analysis of country x sector input-output flow networks."""

from .gmatrix import GoogleOperator, apply_google, build_stochastic
from .ingest import FlowTensor, compute_values, parse_flow_table, zero_intra_country
from .ranking import gpvm, gpvm_ranks, pagerank, two_d_rank
from .registry import load_registries
from .sensitivity import apply_shock, balance, balance_derivative, tensor_balance

__version__ = "0.1.0"
