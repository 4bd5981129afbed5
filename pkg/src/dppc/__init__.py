"""Determinantal point processes and probabilistic circuits in one place."""

from .circuit import (Circuit, LeafConfig, analyze, evaluate, evaluate_config, map_inference, marginal,
                      parse, serialize, smooth_transform)
from .constructions import (R1PModel, SpanningTreeDPP, det_circuit, diag_kernel_of, factorized_circuit,
                            r1p_circuit, spanning_tree_dpp, symbolic_kernel_compile, witness_kernel)
from .dpp import (LEnsemble, MarginalDPP, conditional_prob, count_distinct_conditionals, general_marginal,
                  marginal_kernel, marginal_prob, prob, random_lensemble)
from .errors import (DimensionError, DivergenceError, DppcError, ParseError, SingularityError, SizeGuardError,
                     StructureError)
from .subsets import Subset

__version__ = "0.1.0"
