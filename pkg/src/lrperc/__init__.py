"""Long-range percolation on finite boxes: sampling, clusters, exact oracles
and Monte Carlo audits of cluster-size and two-point bounds."""
from .errors import (ConfigError, DomainError, InsufficientDataError, NoReferenceData,
                     ResourceError, SearchError)
from .kernel import (DisplacementClasses, ExponentBounds, Kernel, TorusBox, displacement_classes,
                     edge_probability, exponent_bounds, kernel_eval, reference_table)
from .sampler import Configuration, sample_configuration, sample_naive
from .clusters import ClusterForest, ClusterStats, build_clusters, two_point_window_sum, window_stats
from .ensemble import Ensemble
from .partition import PartitionResult, partition_k, split_two, verify_partition
from .ghost import (ExplorationTrace, GhostParams, GoodWeight, explore_cluster, fluctuation,
                    two_arm_indicator, two_ghost_audit)
from .oracle import TinyGraph, enumerate_measure, exact_tables
from .estimators import (EstimateRecord, beta_c_search, bound_audit, exponent_fit,
                         m_typical_estimate, tail_estimate, two_point_avg_estimate)

__version__ = "0.1.0"
