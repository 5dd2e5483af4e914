"""Fair panel selection with proportional representation guarantees."""

from .allocation import FractionalAllocation, ball_quotas_csv, export_ball_quotas, fractional_allocation
from .audit import (
    AuditReport,
    CoreOracle,
    CoreViolationResult,
    InstanceTooLarge,
    PartitionResult,
    UniformExAnte,
    audit_panel,
    chu_vandermonde_check,
    exact_core_violation,
    exante_exact,
    exante_monte_carlo,
    exante_uniform_bound,
    expected_cost_core_violation,
    opt_social_cost,
    partition_by_topq,
    social_cost,
)
from .birkhoff import (
    PanelDistribution,
    SquareBistochastic,
    birkhoff_decompose,
    complete_bistochastic,
    decompose_allocation,
    fgc_distribution,
    sample_panel,
)
from .fixtures import Fixture, fixture
from .metric import (
    DatasetError,
    FeatureSchema,
    MetricError,
    MetricInstance,
    ball,
    build_metric,
    load_dataset,
    load_distance_matrix,
    preference_count,
    q_cost,
    top_q,
)
from .selectors import SelectorConfig, afgc_distribution, afgc_sample, uniform_panel, uniform_sample

__version__ = "0.1.0"
