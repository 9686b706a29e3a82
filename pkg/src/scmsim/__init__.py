"""Deterministic simulator for sensitivity-curve maximization attacks on
robust aggregation in decentralized learning."""

__version__ = "0.1.0"

from .estimators import (  # noqa: F401
    AggregatorKind,
    AggregatorSpec,
    aggregate,
    estimate,
    m_estimate,
    mad,
    median,
    psi,
    sample_mean,
    trimmed_mean,
    tuned_aggregators,
)
from .sensitivity import (  # noqa: F401
    SCTable,
    max_sc_numeric,
    sc_sweep,
    sensitivity_curve,
    sensitivity_curve_multi,
)
from .attacks import (  # noqa: F401
    AttackKind,
    AttackSpec,
    CraftingContext,
    craft_attack,
    psi_argmax,
)
from .topology import (  # noqa: F401
    NetworkTopology,
    TopologyError,
    assign_roles,
    erdos_renyi,
    generate_topology,
)
from .simulation import (  # noqa: F401
    ExperimentTrace,
    LearningConfig,
    LinearModelConfig,
    draw_true_weights,
    huber_grad_factor,
    huber_loss,
    run_experiment,
)
