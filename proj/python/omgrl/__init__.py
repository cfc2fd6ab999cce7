"""Python access to the omgrl core: rewards, synthetic data and the CLI."""

from ._omgrl import (
    ArgumentError,
    NumericError,
    feature_names,
    generate_dataset,
    rp_reward,
    run,
    spearman,
)

__all__ = [
    "ArgumentError",
    "NumericError",
    "feature_names",
    "generate_dataset",
    "rp_reward",
    "run",
    "spearman",
]
