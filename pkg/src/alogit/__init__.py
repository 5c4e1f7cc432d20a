"""Active learning for binary logistic classification with adaptive
shrinkage variable selection and a sequential stopping rule."""

__version__ = "0.1.0"

from .learner import (  # noqa: F401
    LearnerConfig,
    Pool,
    ReplayOracle,
    RunReport,
    accuracy,
    auc,
    run,
)
from .selection import SelectionConfig  # noqa: F401
from .shrinkage import ShrinkageConfig  # noqa: F401
from .stopping import StoppingConfig  # noqa: F401
