"""Square-root market impact: model, simulator, estimator, fit and cost engine."""

from ._impactlab import *  # noqa: F401,F403
from ._impactlab import __version__  # noqa: F401
