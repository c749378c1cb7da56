"""Extreme quantile estimation from binary strength tests.

The package is organized around one sequential design: split the rare event
"strength below the allowable stress" into a ladder of moderate conditional
events, test a batch of specimens at each rung, refit a tail model on the
accumulated binary outcomes, and climb.  Modules:

* :mod:`tailsplit.distributions` - GPD / Weibull tails on the inverted scale
* :mod:`tailsplit.estimators`    - fits from batched binary data
* :mod:`tailsplit.splitting`     - the ladder itself
* :mod:`tailsplit.baselines`     - staircase, CRM, complete-sample yardstick
* :mod:`tailsplit.simulation`    - seeded Monte Carlo harness
* :mod:`tailsplit.studies`       - frozen benchmark registry
* :mod:`tailsplit.robustness`    - misspecification bounds, goodness of fit
* :mod:`tailsplit.campaign`      - live sessions with event-sourced storage
* :mod:`tailsplit.service`       - HTTP JSON API over the campaign store
* :mod:`tailsplit.cli`           - command line entry point
"""

__version__ = "0.1.0"

from .distributions import (  # noqa: F401
    GpdParams,
    WeibullParams,
    gpd_condition,
    gpd_quantile,
    gpd_survival,
    weibull_quantile,
    weibull_survival,
)
from .splitting import (  # noqa: F401
    Ladder,
    LadderConfig,
    ingest_batch,
    plan_stage_count,
    run_splitting,
)
from .estimators import (  # noqa: F401
    BinaryBatch,
    BinaryDataset,
    enhanced_fit,
    mle_fit,
)
from .simulation import StudySpec, run_study  # noqa: F401
from .campaign import CampaignStore, create_session, record_batch  # noqa: F401
