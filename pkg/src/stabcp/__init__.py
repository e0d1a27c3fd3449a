"""stabcp: distribution-free regression intervals from a single model fit.

A conformal-prediction toolkit that traps the conformity function between two
envelopes computable from one model fit plus per-point algorithmic-stability
bounds.  Includes split/oracle/root-finding/grid baselines and a benchmark
harness reporting coverage, interval length, and normalized timing.
"""

from .core import (
    PredictionSet,
    ScoreFunction,
    TabularDataset,
    conformal_set_grid,
    conformity_scores,
    default_candidate_grid,
    pi_exact,
    pi_from_scores,
    rank,
)
from .conformal import (
    ConformityBounds,
    MethodReport,
    PiBounds,
    anchor_bounds,
    anchored_upper_interval,
    batch_pi_bounds,
    default_anchor,
    gap_profile,
    grid_cp,
    interpolated_cp,
    oracle_cp,
    pi_bounds,
    root_cp,
    split_cp,
    split_pi,
    stab_cp_bisection,
    stab_cp_interval,
)
from .data import (
    GeneratorSpec,
    StandardizeTransform,
    gen_friedman1,
    gen_linear_gaussian,
    generate,
    load_csv,
    read_csv_columns,
    save_csv,
    split,
    standardize,
)
from .errors import DataError, InvalidInputError, NotFittedError, NumericalError
from .models import (
    InterpolatedModel,
    LadRidgeModel,
    PretrainedLinearModel,
    RegularityConstants,
    RidgeModel,
    build_interpolated_model,
    fit_lad_ridge,
    fit_ridge,
    predict,
    ridge_coefficients,
)
from .stability import (
    StabilityBounds,
    augmented_row_norms,
    bound_loss_C,
    load_tau_csv,
    scaled_absolute_loss,
    scaled_squared_loss,
    tau_auto,
    tau_interpolated,
    tau_linear_exact,
    tau_regularized_lipschitz,
    tau_regularized_smooth,
    tau_sgd_heuristic,
    tau_strongly_convex,
    tau_user_supplied,
)

__version__ = "0.1.0"
