"""Where the stability bounds come from, and how tight each recipe is.

Builds every bound the package knows for one dataset and checks them against
the measured worst-case score deviations, illustrating which are sound
guarantees and which are order-of-magnitude heuristics.
"""

import numpy as np

from stabcp import (
    GeneratorSpec,
    LadRidgeModel,
    RidgeModel,
    ScoreFunction,
    augmented_row_norms,
    bound_loss_C,
    gen_linear_gaussian,
    scaled_squared_loss,
    tau_linear_exact,
    tau_regularized_lipschitz,
    tau_regularized_smooth,
    tau_sgd_heuristic,
)

score = ScoreFunction.absolute_residual()
dataset = gen_linear_gaussian(GeneratorSpec("linear-gaussian", 60, 5, 1.0, seed=23))
lam = 0.5
z_range = dataset.target_range()
norms = augmented_row_norms(dataset)
m = dataset.n + 1

ridge = RidgeModel(lam)
lad = LadRidgeModel(lam, solver_tol=1e-10)


def measured_deviation(spec):
    """Worst per-row prediction movement across the candidate range."""
    zs = np.linspace(z_range[0], z_range[1], 120)
    preds = np.vstack([spec.fit(dataset, z).row_predictions for z in zs])
    return preds.max(axis=0) - preds.min(axis=0)


print(f"dataset: n={dataset.n}, p={dataset.p}, candidate range "
      f"[{z_range[0]:+.2f}, {z_range[1]:+.2f}]\n")

# ridge: exact affine bound and the smooth-loss bound
ridge_fit = ridge.fit(dataset, 0.0)
exact = tau_linear_exact(ridge_fit, dataset, z_range=z_range)
C = bound_loss_C(dataset, scaled_squared_loss, z_range=z_range)
smooth = tau_regularized_smooth(score.gamma, 2.0 / m, C, 1.0, 2.0 * lam, norms)
ridge_dev = measured_deviation(ridge)

# L1 model: the Lipschitz-loss bound with the replace-one constant
constants = lad.regularity(dataset)
lipschitz = tau_regularized_lipschitz(score.gamma, constants.rho, constants.l_phi,
                                      constants.lambda_sc, norms)
lad_dev = measured_deviation(lad)

# the iteration-count heuristic, marked unsafe
heuristic = tau_sgd_heuristic(dataset.n // 10, norms, dataset.n)

print(f"{'bound':<22} {'safe':<6} {'max tau':>9} {'max measured':>13} {'slack':>7}")
for name, bounds, dev in [
    ("linear-exact (ridge)", exact, ridge_dev),
    ("smooth loss (ridge)", smooth, ridge_dev),
    ("lipschitz loss (L1)", lipschitz, lad_dev),
]:
    ratio = float(np.max(dev / np.maximum(bounds.tau, 1e-300)))
    print(f"{name:<22} {str(bounds.coverage_safe):<6} {bounds.tau.max():9.4f} "
          f"{dev.max():13.4f} {1 / ratio:7.2f}x")
print(f"{'sgd heuristic':<22} {str(heuristic.coverage_safe):<6} "
      f"{heuristic.tau.max():9.4f} {'n/a':>13} {'n/a':>7}")

print("\nSound bounds dominate every measured deviation; the exact affine")
print("bound is tight at the range endpoints. The heuristic carries no")
print("guarantee and is refused by the CLI unless explicitly allowed.")
