"""Small Monte Carlo study: does the tuning-aware variance track the actual
replication-to-replication variability of the tuned estimator?

Replicates the two-class Gaussian mixture design: a penalized logistic model
is tuned by the Brier score of a sub-model that predicts from x1 alone, so the
penalty genuinely matters and the classic pointwise variance undershoots.

Run:  python3 demos/simulation_study.py   (about a minute)
"""

import numpy as np

from tunevar import (
    DGPKind,
    DGPSpec,
    Method,
    PipelineConfig,
    RidgeLogisticModel,
    replicate,
)


def main():
    model = RidgeLogisticModel(n_covariates=2, lambda_domain=(0.0, 0.1))
    config = PipelineConfig(
        model=model.spec(),
        loss=model.brier_loss(predictor_covariates=[0]),
        method=Method.CV_FAST,
        grid_size=12,
    )

    print(f"{'C':>4} {'empirical':>10} {'V1 (median)':>12} {'V2 (median)':>12} "
          f"{'boundary fits':>14}")
    for i, C in enumerate((0.0, 1.0, 2.0)):
        dgp = DGPSpec(DGPKind.GAUSSMIX_C, n=100, params={"C": C})
        summary = replicate(dgp, config, B=100, seed=40 + i)
        emp = summary.empirical_variance[2, 2]
        v1 = np.nanmedian(summary.V1_draws[:, 2, 2])
        v2 = np.median(summary.V2_draws[:, 2, 2])
        print(f"{C:>4.1f} {emp:>10.3f} {v1:>12.3f} {v2:>12.3f} "
              f"{summary.boundary_count:>14d}")

    print("\nthe (2,2) entry is the variance of sqrt(n) * beta_2(lambda-hat);")
    print("V2 (pointwise) ignores that lambda was chosen from the data and")
    print("tends to undershoot the empirical column; V1 (tuning-aware) adds")
    print("the selection uncertainty back in (increase B for stable medians)")


if __name__ == "__main__":
    main()
