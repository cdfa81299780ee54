"""Climate time series packed into 60x60 RGB images and classified with LeNet."""

from ._varenn import (
    Cube,
    VarennError,
    encode_window,
    enumerate_combinations,
    enumerate_windows,
    kruskal_wallis,
    label_pre,
    label_tmp,
    mann_whitney_u,
    ols_regression,
    run_experiment,
    weighted_kappa,
)

__all__ = [
    "Cube",
    "VarennError",
    "encode_window",
    "enumerate_combinations",
    "enumerate_windows",
    "kruskal_wallis",
    "label_pre",
    "label_tmp",
    "mann_whitney_u",
    "ols_regression",
    "run_experiment",
    "weighted_kappa",
]
