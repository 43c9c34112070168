"""Covariate balance: standardized mean differences and balance tables."""

from .balance import (
    BALANCE_THRESHOLD,
    BalanceRow,
    balance_table,
    baseline_table,
    categorical_smd,
    love_plot_frame,
    pooled_at_risk,
    smd,
    weighted_smd,
)

__all__ = [
    "BalanceRow", "BALANCE_THRESHOLD",
    "smd", "weighted_smd", "categorical_smd",
    "balance_table", "love_plot_frame", "baseline_table", "pooled_at_risk",
]
