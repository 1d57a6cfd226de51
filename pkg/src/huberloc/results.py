"""Run results and trace export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunResult", "write_trace_csv"]

SYNC_TRACE_COLUMNS = ("iter", "cost", "residual", "messages_cumulative")
ASYNC_TRACE_COLUMNS = SYNC_TRACE_COLUMNS + ("activated_node",)


@dataclass(eq=False)
class RunResult:
    """Outcome of a solver run.

    ``converged`` reflects the stopping criterion only; hitting the iteration
    or message budget is reported through ``stopped`` and is not an error.
    """

    positions: np.ndarray
    trace: list
    trace_columns: tuple
    converged: bool
    iterations: int
    messages: int
    final_cost: float
    stopped: str = "criterion"
    state: object = field(default=None, repr=False)


def write_trace_csv(result, path):
    """Write the iteration trace of a run as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(result.trace_columns)
        for row in result.trace:
            writer.writerow(row)
