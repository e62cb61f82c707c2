"""Dormant-unit diagnostics for the policy trunk.

A hidden unit's score is its mean absolute activation over a probe batch,
divided by the mean of that quantity across its layer. Units scoring at or
below ``tau`` are dormant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from recomlab.nn import hidden_activations


@dataclass(frozen=True)
class DormantReport:
    global_step: int
    dormant_counts: tuple[int, ...]
    layer_widths: tuple[int, ...]
    dormant_ratio: float
    tau: float
    probe_batch_size: int

    @property
    def total_units(self) -> int:
        return sum(self.layer_widths)


def unit_scores(activations: np.ndarray) -> np.ndarray:
    """Layer-normalized mean absolute activation, one score per unit.

    A layer whose activations are all zero scores zero everywhere.
    """
    mean_abs = np.mean(np.abs(activations), axis=0)
    layer_mean = mean_abs.mean()
    if layer_mean <= 0.0:
        return np.zeros_like(mean_abs)
    return mean_abs / layer_mean


def dormant_mask(activations: np.ndarray, tau: float) -> np.ndarray:
    return unit_scores(activations) <= tau


def dormant_ratio(params, probe_states, tau: float = 0.025, global_step: int = 0,
                  prefix: str = "pi") -> DormantReport:
    probe_states = np.atleast_2d(np.asarray(probe_states, dtype=np.float64))
    if probe_states.shape[0] == 0:
        raise ValueError("probe batch is empty")
    layers = hidden_activations(params, probe_states, prefix)
    counts = tuple(int(np.sum(dormant_mask(h, tau))) for h in layers)
    widths = tuple(h.shape[1] for h in layers)
    return DormantReport(
        global_step=global_step,
        dormant_counts=counts,
        layer_widths=widths,
        dormant_ratio=sum(counts) / sum(widths),
        tau=tau,
        probe_batch_size=probe_states.shape[0],
    )
