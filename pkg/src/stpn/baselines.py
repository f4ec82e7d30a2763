"""Historical-average and vector-autoregression reference predictors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DelayTensor, Split

WEEK_DAYS = 7


class HistoricalAverage:
    """Seasonal mean with a one-week period.

    Prediction for a target slot is the uniform mean of observed training
    values at the same (weekday, time-of-day) slot; slots never observed in
    training fall back to the training channel mean.
    """

    def __init__(self, delays: DelayTensor, train_stop: int):
        slots = delays.slot_positions()
        weekdays = delays.weekdays()
        self._week_slot = weekdays * delays.slots_per_day + slots
        n_week_slots = WEEK_DAYS * delays.slots_per_day
        n = delays.n
        sums = np.zeros((n, n_week_slots, 2))
        counts = np.zeros((n, n_week_slots, 2))
        for t in range(train_stop):
            ws = self._week_slot[t]
            m = delays.mask[:, t, :]
            sums[:, ws, :] += np.where(m, delays.values[:, t, :], 0.0)
            counts[:, ws, :] += m
        channel_mean = np.zeros(2)
        for c in range(2):
            obs = delays.values[:, :train_stop, c][delays.mask[:, :train_stop, c]]
            channel_mean[c] = obs.mean() if obs.size else 0.0
        self._table = np.where(counts > 0, np.divide(sums, np.maximum(counts, 1)), channel_mean)

    def predict_times(self, time_indices) -> np.ndarray:
        """(N, len(times), 2) prediction for timeline indices."""
        ws = self._week_slot[np.asarray(time_indices, dtype=np.int64)]
        return self._table[:, ws, :].copy()


@dataclass
class VarModel:
    """x_t = c + sum_l B_l x_{t-l} over the 2N stacked channels."""

    lags: int
    coefficients: np.ndarray  # (lags, 2N, 2N); B_l maps x_{t-l} -> x_t
    intercept: np.ndarray  # (2N,)
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.intercept.shape[0]

    def step(self, history: np.ndarray) -> np.ndarray:
        """One-step prediction from history (..., 2N, lags), newest last."""
        out = self.intercept.copy()
        for ell in range(1, self.lags + 1):
            out = out + self.coefficients[ell - 1] @ history[:, -ell]
        return out


def stack_channels(values: np.ndarray) -> np.ndarray:
    """(N, T, 2) -> (2N, T) with rows ordered airport-major (arr, dep)."""
    n, t, _ = values.shape
    return values.transpose(0, 2, 1).reshape(2 * n, t)


def unstack_channels(series: np.ndarray, n: int) -> np.ndarray:
    """(2N, T) -> (N, T, 2)."""
    t = series.shape[1]
    return series.reshape(n, 2, t).transpose(0, 2, 1)


def var_fit(series: np.ndarray, mask: np.ndarray | None, lags: int, ridge: float = 1e-6) -> VarModel:
    """Least-squares fit of the stacked regression.

    Missing entries are filled with the per-row training mean before
    fitting. A rank-deficient design matrix falls back to ridge with the
    given penalty, flagged in the model metadata.
    """
    series = np.asarray(series, dtype=np.float64)
    dim, t = series.shape
    if lags < 1 or t <= lags:
        raise ValueError(f"need more than lags={lags} time steps, have {t}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        filled = series.copy()
        for r in range(dim):
            obs = series[r][mask[r]]
            filled[r] = np.where(mask[r], series[r], obs.mean() if obs.size else 0.0)
        series = filled

    rows = t - lags
    design = np.ones((rows, 1 + dim * lags))
    for ell in range(1, lags + 1):
        design[:, 1 + (ell - 1) * dim : 1 + ell * dim] = series[:, lags - ell : t - ell].T
    target = series[:, lags:].T  # (rows, dim)

    beta, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    used_ridge = rank < design.shape[1]
    if used_ridge:
        # intercept column stays unpenalized so a constant series fits
        # as intercept=constant, B=0
        penalty = ridge * np.eye(design.shape[1])
        penalty[0, 0] = 0.0
        beta = np.linalg.solve(design.T @ design + penalty, design.T @ target)

    intercept = beta[0]
    coefficients = np.stack(
        [beta[1 + (ell - 1) * dim : 1 + ell * dim].T for ell in range(1, lags + 1)]
    )
    return VarModel(
        lags=lags,
        coefficients=coefficients,
        intercept=intercept,
        metadata={"ridge": used_ridge, "ridge_lambda": ridge if used_ridge else 0.0},
    )


def var_predict(model: VarModel, history: np.ndarray, horizon: int) -> np.ndarray:
    """Iterated one-step rollout; history is (2N, lags), newest column last."""
    history = np.asarray(history, dtype=np.float64)
    if history.shape != (model.dim, model.lags):
        raise ValueError(f"history shape {history.shape} != {(model.dim, model.lags)}")
    window = history.copy()
    steps = []
    for _ in range(horizon):
        nxt = model.step(window)
        steps.append(nxt)
        window = np.concatenate([window[:, 1:], nxt[:, None]], axis=1)
    stacked = np.stack(steps, axis=1)  # (2N, horizon)
    return unstack_channels(stacked, model.dim // 2)


def normal_equation_residual(series: np.ndarray, model: VarModel) -> float:
    """Relative residual of X'X b = X'y for the fitted coefficients."""
    dim, t = series.shape
    lags = model.lags
    rows = t - lags
    design = np.ones((rows, 1 + dim * lags))
    for ell in range(1, lags + 1):
        design[:, 1 + (ell - 1) * dim : 1 + ell * dim] = series[:, lags - ell : t - ell].T
    target = series[:, lags:].T
    beta = np.zeros((1 + dim * lags, dim))
    beta[0] = model.intercept
    for ell in range(1, lags + 1):
        beta[1 + (ell - 1) * dim : 1 + ell * dim] = model.coefficients[ell - 1].T
    lhs = design.T @ (design @ beta)
    rhs = design.T @ target
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))


def var_fit_delays(delays: DelayTensor, split: Split, lags: int) -> VarModel:
    """Fit on the training segment of a delay tensor."""
    lo, hi = split.train
    series = stack_channels(delays.values[:, lo:hi, :])
    mask = stack_channels(delays.mask[:, lo:hi, :].astype(np.float64)) > 0.5
    return var_fit(series, mask, lags)
