"""
Truncated Dyson series of the interaction-picture propagator, integrated as
the hierarchy

    dU_0/dt = 0,    dU_k/dt = -i H(t) U_{k-1}(t),    U_0 = 1, U_k(0) = 0

with a fixed-step classical Runge-Kutta scheme. Used as a model-independent
check of the effective generators: the secular (linear in t) part of the
order-n partial between two resonant states is -i t <f|H_eff^(n)|i>.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from effham.common import DEBUG_INFO, batch_size
from effham.decomposition import FrequencyDecomposition, check_step, sample_dense
from effham.effective import enumerate_resonances
from effham.errors import EffhamError, WindowTooShort
from effham.hilbert import Label, basis_index

__all__ = ['SeriesPropagator', 'dyson_series', 'fit_secular_slope', 'secular_rate_check']

SLOPE_DISCARD = 0.1
SLOPE_MIN_POINTS = 200


@dataclass(frozen=True, eq=False)
class SeriesPropagator:
    order: int
    grid: np.ndarray
    partials: np.ndarray    # (len(grid), order + 1, dim, columns)
    initial: Optional[np.ndarray] = None

    @property
    def dt(self) -> float:
        return float(self.grid[1] - self.grid[0]) if len(self.grid) > 1 else 0.0

    def partial(self, k: int) -> np.ndarray:
        if not 0 <= k <= self.order:
            raise EffhamError(f'Partial {k} not computed (order {self.order})')
        return self.partials[:, k]

    def resummed(self) -> np.ndarray:
        """sum_k U_k(t) on the grid."""
        return self.partials.sum(axis=1)

    def element(self, k: int, row: int, col: int = 0) -> np.ndarray:
        return self.partials[:, k, row, col]


def dyson_series(d: FrequencyDecomposition, order: int, t_final: float, dt: float,
                 initial=None, record_every: int = 1, base_freq: float = 1.0) -> SeriesPropagator:
    """
    Partials U_0 .. U_order on a uniform grid over [0, t_final].

    The step is shrunk to t_final / ceil(t_final / dt) so the grid ends exactly
    at t_final. With ``initial`` given (a state vector or anything with an
    ``amplitudes`` attribute) the partials are the columns U_k(t)|initial>.
    """
    if order < 1:
        raise EffhamError(f'Series order must be >= 1, got {order}')
    if dt <= 0 or t_final < dt:
        raise EffhamError(f'Need 0 < dt <= t_final, got dt={dt}, t_final={t_final}')
    if record_every < 1:
        raise EffhamError(f'record_every must be >= 1, got {record_every}')

    steps = math.ceil(t_final / dt - 1e-9)
    h = t_final / steps
    check_step(d, h, base_freq)

    dim = d.space.dim
    if initial is None:
        start = np.eye(dim, dtype=complex)
        psi = None
    else:
        psi = np.asarray(getattr(initial, 'amplitudes', initial), dtype=complex).reshape(dim)
        start = psi.reshape(dim, 1)

    Y = np.zeros((order + 1,) + start.shape, dtype=complex)
    Y[0] = start

    def rhs(H, Y):
        out = np.zeros_like(Y)
        out[1:] = -1j * np.matmul(H, Y[:-1])
        return out

    records = [Y.copy()]
    grid = [0.0]
    DEBUG_INFO(f'Dyson series: order {order}, {steps} steps of {h:.4g}, {start.shape[1]} column(s)')

    # two H samples per step
    chunk = batch_size(d.space.dim, per_step=2)
    for first in range(0, steps, chunk):
        last = min(first + chunk, steps)
        # H at t_i, t_i + h/2 and t_i + h for every step of the chunk
        times = (2 * first + np.arange(2 * (last - first) + 1)) * (h / 2)
        Hs = sample_dense(d, times, base_freq)
        for i in range(last - first):
            H0, Hm, H1 = Hs[2 * i], Hs[2 * i + 1], Hs[2 * i + 2]
            k1 = rhs(H0, Y)
            k2 = rhs(Hm, Y + (h / 2) * k1)
            k3 = rhs(Hm, Y + (h / 2) * k2)
            k4 = rhs(H1, Y + h * k3)
            Y = Y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
            step = first + i + 1
            if step % record_every == 0 or step == steps:
                records.append(Y.copy())
                grid.append(step * h)

    return SeriesPropagator(order, np.array(grid), np.stack(records), psi)


def fit_secular_slope(grid: np.ndarray, series: np.ndarray) -> complex:
    """
    Least-squares slope of ``series`` against ``grid`` (with intercept), after
    dropping the first 10% of the points.
    """
    grid = np.asarray(grid, dtype=float)
    series = np.asarray(series, dtype=complex)
    skip = int(math.ceil(SLOPE_DISCARD * len(grid)))
    t, y = grid[skip:], series[skip:]
    if len(t) < SLOPE_MIN_POINTS:
        raise WindowTooShort(f'Slope fit needs at least {SLOPE_MIN_POINTS} points after the transient, got {len(t)}')
    A = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return complex(coef[1])


def _slowest_gap(d: FrequencyDecomposition, order: int) -> float:
    kept, _ = enumerate_resonances(d, order)
    gaps = [abs(s) for rt in kept for s in rt.tail_sums]
    return float(min(gaps)) if gaps else float(min(d.omegas))


def secular_rate_check(d: FrequencyDecomposition, order: int, window: Tuple[float, float],
                       initial: Label, final: Label, dt: float = 0.002, base_freq: float = 1.0) -> float:
    """
    Magnitude of the linear growth rate of <final|U_order(t)|initial> over
    ``window``, i.e. the effective coupling |<final|H_eff|initial>| measured
    without using the generators.
    """
    t0, t1 = window
    if not 0 <= t0 < t1:
        raise WindowTooShort(f'Window ({t0}, {t1}) is empty')
    needed = 3 * 2 * math.pi / (_slowest_gap(d, order) * base_freq)
    if t1 - t0 < needed:
        raise WindowTooShort(f'Window length {t1 - t0:.4g} is shorter than {needed:.4g} '
                             f'(three periods of the slowest resonance denominator)')

    i = basis_index(d.space, initial)
    f = basis_index(d.space, final)
    psi = np.zeros(d.space.dim, dtype=complex)
    psi[i] = 1.0

    series = dyson_series(d, order, t1, dt, initial=psi, base_freq=base_freq)
    mask = series.grid >= t0
    slope = fit_secular_slope(series.grid[mask], series.element(order, f)[mask])
    DEBUG_INFO(f'secular slope <{final}|U_{order}|{initial}> = {slope:.6e}')
    return abs(slope)
