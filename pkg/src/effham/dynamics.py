"""
Exact propagation of H(t) and propagation of time-independent effective
Hamiltonians, with population, fidelity and frequency observables.

Full propagation is a product of one-step exponentials, each built with
``scipy.linalg.expm`` (scaling and squaring) in batches:

    magnus4   exp(-i h/2 (H1 + H2) - sqrt(3) h^2/12 [H2, H1]),
              H1, H2 at the two Gauss-Legendre points of the step
    midpoint  exp(-i h H(t + h/2))

Both are unitary by construction. When the decomposition repeats with a period
T much shorter than the run, one period is built once and the trajectory is
advanced stroboscopically.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import expm_multiply

from effham.common import DEBUG_INFO, EIGH_MAX_DIM, HERMITIAN_TOL, LEAKAGE_LIMIT, NORM_TOL, WARN, batch_size
from effham.decomposition import FrequencyDecomposition, check_step, fundamental_period, sample_dense
from effham.effective import EffectiveHamiltonian
from effham.errors import EffhamError, GridMismatch, LeakageExceeded, NonHermitianGenerator
from effham.hilbert import Label, Operator, SpaceSpec, basis_index, basis_label, hermitian_defect
from effham.utils import fmt_float, write_to_file

__all__ = ['StateVector', 'Trajectory', 'ComparisonReport', 'propagate_full', 'propagate_effective', 'compare',
           'estimate_frequency', 'SCHEMES']

SCHEMES = ('magnus4', 'midpoint')

DEFAULT_SAMPLES = 2000
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class StateVector:
    space: SpaceSpec
    amplitudes: np.ndarray
    # off for propagated states, Trajectory.norm_drift reports their drift
    check_norm: bool = field(default=True, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.dim:
            raise EffhamError(f'State of length {amps.shape[0]} does not fit dimension {self.space.dim}')
        norm = float(np.linalg.norm(amps))
        if self.check_norm and abs(norm - 1.0) > NORM_TOL:
            raise EffhamError(f'State has norm {norm:.12g}, expected 1 within {NORM_TOL:.0e}')
        object.__setattr__(self, 'amplitudes', amps)

    @classmethod
    def basis(cls, space: SpaceSpec, label: Label) -> 'StateVector':
        amps = np.zeros(space.dim, dtype=complex)
        amps[basis_index(space, label)] = 1.0
        return cls(space, amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def population(self, label: Label) -> float:
        return float(abs(self.amplitudes[basis_index(self.space, label)]) ** 2)

    def overlap(self, other: 'StateVector') -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def with_phase(self, phi: float) -> 'StateVector':
        return StateVector(self.space, np.exp(1j * phi) * self.amplitudes, check_norm=self.check_norm)


def _edge_occupancy(space: SpaceSpec, amplitudes: np.ndarray) -> np.ndarray:
    """(points, boson legs) occupancy of each boson leg's highest Fock level."""
    probs = np.abs(amplitudes.reshape((amplitudes.shape[0],) + space.dims)) ** 2
    out = np.zeros((amplitudes.shape[0], len(space.boson_legs)))
    for j, leg in enumerate(space.boson_legs):
        edge = np.take(probs, space.dims[leg] - 1, axis=leg + 1)
        out[:, j] = edge.reshape(amplitudes.shape[0], -1).sum(axis=1)
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    space: SpaceSpec
    grid: np.ndarray
    amplitudes: np.ndarray      # (points, dim)
    leakage: np.ndarray = field(default=None)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if len(grid) > 1 and np.any(np.diff(grid) <= 0):
            raise EffhamError('Trajectory grid must be strictly increasing')
        object.__setattr__(self, 'grid', grid)
        if self.leakage is None:
            object.__setattr__(self, 'leakage', _edge_occupancy(self.space, self.amplitudes))

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def final(self) -> StateVector:
        return StateVector(self.space, self.amplitudes[-1], check_norm=False)

    def populations(self, label: Label) -> np.ndarray:
        return np.abs(self.amplitudes[:, basis_index(self.space, label)]) ** 2

    def norm_drift(self) -> float:
        return float(np.max(np.abs(np.linalg.norm(self.amplitudes, axis=1) - 1.0)))

    def max_leakage(self) -> float:
        return float(self.leakage.max()) if self.leakage.size else 0.0

    def to_frame(self, energies: Union[Operator, np.ndarray]) -> 'Trajectory':
        """Amplitudes times exp(-i E_j t) for a diagonal operator or energy vector E; populations are unchanged."""
        if isinstance(energies, Operator):
            energies = energies.matrix.diagonal().real
        energies = np.asarray(energies, dtype=float)
        phases = np.exp(-1j * np.outer(self.grid, energies))
        return replace(self, amplitudes=self.amplitudes * phases)

    def csv_rows(self):
        header = ['t']
        for j in range(self.space.dim):
            header += [f're(amp_{j})', f'im(amp_{j})']
        rows = np.empty((len(self.grid), 1 + 2 * self.space.dim))
        rows[:, 0] = self.grid
        rows[:, 1::2] = self.amplitudes.real
        rows[:, 2::2] = self.amplitudes.imag
        return header, rows

    def to_csv(self, path: str) -> str:
        return write_to_file(self.csv_rows(), path)

    def population_rows(self, labels: Sequence[Label]):
        header = ['t'] + [f'P({basis_label(self.space, basis_index(self.space, l))})' for l in labels]
        rows = np.column_stack([self.grid] + [self.populations(l) for l in labels])
        return header, rows

    def populations_csv(self, path: str, labels: Sequence[Label]) -> str:
        return write_to_file(self.population_rows(labels), path)

    def describe(self) -> dict:
        return {
            'space': self.space.to_json(),
            'labels': [basis_label(self.space, j) for j in range(self.space.dim)],
            'points': len(self.grid),
            't_final': fmt_float(self.grid[-1]),
            'max_leakage': fmt_float(self.max_leakage()),
            'norm_drift': fmt_float(self.norm_drift()),
        }


def _check_norm(traj: Trajectory, what: str):
    drift = traj.norm_drift()
    if drift > NORM_TOL:
        WARN(f'{what}: norm drift {drift:.3e} exceeds {NORM_TOL:.0e}')


def _step_propagators(d: FrequencyDecomposition, starts: np.ndarray, h: float, scheme: str,
                      base_freq: float) -> np.ndarray:
    if scheme == 'magnus4':
        c1, c2 = 0.5 - _SQRT3 / 6, 0.5 + _SQRT3 / 6
        H1 = sample_dense(d, starts + c1 * h, base_freq)
        H2 = sample_dense(d, starts + c2 * h, base_freq)
        omega = (-0.5j * h) * (H1 + H2) - (_SQRT3 * h * h / 12) * (H2 @ H1 - H1 @ H2)
    elif scheme == 'midpoint':
        omega = (-1j * h) * sample_dense(d, starts + 0.5 * h, base_freq)
    else:
        raise EffhamError(f"Unknown propagation scheme '{scheme}', expected one of {SCHEMES}")
    return la.expm(omega)


def _advance(d, psi, t_start, h, n_steps, record_every, scheme, base_freq):
    """Apply n_steps steps to a state (1-D) or propagator (2-D); return the snapshots after every record_every steps."""
    out = []
    # sampled H, commutator terms, exponent and expm workspace
    chunk = batch_size(d.space.dim, per_step=6)
    for first in range(0, n_steps, chunk):
        last = min(first + chunk, n_steps)
        Us = _step_propagators(d, t_start + h * np.arange(first, last), h, scheme, base_freq)
        for i, U in enumerate(Us):
            psi = U @ psi
            if (first + i + 1) % record_every == 0:
                out.append(psi)
    return out


def propagate_full(d: FrequencyDecomposition, psi0: StateVector, t_final: float, dt: float,
                   samples: Optional[int] = None, scheme: str = 'magnus4', periodic: Optional[bool] = None,
                   base_freq: float = 1.0) -> Trajectory:
    """
    Solve i d/dt psi = H(t) psi over [0, t_final].

    ``samples`` is the number of output intervals. The integration step is at
    most ``dt`` and divides the sample spacing. With ``periodic`` unset the
    stroboscopic path is taken whenever at least two periods of H fit into
    ``t_final``; its grid is snapped to whole sample spacings that divide the
    period, so the last point may differ slightly from ``t_final``.
    """
    if dt <= 0 or t_final <= 0:
        raise EffhamError(f'Need dt > 0 and t_final > 0, got dt={dt}, t_final={t_final}')
    if psi0.space != d.space:
        raise EffhamError('Initial state and decomposition live on different spaces')
    check_step(d, dt, base_freq)

    samples = samples or min(DEFAULT_SAMPLES, math.ceil(t_final / dt - 1e-9))
    period = fundamental_period(d, base_freq)
    # stroboscopic once two periods fit
    if periodic is None:
        periodic = t_final >= 2 * period

    if periodic:
        grid, amps = _propagate_periodic(d, psi0.amplitudes, t_final, dt, samples, period, scheme, base_freq)
    else:
        per_sample = max(1, math.ceil(t_final / samples / dt - 1e-9))  # steps per output interval
        h = t_final / (samples * per_sample)
        DEBUG_INFO(f'full propagation ({scheme}): {samples * per_sample} steps of {h:.4g}')
        snaps = _advance(d, psi0.amplitudes, 0.0, h, samples * per_sample, per_sample, scheme, base_freq)
        grid = np.arange(samples + 1) * (t_final / samples)
        amps = np.vstack([psi0.amplitudes] + snaps)

    traj = Trajectory(d.space, grid, amps)
    _check_norm(traj, 'full propagation')
    if traj.max_leakage() > LEAKAGE_LIMIT:
        raise LeakageExceeded(f'Cutoff-edge occupancy {traj.max_leakage():.3e} exceeds {LEAKAGE_LIMIT:.0e}; '
                              f'raise the boson cutoff')
    return traj


def _propagate_periodic(d, psi0, t_final, dt, samples, period, scheme, base_freq):
    """
    Stroboscopic propagation of a periodic H(t).

    1. Snap the sample spacing so a whole number of samples fits one period
    2. Integrate once over a single period, keeping U at every sample offset
    3. Reuse those propagators period after period on the running state

    Returns:
        (grid, amplitudes) with n_samples + 1 rows
    """
    # whole samples per period, and whole steps per sample
    per_period = max(1, round(samples * period / t_final))
    spacing = period / per_period
    per_sample = max(1, math.ceil(spacing / dt - 1e-9))
    h = spacing / per_sample
    n_samples = max(1, round(t_final / spacing))
    DEBUG_INFO(f'stroboscopic propagation ({scheme}): period {period:.6g}, {per_period * per_sample} steps of '
               f'{h:.4g} per period, {n_samples} samples')

    # partial propagators at the sample offsets within one period
    partials = [np.eye(d.space.dim, dtype=complex)]
    partials += _advance(d, partials[0], 0.0, h, per_period * per_sample, per_sample, scheme, base_freq)
    one_period = partials[-1]

    amps = []
    phi = psi0      # state at the start of the current period
    while len(amps) < n_samples + 1:
        amps.extend(P @ phi for P in partials[:-1])
        phi = one_period @ phi
    # the last period is usually only partly used
    amps = np.vstack(amps[:n_samples + 1])
    grid = np.arange(n_samples + 1) * spacing
    return grid, amps


def propagate_effective(H: Union[EffectiveHamiltonian, Operator], psi0: StateVector, t_final: float,
                        dt: float, grid: Optional[np.ndarray] = None) -> Trajectory:
    """Evolve under a time-independent hermitian H, on ``grid`` if given, else on a uniform grid of step <= dt."""
    op = H.total if isinstance(H, EffectiveHamiltonian) else H
    defect = hermitian_defect(op)
    if defect > HERMITIAN_TOL:
        raise NonHermitianGenerator(f'Generator has hermitian defect {defect:.3e} > {HERMITIAN_TOL:.0e}')
    if psi0.space != op.space:
        raise EffhamError('Initial state and generator live on different spaces')

    if grid is None:
        if dt <= 0 or t_final <= 0:
            raise EffhamError(f'Need dt > 0 and t_final > 0, got dt={dt}, t_final={t_final}')
        steps = math.ceil(t_final / dt - 1e-9)
        grid = np.arange(steps + 1) * (t_final / steps)
    grid = np.asarray(grid, dtype=float)

    if op.space.dim <= EIGH_MAX_DIM:
        dense = op.to_dense()
        energies, V = np.linalg.eigh(0.5 * (dense + dense.conj().T))
        coeffs = V.conj().T @ psi0.amplitudes
        amps = (np.exp(-1j * np.outer(grid, energies)) * coeffs) @ V.T
    else:
        A = -1j * op.matrix.tocsc()
        rows = [psi0.amplitudes]
        for t_prev, t_next in zip(grid[:-1], grid[1:]):
            rows.append(expm_multiply(A * (t_next - t_prev), rows[-1]))
        amps = np.vstack(rows)

    traj = Trajectory(op.space, grid, amps)
    _check_norm(traj, 'effective propagation')
    if traj.max_leakage() > LEAKAGE_LIMIT:
        WARN(f'effective propagation: cutoff-edge occupancy {traj.max_leakage():.3e}')
    return traj


def estimate_frequency(grid: np.ndarray, signal: np.ndarray) -> float:
    """
    Dominant angular frequency of a real signal sampled on a uniform grid.

    The zero-padded FFT peak, refined by parabolic interpolation, seeds a
    bounded search for the frequency whose least-squares fit
    c + a cos(wt) + b sin(wt) explains most of the signal.
    """
    grid = np.asarray(grid, dtype=float)
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    if len(x) < 4 or np.max(np.abs(x)) < 1e-14:
        return 0.0
    step = grid[1] - grid[0]

    n_fft = 1 << int(math.ceil(math.log2(8 * len(x))))
    spectrum = np.abs(np.fft.rfft(x, n_fft))
    k = int(np.argmax(spectrum[1:])) + 1
    offset = 0.0
    if 1 <= k < len(spectrum) - 1:
        a, b, c = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = a - 2 * b + c
        if denom != 0:
            offset = 0.5 * (a - c) / denom
    bin_width = 2 * math.pi / (n_fft * step)
    guess = (k + offset) * bin_width

    def unexplained(w):
        design = np.column_stack([np.ones_like(grid), np.cos(w * grid), np.sin(w * grid)])
        coef, *_ = np.linalg.lstsq(design, x, rcond=None)
        return float(np.sum((x - design @ coef) ** 2))

    lo, hi = max(guess - 2 * bin_width, 0.0), guess + 2 * bin_width
    res = minimize_scalar(unexplained, bounds=(lo, hi), method='bounded', options={'xatol': bin_width * 1e-8})
    return float(res.x) if res.success and res.fun <= unexplained(guess) else float(guess)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    grid: np.ndarray
    observables: List[str]
    max_deviation: Dict[str, float]
    frequency_full: Dict[str, float]
    frequency_effective: Dict[str, float]
    max_population_full: Dict[str, float]
    max_population_effective: Dict[str, float]
    fidelity: np.ndarray

    @property
    def fidelity_floor(self) -> float:
        return float(self.fidelity.min())

    def frequency_error(self, label: str) -> float:
        eff = self.frequency_effective[label]
        full = self.frequency_full[label]
        if eff == 0:
            return 0.0 if full == 0 else math.inf
        return abs(full - eff) / eff

    def to_json(self) -> dict:
        return {
            'observables': {
                obs: {
                    'max_deviation': fmt_float(self.max_deviation[obs]),
                    'frequency_full': fmt_float(self.frequency_full[obs]),
                    'frequency_effective': fmt_float(self.frequency_effective[obs]),
                    'frequency_relative_error': fmt_float(self.frequency_error(obs)),
                    'max_population_full': fmt_float(self.max_population_full[obs]),
                    'max_population_effective': fmt_float(self.max_population_effective[obs]),
                } for obs in self.observables
            },
            'fidelity_floor': fmt_float(self.fidelity_floor),
            'points': len(self.grid),
        }


def compare(full: Trajectory, eff: Trajectory, observables: Sequence[Label]) -> ComparisonReport:
    if full.space != eff.space:
        raise GridMismatch('Trajectories live on different spaces')
    scale = max(1.0, float(abs(full.grid[-1])))
    if len(full.grid) != len(eff.grid) or np.max(np.abs(full.grid - eff.grid)) > 1e-9 * scale:
        raise GridMismatch(f'Trajectories have different grids ({len(full.grid)} vs {len(eff.grid)} points)')

    names = [basis_label(full.space, basis_index(full.space, obs)) for obs in observables]
    deviation, f_full, f_eff, p_full, p_eff = {}, {}, {}, {}, {}
    for name in names:
        a, b = full.populations(name), eff.populations(name)
        deviation[name] = float(np.max(np.abs(a - b)))
        f_full[name] = estimate_frequency(full.grid, a)
        f_eff[name] = estimate_frequency(eff.grid, b)
        p_full[name] = float(a.max())
        p_eff[name] = float(b.max())

    fidelity = np.abs(np.einsum('ti,ti->t', full.amplitudes.conj(), eff.amplitudes)) ** 2
    return ComparisonReport(full.grid, names, deviation, f_full, f_eff, p_full, p_eff, fidelity)
