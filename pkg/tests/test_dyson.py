import numpy as np
import pytest

from effham.decomposition import FrequencyDecomposition, FrequencyTerm, scaled
from effham.dyson import *
from effham.errors import EffhamError, StepTooLarge, WindowTooShort
from effham.hilbert import Factor, SpaceSpec, qubit_op
from effham.scenarios import build_scenario, expected_third_order_coupling, preset_params

QUBIT = SpaceSpec.of(Factor.qubit())
LAMBDA = 0.1


def driven_qubit(lam=LAMBDA, omega=1):
    return FrequencyDecomposition(QUBIT, (FrequencyTerm(lam * qubit_op(QUBIT, 0, 'sp'), omega),))


def test_first_order_against_closed_form():
    d = driven_qubit()
    series = dyson_series(d, 1, 3.0, 0.01)
    t = series.grid[-1]
    h = d.terms[0].h.to_dense()
    expected = -(h * (np.exp(1j * t) - 1) - h.conj().T * (np.exp(-1j * t) - 1))
    assert np.max(np.abs(series.partial(1)[-1] - expected)) <= 1e-9
    assert np.array_equal(series.partial(0)[-1], np.eye(2))


def test_grid_ends_at_t_final():
    series = dyson_series(driven_qubit(), 2, 1.0, 0.003)
    assert len(series.grid) == 335
    assert series.grid[-1] == pytest.approx(1.0, abs=1e-12)
    assert series.dt == pytest.approx(1.0 / 334)
    assert series.partials.shape == (335, 3, 2, 2)


def test_record_every():
    full = dyson_series(driven_qubit(), 2, 1.0, 0.01)
    thinned = dyson_series(driven_qubit(), 2, 1.0, 0.01, record_every=7)
    assert thinned.grid[-1] == full.grid[-1]
    assert np.allclose(thinned.partials[-1], full.partials[-1], atol=1e-15)
    assert np.allclose(thinned.partials[1], full.partials[7], atol=1e-15)


@pytest.mark.parametrize('k', [1, 2, 3])
def test_partials_scale_as_power_of_coupling(k):
    d = driven_qubit()
    base = dyson_series(d, 3, 2.0, 0.01)
    doubled = dyson_series(scaled(d, 2), 3, 2.0, 0.01)
    assert np.allclose(doubled.partial(k), 2 ** k * base.partial(k), rtol=1e-10, atol=1e-15)


def test_resummed_unitarity_improves_with_order():
    series = dyson_series(driven_qubit(), 4, 2.0, 0.01)
    defects = []
    for K in range(1, 5):
        U = series.partials[-1, :K + 1].sum(axis=0)
        defects.append(np.max(np.abs(U.conj().T @ U - np.eye(2))))
    assert defects == sorted(defects, reverse=True)
    assert defects[-1] < 1e-4
    assert np.allclose(series.resummed()[-1], series.partials[-1].sum(axis=0))


def test_initial_column():
    d = driven_qubit()
    full = dyson_series(d, 2, 1.0, 0.01)
    column = dyson_series(d, 2, 1.0, 0.01, initial=np.array([1, 0]))
    assert np.allclose(column.element(2, 1), full.element(2, 1, 0), atol=1e-14)
    assert column.partials.shape[-1] == 1


def test_step_guard():
    with pytest.raises(StepTooLarge) as info:
        dyson_series(driven_qubit(omega=4), 1, 1.0, 0.1)
    assert info.value.exit_code == 4


@pytest.mark.parametrize('kwargs', [
    dict(order=0, t_final=1.0, dt=0.01),
    dict(order=1, t_final=1.0, dt=0.0),
    dict(order=1, t_final=0.001, dt=0.01),
    dict(order=1, t_final=1.0, dt=0.01, record_every=0),
])
def test_bad_arguments(kwargs):
    with pytest.raises(EffhamError):
        dyson_series(driven_qubit(), **kwargs)


def test_partial_out_of_range():
    with pytest.raises(EffhamError):
        dyson_series(driven_qubit(), 1, 0.1, 0.01).partial(2)


def test_fit_recovers_synthetic_slope():
    t = np.linspace(0, 50, 2001)
    y = (2 - 3j) * t + 0.5 + 0.01 * np.sin(5 * t)
    assert fit_secular_slope(t, y) == pytest.approx(2 - 3j, abs=1e-3)


def test_fit_needs_enough_points():
    t = np.linspace(0, 10, 150)
    with pytest.raises(WindowTooShort) as info:
        fit_secular_slope(t, t)
    assert info.value.exit_code == 7


RABI = preset_params('rabi', lambda_over_base=0.03, cutoff=7)
TWO_ATOM = preset_params('two_atom', lambda_over_base=0.03, cutoff=4)


def test_rabi_secular_rate():
    rate = secular_rate_check(build_scenario(RABI), 3, (0, 80), 'g,3', 'e,0')
    assert rate == pytest.approx(abs(expected_third_order_coupling(RABI)), rel=0.02)


def test_two_atom_secular_rate():
    rate = secular_rate_check(build_scenario(TWO_ATOM), 3, (0, 100), 'gg,1', 'ee,0')
    assert rate == pytest.approx(TWO_ATOM.lambda_over_base ** 3, rel=0.02)
    assert rate == pytest.approx(abs(expected_third_order_coupling(TWO_ATOM)), rel=0.02)


def test_off_resonant_pair_does_not_grow():
    rate = secular_rate_check(build_scenario(RABI), 3, (0, 80), 'g,3', 'e,1')
    assert rate <= 0.05 * abs(expected_third_order_coupling(RABI))


@pytest.mark.parametrize('window', [(0, 5), (10, 10), (-1, 30)])
def test_window_too_short(window):
    with pytest.raises(WindowTooShort):
        secular_rate_check(build_scenario(RABI), 3, window, 'g,3', 'e,0')


def test_small_batches_give_same_series(monkeypatch):
    d = build_scenario(preset_params('two_atom'))
    whole = dyson_series(d, 3, 2.0, 0.01)
    monkeypatch.setattr('effham.common.BATCH_BYTES', 1)
    batched = dyson_series(d, 3, 2.0, 0.01)
    assert np.allclose(batched.partials, whole.partials, atol=1e-14)
