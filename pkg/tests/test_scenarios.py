import math
from fractions import Fraction

import numpy as np
import pytest

from effham.decomposition import decomposition_hash, dump_scenario, load_scenario
from effham.effective import eff2, effn, matrix_element
from effham.errors import ScenarioError
from effham.hilbert import basis_index, boson_op, qubit_op
from effham.scenarios import *

LAMBDA = 0.05


def two_atom(theta, cutoff=7, lam=LAMBDA):
    return ScenarioParams(ScenarioName.TWO_ATOM, lam, cutoff, 1, theta)


def rabi(cutoff=10, n=3, lam=LAMBDA):
    return ScenarioParams(ScenarioName.RABI, lam, cutoff, n)


def test_two_atom_terms():
    p = two_atom(math.pi / 4)
    d = build_two_atom(p)
    assert d.omegas == (1, 2, 3)
    assert d.space.dims == (2, 2, 7)
    assert d.base_frequency_label == 'omega_q'
    adag = boson_op(d.space, 2, 'adag')
    c, s = LAMBDA * math.cos(math.pi / 4), LAMBDA * math.sin(math.pi / 4)
    expected = [
        c * adag @ (qubit_op(d.space, 0, 'sm') + qubit_op(d.space, 1, 'sm')),
        s * adag @ (qubit_op(d.space, 0, 'sz') + qubit_op(d.space, 1, 'sz')),
        c * adag @ (qubit_op(d.space, 0, 'sp') + qubit_op(d.space, 1, 'sp')),
    ]
    for term, h in zip(d.terms, expected):
        assert term.h.allclose(h, atol=1e-15)
    assert [c.nu for c in d.components] == [1, -1, 2, -2, 3, -3]


@pytest.mark.parametrize('n', [1, 2, 3, 4, 5])
def test_two_atom_one_photon_coupling(n):
    p = two_atom(math.pi / 6)
    H3 = effn(build_two_atom(p), 3).total
    element = matrix_element(H3, f'ee,{n - 1}', f'gg,{n}')
    assert element.real == pytest.approx(expected_third_order_coupling(p, n), rel=1e-12)
    assert abs(element.imag) <= 1e-18
    # |gg,n> is coupled to |ee,n-1> and nothing else
    column = H3.matrix.getcol(basis_index(H3.space, f'gg,{n}')).tocoo()
    assert list(column.row) == [basis_index(H3.space, f'ee,{n - 1}')]


def test_two_atom_third_order_operator():
    p = two_atom(math.pi / 6, cutoff=6)
    d = build_two_atom(p)
    pair_up = boson_op(d.space, 2, 'a') @ qubit_op(d.space, 0, 'sp') @ qubit_op(d.space, 1, 'sp')
    expected = (expected_third_order_coupling(p, 1) * (pair_up + pair_up.dag())).to_dense()
    H3 = effn(d, 3).total.to_dense()
    inside = np.diag(boson_op(d.space, 2, 'n').to_dense()) < 5
    assert np.max(np.abs((H3 - expected)[np.ix_(inside, inside)])) <= 1e-12


def test_two_atom_square_root_law():
    H3 = effn(build_two_atom(two_atom(0.4)), 3)
    first = matrix_element(H3, 'ee,0', 'gg,1').real
    for n in range(2, 6):
        assert matrix_element(H3, f'ee,{n - 1}', f'gg,{n}').real / first == pytest.approx(math.sqrt(n), abs=1e-12)


def test_two_atom_coupling_at_thirty_degrees():
    p = two_atom(math.pi / 6)
    assert expected_third_order_coupling(p, 1) == pytest.approx(-LAMBDA ** 3)


def test_two_atom_without_sine_term():
    d = build_two_atom(two_atom(0.0))
    assert d.omegas == (1, 3)
    H3 = effn(d, 3)
    assert H3.total.is_zero()
    assert H3.ledger == ()


def test_rabi_terms():
    d = build_rabi(rabi())
    assert d.omegas == (2, 4)
    assert d.base_frequency_label == 'omega_c'
    a, adag, sp = boson_op(d.space, 1, 'a'), boson_op(d.space, 1, 'adag'), qubit_op(d.space, 0, 'sp')
    assert d.terms[0].h.allclose(LAMBDA * a @ sp, atol=1e-15)
    assert d.terms[1].h.allclose(LAMBDA * adag @ sp, atol=1e-15)


def test_rabi_second_order_operator():
    d = build_rabi(rabi())
    H2 = eff2(d).total.to_dense()
    n = boson_op(d.space, 1, 'n').to_dense()
    p_e = (qubit_op(d.space, 0, 'sp') @ qubit_op(d.space, 0, 'sm')).to_dense()
    p_g = np.eye(d.space.dim) - p_e
    one = np.eye(d.space.dim)
    expected = LAMBDA ** 2 / 4 * (p_e @ (3 * n + 2 * one) - p_g @ (3 * n + one))
    # the cutoff edge sees a truncated a adag
    inside = np.diag(n) < d.space.dims[1] - 1
    assert np.max(np.abs((H2 - expected)[np.ix_(inside, inside)])) <= 1e-15
    assert np.count_nonzero(H2 - np.diag(np.diag(H2))) == 0


def test_rabi_third_order_operator():
    d = build_rabi(rabi())
    a3_sp = boson_op(d.space, 1, 'a') @ boson_op(d.space, 1, 'a') @ boson_op(d.space, 1, 'a') @ \
        qubit_op(d.space, 0, 'sp')
    expected = -LAMBDA ** 3 / 4 * (a3_sp + a3_sp.dag())
    assert effn(d, 3).total.allclose(expected, atol=1e-16)
    assert matrix_element(effn(d, 3), 'e,0', 'g,3').real == pytest.approx(expected_third_order_coupling(rabi()))


@pytest.mark.parametrize('order,power', [(2, 2), (3, 3)])
def test_effective_orders_vanish_with_coupling(order, power):
    strong = np.abs(effn(build_rabi(rabi(lam=0.1)), order).total.to_dense()).max()
    weak = np.abs(effn(build_rabi(rabi(lam=1e-4)), order).total.to_dense()).max()
    assert weak == pytest.approx(strong * 1e-3 ** power, rel=1e-9)


def test_stark_compensation():
    assert stark_compensation(rabi()) == pytest.approx(LAMBDA ** 2, rel=1e-12)
    assert stark_compensation(rabi(n=5)) == pytest.approx(2 * LAMBDA ** 2, rel=1e-12)
    assert stark_compensation(rabi(lam=1e-3)) == pytest.approx(1e-6, rel=1e-9)


def test_compensated_rabi():
    p = rabi()
    d, delta = compensated_rabi(p)
    assert delta == Fraction(1, 400)
    assert d.omegas == (Fraction(799, 400), Fraction(1601, 400))
    H = eff2(build_rabi(p)).total + stark_counter_term(d.space, delta)
    assert matrix_element(H, 'g,3', 'g,3').real == pytest.approx(matrix_element(H, 'e,0', 'e,0').real, abs=1e-15)


@pytest.mark.parametrize('p', [
    lambda: two_atom(math.pi / 6),
    lambda: rabi(n=2, cutoff=6),
])
def test_stark_compensation_errors(p):
    with pytest.raises(ScenarioError):
        stark_compensation(p())


GUARDS = [
    lambda: rabi(lam=0.0),
    lambda: rabi(lam=0.25),
    lambda: rabi(cutoff=6),
    lambda: rabi(n=-1),
    lambda: two_atom(0.3, cutoff=2),
    lambda: ScenarioParams('three_atoms', LAMBDA, 10, 3),
]


@pytest.mark.parametrize('build', GUARDS)
def test_parameter_guards(build):
    with pytest.raises((ScenarioError, ValueError)):
        build()


def test_builders_check_scenario_kind():
    with pytest.raises(ScenarioError):
        build_rabi(two_atom(0.3))
    with pytest.raises(ScenarioError):
        build_two_atom(rabi())


def test_resonant_pair():
    assert rabi().resonant_pair() == ('g,3', 'e,0')
    assert rabi(n=5).resonant_pair() == ('g,5', 'e,2')
    assert two_atom(0.3).resonant_pair() == ('gg,1', 'ee,0')
    with pytest.raises(ScenarioError):
        rabi(n=1).resonant_pair()


def test_presets():
    p = preset_params('rabi')
    assert p == preset_params('rabi_three_photon')
    assert (p.name, p.lambda_over_base, p.cutoff, p.n_initial) == (ScenarioName.RABI, 0.05, 10, 3)
    q = preset_params('two_atom', lambda_over_base=0.03, cutoff=None)
    assert q.theta == pytest.approx(math.pi / 6)
    assert (q.lambda_over_base, q.cutoff) == (0.03, 6)
    assert q.params == {'lambda': 0.03, 'theta': q.theta}
    assert p.params == {'lambda': 0.05}
    with pytest.raises(ScenarioError):
        preset_params('jaynes_cummings')


def test_with_overrides():
    p = with_overrides(preset_params('rabi'), n_initial=4, cutoff=None)
    assert (p.n_initial, p.cutoff) == (4, 10)


def test_to_json():
    assert rabi().to_json() == {'name': 'rabi_three_photon', 'lambda_over_base': LAMBDA, 'cutoff': 10,
                                'n_initial': 3}
    assert 'theta' in two_atom(0.3).to_json()


@pytest.mark.parametrize('name', ['rabi', 'two_atom'])
def test_dump_load_round_trip(name):
    d = build_scenario(preset_params(name))
    again = load_scenario(dump_scenario(d))
    assert decomposition_hash(again) == decomposition_hash(d)
    assert again.base_frequency_label == d.base_frequency_label
    assert [t.source for t in again.terms] == [t.source for t in d.terms]
