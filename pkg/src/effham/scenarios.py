"""
Built-in scenarios.

two_atom_one_photon
    Two identical qubits sharing one cavity mode with w_c = 2 w_q, base
    frequency w_q. Three terms at w = 1, 2, 3; at third order one photon is
    absorbed while both qubits are excited.

rabi_three_photon
    One qubit in a cavity with w_a = 3 w_c, base frequency w_c. Two terms at
    w = 2, 4; at third order three photons are exchanged with the qubit.
    Second order shifts the two resonant levels apart, which is undone by
    detuning the cavity by delta (see stark_compensation).
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

from effham.common import DEBUG_INFO, WARN
from effham.decomposition import FrequencyDecomposition, FrequencyTerm
from effham.effective import eff2, matrix_element
from effham.errors import ScenarioError
from effham.expr_parser import evaluate_scalar, parse_operator_expr
from effham.hilbert import Factor, Operator, SpaceSpec, boson_op, scale
from effham.utils import load_json_config

__all__ = ['ScenarioName', 'ScenarioParams', 'preset_params', 'build_scenario', 'build_two_atom', 'build_rabi',
           'stark_compensation', 'compensated_rabi', 'stark_counter_term', 'with_overrides',
           'expected_third_order_coupling']

LAMBDA_MAX = 0.2
LAMBDA_WARN = 0.1
DELTA_MAX_DENOMINATOR = 10 ** 6


class ScenarioName(Enum):
    TWO_ATOM = 'two_atom_one_photon'
    RABI = 'rabi_three_photon'


# extra Fock levels the virtual processes of each scenario climb above n_initial
_CUTOFF_MARGIN = {
    ScenarioName.TWO_ATOM: 1,
    ScenarioName.RABI: 3,
}


@dataclass(frozen=True)
class ScenarioParams:
    name: ScenarioName
    lambda_over_base: float
    cutoff: int
    n_initial: int
    theta: float = 0.0
    base_frequency: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'name', ScenarioName(self.name))
        # coupling range, hard limit then warning
        lam = self.lambda_over_base
        if not 0 < lam <= LAMBDA_MAX:
            raise ScenarioError(f'lambda must lie in (0, {LAMBDA_MAX}] base units, got {lam}')
        if lam > LAMBDA_WARN:
            WARN(f'lambda = {lam} is above {LAMBDA_WARN}; perturbative orders may not be small')
        if self.n_initial < 0:
            raise ScenarioError(f'n_initial must be >= 0, got {self.n_initial}')
        # virtual levels must fit below the cutoff edge
        margin = _CUTOFF_MARGIN[self.name]
        if self.cutoff <= self.n_initial + margin:
            raise ScenarioError(f'{self.name.value}: cutoff must exceed n_initial + {margin}, '
                                f'got cutoff {self.cutoff} for n = {self.n_initial}')

    @property
    def params(self) -> Dict[str, float]:
        out = {'lambda': self.lambda_over_base}
        if self.name == ScenarioName.TWO_ATOM:
            out['theta'] = self.theta
        return out

    def resonant_pair(self) -> Tuple[str, str]:
        """(initial, final) basis labels of the transition the scenario is built around."""
        n = self.n_initial
        if self.name == ScenarioName.TWO_ATOM:
            if n < 1:
                raise ScenarioError('two_atom_one_photon needs n_initial >= 1 for a resonant transition')
            return f'gg,{n}', f'ee,{n - 1}'
        # rabi: three photons go into one excitation
        if n < 3:
            raise ScenarioError('rabi_three_photon needs n_initial >= 3 for a resonant transition')
        return f'g,{n}', f'e,{n - 3}'

    def to_json(self) -> dict:
        out = {
            'name': self.name.value,
            'lambda_over_base': self.lambda_over_base,
            'cutoff': self.cutoff,
            'n_initial': self.n_initial,
        }
        if self.name == ScenarioName.TWO_ATOM:
            out['theta'] = self.theta
        return out


def preset_params(name: str, **overrides) -> ScenarioParams:
    """Preset defaults from data/presets.json, with any non-None keyword overriding them."""
    presets = load_json_config('data/presets.json')
    key = presets['aliases'].get(name, name)
    # unknown names list both scenarios and aliases
    if key not in presets['scenarios']:
        known = sorted(list(presets['scenarios']) + list(presets['aliases']))
        raise ScenarioError(f"Unknown preset '{name}', expected one of {known}")

    values = dict(presets['scenarios'][key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    # theta may be written as an expression such as "pi/6"
    theta = values.get('theta', 0.0)
    if isinstance(theta, str):
        theta = evaluate_scalar(theta).real
    return ScenarioParams(name=ScenarioName(key),
                          lambda_over_base=float(values['lambda_over_base']),
                          cutoff=int(values['cutoff']),
                          n_initial=int(values['n_initial']),
                          theta=float(theta),
                          base_frequency=values.get('base_frequency', ''))


def _decomposition(space: SpaceSpec, p: ScenarioParams, sources, base: str) -> FrequencyDecomposition:
    terms = []
    for src, omega in sources:
        h = parse_operator_expr(src, space, p.params)
        # e.g. theta = 0 drops the sz term
        if h.is_zero():
            DEBUG_INFO(f'{p.name.value}: term "{src}" at omega={omega} vanishes, omitted')
            continue
        terms.append(FrequencyTerm(h, omega, src))
    if not terms:
        raise ScenarioError(f'{p.name.value}: every amplitude vanishes for {p.to_json()}')
    return FrequencyDecomposition(space, tuple(terms), p.base_frequency or base, p.params)


def build_two_atom(p: ScenarioParams) -> FrequencyDecomposition:
    if p.name != ScenarioName.TWO_ATOM:
        raise ScenarioError(f'build_two_atom got {p.name.value} parameters')
    space = SpaceSpec.of(Factor.qubit(), Factor.qubit(), Factor.boson(p.cutoff))
    # qubits 0 and 1, cavity on leg 2
    sources = [
        ('lambda*cos(theta)*adag(2)*(sm(0) + sm(1))', Fraction(1)),
        ('lambda*sin(theta)*adag(2)*(sz(0) + sz(1))', Fraction(2)),
        ('lambda*cos(theta)*adag(2)*(sp(0) + sp(1))', Fraction(3)),
    ]
    return _decomposition(space, p, sources, 'omega_q')


def build_rabi(p: ScenarioParams, cavity_shift: Fraction = Fraction(0)) -> FrequencyDecomposition:
    """
    Terms lambda*a*sp at 2 - shift and lambda*adag*sp at 4 + shift; a nonzero
    shift is the frame of a cavity detuned by ``cavity_shift``.
    """
    if p.name != ScenarioName.RABI:
        raise ScenarioError(f'build_rabi got {p.name.value} parameters')
    space = SpaceSpec.of(Factor.qubit(), Factor.boson(p.cutoff))
    shift = Fraction(cavity_shift)
    # qubit on leg 0, cavity on leg 1
    sources = [
        ('lambda*a(1)*sp(0)', 2 - shift),
        ('lambda*adag(1)*sp(0)', 4 + shift),
    ]
    return _decomposition(space, p, sources, 'omega_c')


_BUILDERS: Dict[ScenarioName, Callable[[ScenarioParams], FrequencyDecomposition]] = {
    ScenarioName.TWO_ATOM: build_two_atom,
    ScenarioName.RABI: build_rabi,
}


def build_scenario(p: ScenarioParams) -> FrequencyDecomposition:
    return _BUILDERS[p.name](p)


def stark_compensation(p: ScenarioParams) -> float:
    """
    Cavity detuning delta that makes |g,n> and |e,n-3> degenerate under
    H_eff^(2) + delta * n_hat:

        delta = ( <e,n-3|H2|e,n-3> - <g,n|H2|g,n> ) / 3
    """
    if p.name != ScenarioName.RABI:
        raise ScenarioError('Stark compensation applies to rabi_three_photon only')
    if p.n_initial < 3:
        raise ScenarioError(f'Stark compensation needs n_initial >= 3, got {p.n_initial}')
    H2 = eff2(build_rabi(p))
    n = p.n_initial
    upper = matrix_element(H2, f'e,{n - 3}', f'e,{n - 3}').real
    lower = matrix_element(H2, f'g,{n}', f'g,{n}').real
    return (upper - lower) / 3


def compensated_rabi(p: ScenarioParams) -> Tuple[FrequencyDecomposition, Fraction]:
    """The Rabi decomposition re-built at cavity detuning delta, and delta as an exact rational."""
    # exact rational detuning
    delta = Fraction(stark_compensation(p)).limit_denominator(DELTA_MAX_DENOMINATOR)
    if not 0 < delta < 2:
        raise ScenarioError(f'Stark shift {delta} would reorder the drive frequencies')
    DEBUG_INFO(f'Stark compensation: delta = {delta} ({float(delta):.6e})')
    return build_rabi(p, cavity_shift=delta), delta


def stark_counter_term(space: SpaceSpec, delta, leg: int = 1) -> Operator:
    """
    delta * n_hat. A trajectory of the detuned decomposition, moved to the
    frame exp(-i delta n t), evolves under H(t) + delta * n_hat; this is the
    static term to add to the effective generator there.
    """
    return scale(float(delta), boson_op(space, leg, 'n'))


def with_overrides(p: ScenarioParams, **changes) -> ScenarioParams:
    return replace(p, **{k: v for k, v in changes.items() if v is not None})


def expected_third_order_coupling(p: ScenarioParams, n: Optional[int] = None) -> float:
    """Closed-form <final|H_eff^(3)|initial> of the scenario's resonant transition at occupation n."""
    n = p.n_initial if n is None else n
    lam = p.lambda_over_base
    # both closed forms hold away from the cutoff edge
    if p.name == ScenarioName.TWO_ATOM:
        return -8 * math.sqrt(n) * lam ** 3 * math.cos(p.theta) ** 2 * math.sin(p.theta) / 3
    return -math.sqrt(n * (n - 1) * (n - 2)) * lam ** 3 / 4
