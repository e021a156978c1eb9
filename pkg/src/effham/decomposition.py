"""
Frequency-decomposed interaction-picture Hamiltonians

    H(t) = sum_m ( h_m exp(i w_m t) + h_m^dagger exp(-i w_m t) )

with distinct positive rational frequencies w_m expressed in units of a base
frequency. Scenario files are JSON:

    {
      "space": [{"kind": "qubit"}, {"kind": "boson", "cutoff": 8}],
      "base_frequency": "omega_c",
      "params": {"lambda": 0.05},
      "terms": [{"omega": "2", "h": "lambda*a(1)*sp(0)"}, ...]
    }

A term may give ``"entries": [[row, col, re, im], ...]`` instead of ``"h"``.
"""
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from effham.common import DEBUG_INFO, STEP_GUARD
from effham.errors import DecompositionError, EffhamError, ScenarioError, StepTooLarge
from effham.expr_parser import parse_operator_expr
from effham.hilbert import Operator, SpaceSpec, add, dagger, scale
from effham.utils import fmt_float, sha256_of

__all__ = ['Rational', 'parse_rational', 'FrequencyTerm', 'FrequencyDecomposition', 'SignedComponent',
           'expand_signed', 'evaluate_at', 'sample_dense', 'fundamental_frequency', 'fundamental_period',
           'max_frequency', 'check_step', 'scaled', 'with_frequencies', 'load_scenario', 'dump_scenario',
           'decomposition_hash']

Rational = Fraction

MAX_DECIMAL_DENOMINATOR = 10 ** 6

_pat_ratio = re.compile(r'^([+-]?\d+)\s*/\s*(\d+)$')
_pat_decimal = re.compile(r'^[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$')


def parse_rational(value: Union[str, int, Fraction]) -> Fraction:
    """
    Read a rational frequency from "p/q", a decimal string or an int. A decimal
    is taken at its exact value and rejected when that needs a denominator
    above 10**6.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise DecompositionError(f'Not a rational number: {value!r}')
    if isinstance(value, int):
        return Fraction(value)
    # shortest round-tripping text, so 0.1 reads as 1/10
    if isinstance(value, float):
        value = repr(value)
    if not isinstance(value, str):
        raise DecompositionError(f'Not a rational number: {value!r}')

    text = value.strip()
    mo = _pat_ratio.match(text)
    # "p/q"
    if mo:
        p, q = int(mo.group(1)), int(mo.group(2))
        if q == 0:
            raise DecompositionError(f'Zero denominator in "{text}"')
        return Fraction(p, q)
    # decimal, exact
    if _pat_decimal.match(text):
        r = Fraction(text)
        if r.denominator > MAX_DECIMAL_DENOMINATOR:
            raise DecompositionError(f'"{text}" needs denominator {r.denominator} > {MAX_DECIMAL_DENOMINATOR}; '
                                     f'write it as "p/q"')
        return r
    raise DecompositionError(f'Not a rational number: "{text}"')


@dataclass(frozen=True)
class FrequencyTerm:
    h: Operator
    omega: Fraction
    source: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'omega', parse_rational(self.omega))
        if self.omega <= 0:
            raise DecompositionError(f'Frequency must be positive, got {self.omega}')
        if self.h.is_zero():
            raise DecompositionError(f'Amplitude at frequency {self.omega} is the zero operator')


@dataclass(frozen=True)
class SignedComponent:
    term_index: int
    sign: int
    nu: Fraction
    amp: Operator

    @property
    def key(self) -> int:
        # position in expand_signed order
        return 2 * self.term_index + (0 if self.sign > 0 else 1)

    def __repr__(self) -> str:
        return f'SignedComponent(term={self.term_index}, nu={self.nu})'


@dataclass(frozen=True)
class FrequencyDecomposition:
    space: SpaceSpec
    terms: Tuple[FrequencyTerm, ...]
    base_frequency_label: str = 'omega_0'
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'terms', tuple(self.terms))
        object.__setattr__(self, 'params', dict(self.params))
        if not self.terms:
            raise DecompositionError('A decomposition needs at least one term')
        seen = set()
        for term in self.terms:
            if term.h.space != self.space:
                raise DecompositionError(f'Term at frequency {term.omega} lives on a different space')
            if term.omega in seen:
                raise DecompositionError(f'Frequency {term.omega} appears twice; frequencies must be distinct')
            seen.add(term.omega)

    @property
    def omegas(self) -> Tuple[Fraction, ...]:
        return tuple(t.omega for t in self.terms)

    @cached_property
    def components(self) -> Tuple[SignedComponent, ...]:
        # h_m at +w_m followed by its adjoint at -w_m
        out = []
        for m, term in enumerate(self.terms):
            out.append(SignedComponent(m, +1, term.omega, term.h))
            out.append(SignedComponent(m, -1, -term.omega, dagger(term.h)))
        return tuple(out)

    @cached_property
    def dense_stack(self) -> Tuple[np.ndarray, np.ndarray]:
        """(nu, amps): signed frequencies as floats and the dense amplitude stack."""
        nus = np.array([float(c.nu) for c in self.components])
        amps = np.stack([c.amp.to_dense() for c in self.components])
        return nus, amps

    def __len__(self) -> int:
        return len(self.terms)


def expand_signed(d: FrequencyDecomposition) -> List[SignedComponent]:
    return list(d.components)


def evaluate_at(d: FrequencyDecomposition, t: float, base_freq: float = 1.0) -> Operator:
    if base_freq <= 0:
        raise DecompositionError(f'base_freq must be positive, got {base_freq}')
    # positive-frequency half; the rest is its adjoint
    forward = reduce(add, (scale(np.exp(1j * float(term.omega) * base_freq * t), term.h) for term in d.terms))
    return forward + dagger(forward)


def sample_dense(d: FrequencyDecomposition, times, base_freq: float = 1.0) -> np.ndarray:
    """H(t) as a dense array of shape (len(times), dim, dim)."""
    nus, amps = d.dense_stack
    phases = np.exp(1j * base_freq * np.outer(np.atleast_1d(times), nus))
    return np.einsum('tm,mij->tij', phases, amps)


def max_frequency(d: FrequencyDecomposition) -> Fraction:
    return max(d.omegas)


def check_step(d: FrequencyDecomposition, dt: float, base_freq: float = 1.0):
    """Reject steps with dt * (largest angular frequency) above STEP_GUARD."""
    top = float(max_frequency(d)) * base_freq
    if dt * top > STEP_GUARD:
        raise StepTooLarge(f'dt * max frequency = {dt * top:.4g} exceeds {STEP_GUARD}; '
                           f'use dt <= {STEP_GUARD / top:.4g}')


def fundamental_frequency(d: FrequencyDecomposition) -> Fraction:
    # gcd of the w_m over their common denominator
    denominators = [w.denominator for w in d.omegas]
    common = reduce(lambda x, y: x * y // math.gcd(x, y), denominators)
    numerators = [int(w * common) for w in d.omegas]
    return Fraction(reduce(math.gcd, numerators), common)


def fundamental_period(d: FrequencyDecomposition, base_freq: float = 1.0) -> float:
    """Smallest T > 0 with H(t + T) = H(t)."""
    return 2 * math.pi / (float(fundamental_frequency(d)) * base_freq)


def scaled(d: FrequencyDecomposition, amplitude: complex = 1, frequency: Union[Fraction, int, str] = 1) \
        -> FrequencyDecomposition:
    r = parse_rational(frequency)
    if r <= 0:
        raise DecompositionError(f'Frequency scale must be positive, got {r}')
    c = complex(amplitude)
    terms = []
    for term in d.terms:
        source = None
        # an expression source survives only a real rescale
        if term.source is not None and c.imag == 0:
            source = term.source if c == 1 else f'{c.real!r}*({term.source})'
        terms.append(FrequencyTerm(scale(c, term.h), term.omega * r, source))
    return FrequencyDecomposition(d.space, tuple(terms), d.base_frequency_label, d.params)


def with_frequencies(d: FrequencyDecomposition, omegas: Sequence) -> FrequencyDecomposition:
    if len(omegas) != len(d.terms):
        raise DecompositionError(f'Expected {len(d.terms)} frequencies, got {len(omegas)}')
    terms = tuple(FrequencyTerm(t.h, parse_rational(w), t.source) for t, w in zip(d.terms, omegas))
    return FrequencyDecomposition(d.space, terms, d.base_frequency_label, d.params)


def _term_from_json(item: Mapping, space: SpaceSpec, params: Mapping[str, float]) -> FrequencyTerm:
    if 'omega' not in item:
        raise ScenarioError(f'Term {dict(item)} has no "omega"')
    omega = parse_rational(item['omega'])
    if 'h' in item:
        return FrequencyTerm(parse_operator_expr(item['h'], space, params), omega, item['h'])
    if 'entries' in item:
        rows, cols, vals = [], [], []
        for r, c, re_, im_ in item['entries']:
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re_), float(im_)))
        if any(not 0 <= i < space.dim for i in rows + cols):
            raise ScenarioError(f'Entry index out of range for dimension {space.dim}')
        m = sp.csr_matrix((vals, (rows, cols)), shape=(space.dim, space.dim), dtype=complex)
        return FrequencyTerm(Operator(space, m), omega)
    raise ScenarioError(f'Term at omega={item["omega"]} needs "h" or "entries"')


def load_scenario(source: Union[str, Mapping]) -> FrequencyDecomposition:
    """Build a decomposition from a scenario file path or an already-parsed dict."""
    if isinstance(source, Mapping):
        data = source
    else:
        try:
            with open(source, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f'Cannot read scenario "{source}": {e}')

    # required keys, then build with parse errors mapped to ScenarioError
    for key in ('space', 'terms'):
        if key not in data:
            raise ScenarioError(f'Scenario is missing "{key}"')
    try:
        space = SpaceSpec.from_json(data['space'])
        params = {str(k): float(v) for k, v in data.get('params', {}).items()}
        terms = tuple(_term_from_json(item, space, params) for item in data['terms'])
        d = FrequencyDecomposition(space, terms, str(data.get('base_frequency', 'omega_0')), params)
    except EffhamError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ScenarioError(f'Malformed scenario: {e}')

    DEBUG_INFO(f'Loaded scenario: dims={space.dims}, omegas={[str(w) for w in d.omegas]}')
    return d


def dump_scenario(d: FrequencyDecomposition) -> Dict:
    terms = []
    for term in d.terms:
        item = {'omega': str(term.omega)}
        if term.source is not None:
            item['h'] = term.source
        else:
            # no source expression, so the raw matrix
            item['entries'] = [[r, c, v.real, v.imag] for r, c, v in term.h.triplets()]
        terms.append(item)
    return {
        'space': d.space.to_json(),
        'base_frequency': d.base_frequency_label,
        'params': dict(sorted(d.params.items())),
        'terms': terms,
    }


def decomposition_hash(d: FrequencyDecomposition) -> str:
    # numbers printed at fixed precision; labels and params left out
    payload = {
        'space': d.space.to_json(),
        'terms': [{'omega': str(t.omega),
                   'h': [[r, c, fmt_float(v.real), fmt_float(v.imag)] for r, c, v in t.h.triplets()]}
                  for t in d.terms],
    }
    return sha256_of(payload)
