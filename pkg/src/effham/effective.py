"""
Time-averaged effective Hamiltonians of a frequency decomposition, order by
order.

An order-n resonance is a sequence of signed components (nu_1, ..., nu_n) with
nu_1 + ... + nu_n = 0 exactly. With tail sums S_k = nu_k + ... + nu_n it
contributes

    (-1)^(n-1) / (S_2 * S_3 * ... * S_n) * amp_1 @ amp_2 @ ... @ amp_n

to the order-n generator. A resonance with some S_k = 0 (k >= 2) is
degenerate: its nested integral grows secularly and the method does not apply.
"""
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import reduce
from typing import Callable, Dict, List, Sequence, Tuple, Union

from effham.common import DEBUG_INFO
from effham.decomposition import FrequencyDecomposition
from effham.errors import DegenerateResonance, EffhamError
from effham.hilbert import Label, Operator, basis_index, commutator, hermitian_defect, mul, scale, zero
from effham.utils import fmt_float, triplet_rows

__all__ = ['DegeneracyPolicy', 'ResonanceTuple', 'LedgerEntry', 'EffectiveHamiltonian', 'EffectiveGenerator',
           'SecondOrderGenerator', 'ExplicitThirdOrderGenerator', 'NthOrderGenerator', 'get_generator',
           'enumerate_resonances', 'eff2', 'eff3_explicit', 'effn', 'effective_sum', 'matrix_element',
           'effective_rabi_frequency']


class DegeneracyPolicy(Enum):
    RAISE = 'raise'
    REPORT = 'report'


@dataclass(frozen=True)
class ResonanceTuple:
    order: int
    indices: Tuple[int, ...]        # positions in expand_signed order
    nus: Tuple[Fraction, ...]
    tail_sums: Tuple[Fraction, ...]  # S_2 .. S_n
    coefficient: Fraction
    family: str = ''

    @property
    def is_degenerate(self) -> bool:
        return any(s == 0 for s in self.tail_sums)

    @property
    def terms(self) -> Tuple[int, ...]:
        return tuple(i // 2 for i in self.indices)

    @property
    def signs(self) -> Tuple[int, ...]:
        return tuple(-1 if i % 2 else 1 for i in self.indices)

    def label(self) -> str:
        return '(' + ','.join(f'{"+" if nu > 0 else ""}{nu}' for nu in self.nus) + ')'

    def to_json(self) -> dict:
        out = {
            'order': self.order,
            'indices': list(self.indices),
            'terms': list(self.terms),
            'nus': [str(nu) for nu in self.nus],
            'tail_sums': [str(s) for s in self.tail_sums],
            'coefficient': str(self.coefficient),
        }
        if self.family:
            out['family'] = self.family
        return out


def _tail_sums(nus: Sequence[Fraction]) -> Tuple[Fraction, ...]:
    # S_k sums nu_{k+1} .. nu_n, built from the right
    sums = []
    acc = Fraction(0)
    for nu in reversed(nus[1:]):
        acc += nu
        sums.append(acc)
    return tuple(reversed(sums))


def _tail_coefficient(tails: Sequence[Fraction]) -> Fraction:
    # only meaningful for non-degenerate tails
    sign = -1 if len(tails) % 2 else 1
    return sign / reduce(lambda x, y: x * y, tails, Fraction(1))


@dataclass(frozen=True)
class LedgerEntry:
    resonance: ResonanceTuple
    contribution: Operator


@dataclass(frozen=True)
class EffectiveHamiltonian:
    order: int
    total: Operator
    ledger: Tuple[LedgerEntry, ...]
    degeneracy_report: Tuple[ResonanceTuple, ...] = ()
    method: str = 'generic'

    @property
    def space(self):
        return self.total.space

    def hermitian_defect(self) -> float:
        return hermitian_defect(self.total)

    def to_json(self) -> dict:
        return {
            'order': self.order,
            'method': self.method,
            'space': self.space.to_json(),
            'dim': self.space.dim,
            'total': triplet_rows(self.total.triplets()),
            'hermitian_defect': fmt_float(self.hermitian_defect()),
            'ledger': [dict(e.resonance.to_json(), nnz=e.contribution.nnz) for e in self.ledger],
            'degeneracy_report': [r.to_json() for r in self.degeneracy_report],
        }


def enumerate_resonances(d: FrequencyDecomposition, order: int) \
        -> Tuple[List[ResonanceTuple], List[ResonanceTuple]]:
    """
    All signed sequences of length ``order`` with zero total frequency, split
    into (kept, degenerate). Both lists come out in lexicographic index order.

    Parameters:
        d: decomposition whose signed components are combined
        order: sequence length, at least 2

    Returns:
        (kept, degenerate); degenerate tuples carry a zero coefficient
    """
    if order < 2:
        raise EffhamError(f'Resonance order must be >= 2, got {order}')

    components = d.components
    kept, degenerate = [], []
    # itertools.product walks the indices lexicographically
    for indices in itertools.product(range(len(components)), repeat=order):
        nus = tuple(components[i].nu for i in indices)
        # only resonant sequences contribute
        if sum(nus) != 0:
            continue
        tails = _tail_sums(nus)
        # a vanishing partial sum has no finite coefficient
        if any(s == 0 for s in tails):
            degenerate.append(ResonanceTuple(order, indices, nus, tails, Fraction(0)))
        else:
            kept.append(ResonanceTuple(order, indices, nus, tails, _tail_coefficient(tails)))

    DEBUG_INFO(f'order {order}: {len(kept)} resonances kept, {len(degenerate)} degenerate')
    return kept, degenerate


class EffectiveGenerator(ABC):
    def __init__(self, policy: DegeneracyPolicy = DegeneracyPolicy.RAISE):
        self.policy = DegeneracyPolicy(policy)

    @property
    @abstractmethod
    def order(self) -> int:
        pass

    @property
    @abstractmethod
    def method(self) -> str:
        pass

    @abstractmethod
    def resonances(self, d: FrequencyDecomposition) -> Tuple[List[ResonanceTuple], List[ResonanceTuple]]:
        pass

    def contribution(self, d: FrequencyDecomposition, rt: ResonanceTuple) -> Operator:
        components = d.components
        product = reduce(mul, (components[i].amp for i in rt.indices))
        return scale(float(rt.coefficient), product)

    def __call__(self, d: FrequencyDecomposition) -> EffectiveHamiltonian:
        kept, degenerate = self.resonances(d)
        # RAISE rejects any degenerate tuple
        if degenerate and self.policy == DegeneracyPolicy.RAISE:
            shown = ', '.join(r.label() for r in degenerate[:4])
            more = f' and {len(degenerate) - 4} more' if len(degenerate) > 4 else ''
            raise DegenerateResonance(f'{len(degenerate)} order-{self.order} resonances have a vanishing tail sum: '
                                      f'{shown}{more}', degenerate)

        ledger = []
        for rt in sorted(kept, key=lambda r: r.indices):
            contrib = self.contribution(d, rt)
            # vanishing products are dropped from the ledger
            if contrib.is_zero():
                continue
            ledger.append(LedgerEntry(rt, contrib))

        # summed in ledger order
        total = zero(d.space)
        for entry in ledger:
            total = total + entry.contribution
        return EffectiveHamiltonian(self.order, total, tuple(ledger), tuple(degenerate), self.method)


class NthOrderGenerator(EffectiveGenerator):
    def __init__(self, order: int, policy: DegeneracyPolicy = DegeneracyPolicy.RAISE):
        super().__init__(policy)
        if order < 2:
            raise EffhamError(f'Effective order must be >= 2, got {order}')
        self._order = order

    @property
    def order(self) -> int:
        return self._order

    @property
    def method(self) -> str:
        return 'generic'

    def resonances(self, d):
        return enumerate_resonances(d, self._order)


class SecondOrderGenerator(EffectiveGenerator):
    """sum_m (1/w_m) [h_m, h_m^dagger], one ledger entry per term."""

    @property
    def order(self) -> int:
        return 2

    @property
    def method(self) -> str:
        return 'explicit'

    def resonances(self, d):
        kept = []
        for m, w in enumerate(d.omegas):
            kept.append(ResonanceTuple(2, (2 * m, 2 * m + 1), (w, -w), (-w,), 1 / w, 'commutator'))
        return kept, []

    def contribution(self, d, rt):
        h = d.terms[rt.terms[0]].h
        return scale(float(rt.coefficient), commutator(h, h.dag()))


class ExplicitThirdOrderGenerator(EffectiveGenerator):
    """
    Third order written out term by term. With (l, m, n) running over all term
    triples, the surviving sign patterns fall into two coefficient families:

        A  1/(w_n (w_n - w_m)):  (+,-,+) (-,+,-) (+,+,-) (-,-,+)
        B  1/(w_n (w_n + w_m)):  (-,+,+) (+,-,-)

    (+,+,+) and (-,-,-) never sum to zero.
    """
    FAMILIES = (
        ('A', (+1, -1, +1)),
        ('A', (-1, +1, -1)),
        ('A', (+1, +1, -1)),
        ('A', (-1, -1, +1)),
        ('B', (-1, +1, +1)),
        ('B', (+1, -1, -1)),
    )

    @property
    def order(self) -> int:
        return 3

    @property
    def method(self) -> str:
        return 'explicit'

    @staticmethod
    def denominator(family: str, w_m: Fraction, w_n: Fraction) -> Fraction:
        if family == 'A':
            return w_n * (w_n - w_m)
        return w_n * (w_n + w_m)

    def resonances(self, d):
        omegas = d.omegas
        kept, degenerate = [], []
        for l, m, n in itertools.product(range(len(omegas)), repeat=3):
            for family, signs in self.FAMILIES:
                nus = tuple(s * omegas[k] for s, k in zip(signs, (l, m, n)))
                if sum(nus) != 0:
                    continue
                indices = tuple(2 * k + (0 if s > 0 else 1) for s, k in zip(signs, (l, m, n)))
                den = self.denominator(family, omegas[m], omegas[n])
                if den == 0:
                    degenerate.append(ResonanceTuple(3, indices, nus, _tail_sums(nus), Fraction(0), family))
                else:
                    kept.append(ResonanceTuple(3, indices, nus, _tail_sums(nus), 1 / den, family))
        return kept, degenerate

    def contribution(self, d, rt):
        h = [d.terms[k].h for k in rt.terms]
        amps = [x if s > 0 else x.dag() for x, s in zip(h, rt.signs)]
        return scale(float(rt.coefficient), amps[0] @ amps[1] @ amps[2])


def get_generator(order: int, method: str = 'generic',
                  policy: DegeneracyPolicy = DegeneracyPolicy.RAISE) -> EffectiveGenerator:
    if method == 'generic':
        return NthOrderGenerator(order, policy)
    explicit: Dict[int, Callable[..., EffectiveGenerator]] = {
        2: SecondOrderGenerator,
        3: ExplicitThirdOrderGenerator,
    }
    if method != 'explicit' or order not in explicit:
        raise EffhamError(f"No '{method}' generator for order {order}")
    return explicit[order](policy)


def eff2(d: FrequencyDecomposition) -> EffectiveHamiltonian:
    return SecondOrderGenerator()(d)


def eff3_explicit(d: FrequencyDecomposition) -> EffectiveHamiltonian:
    return ExplicitThirdOrderGenerator()(d)


def effn(d: FrequencyDecomposition, order: int,
         policy: DegeneracyPolicy = DegeneracyPolicy.RAISE) -> EffectiveHamiltonian:
    return NthOrderGenerator(order, policy)(d)


def effective_sum(d: FrequencyDecomposition, max_order: int,
                  policy: DegeneracyPolicy = DegeneracyPolicy.RAISE) -> Operator:
    """H_eff^(2) + ... + H_eff^(max_order)."""
    total = zero(d.space)
    for order in range(2, max_order + 1):
        total = total + effn(d, order, policy).total
    return total


def matrix_element(H: Union[EffectiveHamiltonian, Operator], bra: Label, ket: Label) -> complex:
    op = H.total if isinstance(H, EffectiveHamiltonian) else H
    return op.element(basis_index(op.space, bra), basis_index(op.space, ket))


def effective_rabi_frequency(H: Union[EffectiveHamiltonian, Operator], bra: Label, ket: Label) -> float:
    return abs(matrix_element(H, bra, ket))
