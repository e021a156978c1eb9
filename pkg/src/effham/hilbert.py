"""
Composite Hilbert spaces of qubits and Fock-truncated bosonic modes, and the
sparse complex operator algebra built on them.

Basis ordering is row-major over factors with the last factor varying fastest,
i.e. the ordering of ``scipy.sparse.kron(f0, kron(f1, ...))``. Within a qubit
leg |g> is index 0 and |e> is index 1; within a boson leg index k is the Fock
state |k>.
"""
import re
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from effham.common import PRUNE_TOL
from effham.errors import InvalidLabel, InvalidLeg, SpaceMismatch

__all__ = ['FactorKind', 'Factor', 'SpaceSpec', 'Operator', 'qubit_op', 'boson_op', 'identity', 'zero', 'embed',
           'mul', 'add', 'scale', 'dagger', 'commutator', 'hermitian_defect', 'basis_index', 'basis_label']


class FactorKind(Enum):
    QUBIT = 'qubit'
    BOSON = 'boson'


@dataclass(frozen=True)
class Factor:
    kind: FactorKind
    cutoff: int = 2

    def __post_init__(self):
        if self.kind == FactorKind.QUBIT and self.cutoff != 2:
            raise ValueError(f'A qubit factor has dimension 2, got {self.cutoff}')
        if self.kind == FactorKind.BOSON and (not isinstance(self.cutoff, int) or self.cutoff < 2):
            raise ValueError(f'Boson cutoff must be an integer >= 2, got {self.cutoff!r}')

    @staticmethod
    def qubit() -> 'Factor':
        return Factor(FactorKind.QUBIT, 2)

    @staticmethod
    def boson(cutoff: int) -> 'Factor':
        return Factor(FactorKind.BOSON, cutoff)

    @property
    def dim(self) -> int:
        return self.cutoff

    def to_json(self) -> dict:
        if self.kind == FactorKind.QUBIT:
            return {'kind': 'qubit'}
        return {'kind': 'boson', 'cutoff': self.cutoff}


@dataclass(frozen=True)
class SpaceSpec:
    factors: Tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, 'factors', tuple(self.factors))
        if not self.factors:
            raise ValueError('A space needs at least one factor')
        for f in self.factors:
            if not isinstance(f, Factor):
                raise ValueError(f'Not a space factor: {f!r}')

    @classmethod
    def of(cls, *factors: Factor) -> 'SpaceSpec':
        return cls(tuple(factors))

    @classmethod
    def from_json(cls, items: Sequence[dict]) -> 'SpaceSpec':
        factors = []
        for item in items:
            kind = item.get('kind')
            if kind == 'qubit':
                factors.append(Factor.qubit())
            elif kind == 'boson':
                if 'cutoff' not in item:
                    raise ValueError('boson factor requires a "cutoff"')
                factors.append(Factor.boson(int(item['cutoff'])))
            else:
                raise ValueError(f'Unknown factor kind {kind!r}')
        return cls(tuple(factors))

    def to_json(self) -> List[dict]:
        return [f.to_json() for f in self.factors]

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def boson_legs(self) -> Tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.factors) if f.kind == FactorKind.BOSON)

    def factor(self, leg: int) -> Factor:
        if not isinstance(leg, (int, np.integer)) or leg < 0 or leg >= len(self.factors):
            raise InvalidLeg(f'Leg {leg} out of range for a space with {len(self.factors)} factors')
        return self.factors[leg]


class Operator:
    """
    Immutable sparse complex matrix bound to a SpaceSpec.

    Storage is canonical CSR (sorted indices, no duplicates, no entries with
    magnitude <= PRUNE_TOL), so ``==`` is a structural comparison.
    """
    __slots__ = ('_space', '_matrix')

    def __init__(self, space: SpaceSpec, matrix):
        m = sp.csr_matrix(matrix, dtype=complex, copy=True)
        if m.shape != (space.dim, space.dim):
            raise SpaceMismatch(f'Matrix of shape {m.shape} does not fit a space of dimension {space.dim}')
        m.sum_duplicates()
        if m.nnz:
            m.data[np.abs(m.data) <= PRUNE_TOL] = 0
            m.eliminate_zeros()
        m.sort_indices()
        self._space = space
        self._matrix = m

    @property
    def space(self) -> SpaceSpec:
        return self._space

    @property
    def matrix(self) -> sp.csr_matrix:
        # callers must treat this as read-only
        return self._matrix

    @property
    def nnz(self) -> int:
        return self._matrix.nnz

    def entries(self) -> Dict[Tuple[int, int], complex]:
        coo = self._matrix.tocoo()
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def triplets(self) -> List[Tuple[int, int, complex]]:
        coo = self._matrix.tocoo()
        out = [(int(r), int(c), complex(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]
        out.sort(key=lambda e: (e[0], e[1]))
        return out

    def to_dense(self) -> np.ndarray:
        return self._matrix.toarray()

    def element(self, row: int, col: int) -> complex:
        return complex(self._matrix[row, col])

    def is_zero(self) -> bool:
        return self._matrix.nnz == 0

    def dag(self) -> 'Operator':
        return dagger(self)

    def allclose(self, other: 'Operator', atol: float = 1e-12) -> bool:
        _check_same_space(self, other)
        diff = self._matrix - other._matrix
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= atol

    def __add__(self, other: 'Operator') -> 'Operator':
        return add(self, other)

    def __sub__(self, other: 'Operator') -> 'Operator':
        return add(self, scale(-1, other))

    def __neg__(self) -> 'Operator':
        return scale(-1, self)

    def __mul__(self, c) -> 'Operator':
        if isinstance(c, Operator):
            return mul(self, c)
        return scale(c, self)

    def __rmul__(self, c) -> 'Operator':
        return scale(c, self)

    def __matmul__(self, other: 'Operator') -> 'Operator':
        return mul(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Operator):
            return NotImplemented
        a, b = self._matrix, other._matrix
        return (self._space == other._space
                and np.array_equal(a.indptr, b.indptr)
                and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))

    __hash__ = None

    def __repr__(self) -> str:
        return f'Operator(dim={self._space.dim}, nnz={self.nnz})'


def _check_same_space(A: Operator, B: Operator):
    if A.space != B.space:
        raise SpaceMismatch(f'Operators live on different spaces: {A.space.dims} vs {B.space.dims}')


# local generators, basis order (|g>, |e>)
_QUBIT_LOCAL = {
    'sp': sp.csr_matrix(([1.0], ([1], [0])), shape=(2, 2)),
    'sm': sp.csr_matrix(([1.0], ([0], [1])), shape=(2, 2)),
    'sz': sp.diags([-1.0, 1.0]).tocsr(),
    'id': sp.identity(2, format='csr'),
}


def _boson_local(which: str, cutoff: int) -> sp.csr_matrix:
    a = sp.diags(np.sqrt(np.arange(1, cutoff, dtype=float)), offsets=1, shape=(cutoff, cutoff)).tocsr()
    builders = {
        'a': lambda: a,
        'adag': lambda: a.conj().T.tocsr(),
        'n': lambda: sp.diags(np.arange(cutoff, dtype=float)).tocsr(),
        'id': lambda: sp.identity(cutoff, format='csr'),
    }
    if which not in builders:
        raise ValueError(f"Unknown boson operator '{which}', expected one of {sorted(builders)}")
    return builders[which]()


def embed(space: SpaceSpec, leg: int, local) -> Operator:
    """Embed a single-leg matrix into ``space`` by identities on every other leg."""
    space.factor(leg)
    mats = [local if i == leg else sp.identity(d, format='csr') for i, d in enumerate(space.dims)]
    return Operator(space, reduce(lambda x, y: sp.kron(x, y, format='csr'), mats))


def qubit_op(space: SpaceSpec, leg: int, which: str) -> Operator:
    if space.factor(leg).kind != FactorKind.QUBIT:
        raise InvalidLeg(f'Leg {leg} is not a qubit')
    if which not in _QUBIT_LOCAL:
        raise ValueError(f"Unknown qubit operator '{which}', expected one of {sorted(_QUBIT_LOCAL)}")
    return embed(space, leg, _QUBIT_LOCAL[which])


def boson_op(space: SpaceSpec, leg: int, which: str) -> Operator:
    f = space.factor(leg)
    if f.kind != FactorKind.BOSON:
        raise InvalidLeg(f'Leg {leg} is not bosonic')
    return embed(space, leg, _boson_local(which, f.cutoff))


def identity(space: SpaceSpec) -> Operator:
    return Operator(space, sp.identity(space.dim, format='csr'))


def zero(space: SpaceSpec) -> Operator:
    return Operator(space, sp.csr_matrix((space.dim, space.dim)))


def mul(A: Operator, B: Operator) -> Operator:
    _check_same_space(A, B)
    return Operator(A.space, A.matrix @ B.matrix)


def add(A: Operator, B: Operator) -> Operator:
    _check_same_space(A, B)
    return Operator(A.space, A.matrix + B.matrix)


def scale(c: complex, A: Operator) -> Operator:
    return Operator(A.space, complex(c) * A.matrix)


def dagger(A: Operator) -> Operator:
    return Operator(A.space, A.matrix.conj().T)


def commutator(A: Operator, B: Operator) -> Operator:
    _check_same_space(A, B)
    return Operator(A.space, A.matrix @ B.matrix - B.matrix @ A.matrix)


def hermitian_defect(A: Operator) -> float:
    """Max-norm of A - A^dagger; zero iff A is hermitian."""
    diff = A.matrix - A.matrix.conj().T
    if diff.nnz == 0:
        return 0.0
    return float(np.max(np.abs(diff.data)))


# basis labels: "gg,1" = qubit 0 in g, qubit 1 in g, boson in |1>
_QUBIT_LETTERS = {'g': 0, 'e': 1}
_pat_letters = re.compile(r'^[ge]+$')
_pat_int = re.compile(r'^\d+$')

Label = Union[str, Sequence[int]]


def _label_levels(label: Label) -> List[Tuple[str, int]]:
    if not isinstance(label, str):
        return [('int', int(v)) for v in label]
    levels = []
    for chunk in label.split(','):
        chunk = chunk.strip().lower()
        if _pat_letters.match(chunk):
            levels.extend(('letter', _QUBIT_LETTERS[ch]) for ch in chunk)
        elif _pat_int.match(chunk):
            levels.append(('int', int(chunk)))
        else:
            raise InvalidLabel(f"Cannot read basis label chunk '{chunk}' in '{label}'")
    return levels


def basis_index(space: SpaceSpec, label: Label) -> int:
    levels = _label_levels(label)
    if len(levels) != len(space.factors):
        raise InvalidLabel(f"Label '{label}' names {len(levels)} factors, the space has {len(space.factors)}")
    index = 0
    for f, (tag, level) in zip(space.factors, levels):
        if tag == 'letter' and f.kind != FactorKind.QUBIT:
            raise InvalidLabel(f"Qubit level letter given for a bosonic factor in '{label}'")
        if not 0 <= level < f.dim:
            raise InvalidLabel(f"Level {level} out of range for a factor of dimension {f.dim} in '{label}'")
        index = index * f.dim + level
    return index


def basis_label(space: SpaceSpec, index: int) -> str:
    if not 0 <= index < space.dim:
        raise InvalidLabel(f'Basis index {index} out of range for dimension {space.dim}')
    levels = np.unravel_index(index, space.dims)
    chunks: List[str] = []
    letters = ''
    for f, level in zip(space.factors, levels):
        if f.kind == FactorKind.QUBIT:
            letters += 'ge'[int(level)]
            continue
        if letters:
            chunks.append(letters)
            letters = ''
        chunks.append(str(int(level)))
    if letters:
        chunks.append(letters)
    return ','.join(chunks)
