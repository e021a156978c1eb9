import math
import re
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Tuple, Union

from effham.common import DEBUG_INFO
from effham.errors import ExprSyntaxError, ExprTypeError, InvalidLeg, UnknownIdentifier
from effham.hilbert import Operator, SpaceSpec, boson_op, identity, mul, qubit_op, scale

__all__ = ['ExprParser', 'parse_operator_expr', 'evaluate_scalar', 'format_expr']

# operator builders addressable from an expression, name => (family, generator)
OPERATOR_CALLS = {
    'a': ('boson', 'a'),
    'adag': ('boson', 'adag'),
    'n': ('boson', 'n'),
    'sp': ('qubit', 'sp'),
    'sm': ('qubit', 'sm'),
    'sz': ('qubit', 'sz'),
}

# real functions allowed in scalar position
SCALAR_FUNCTIONS = {
    'cos': math.cos,
    'sin': math.sin,
    'sqrt': math.sqrt,
}

CONSTANTS = {
    'pi': math.pi,
    'e': math.e,
}

token_specification = [
    ('NUMBER', r'(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?j?'),
    ('NAME', r'[A-Za-z_][A-Za-z_0-9]*'),
    ('OP', r'[+\-*/]'),
    ('LPAREN', r'\('),
    ('RPAREN', r'\)'),
    ('SKIP', r'\s+'),
    ('MISMATCH', r'.'),
]
token_regex = re.compile('|'.join('(?P<%s>%s)' % pair for pair in token_specification))

Token = Tuple[str, Optional[str], int]
Value = Union[complex, Operator]


# Expression tree. Every node remembers the source offset it started at.
@dataclass(frozen=True)
class Num:
    text: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Name:
    name: str
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class OpCall:
    name: str
    leg: int
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Func:
    name: str
    arg: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: object
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Sum:
    first: object
    rest: Tuple[Tuple[str, object], ...]
    pos: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Prod:
    first: object
    rest: Tuple[Tuple[str, object], ...]
    pos: int = field(default=0, compare=False)


def tokenize(src: str) -> List[Token]:
    tokens: List[Token] = []
    for mo in token_regex.finditer(src):
        kind = mo.lastgroup
        if kind == 'SKIP':
            continue
        if kind == 'MISMATCH':
            raise ExprSyntaxError(f"Unexpected character '{mo.group()}'", mo.start())
        tokens.append((kind, mo.group(), mo.start()))
    tokens.append(('EOF', None, len(src)))
    return tokens


class _RecursiveDescent:
    """
    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | atom
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
    """

    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0
        self.current_token = self.tokens[self.pos]

    def next_token(self):
        self.pos += 1
        if self.pos < len(self.tokens):
            self.current_token = self.tokens[self.pos]

    def expect(self, kind: str, value: Optional[str] = None) -> Token:
        tok = self.current_token
        if tok[0] != kind or (value is not None and tok[1] != value):
            wanted = value or kind
            got = tok[1] if tok[1] is not None else 'end of input'
            raise ExprSyntaxError(f"Expected '{wanted}', got '{got}'", tok[2])
        self.next_token()
        return tok

    def is_op(self, *ops: str) -> bool:
        return self.current_token[0] == 'OP' and self.current_token[1] in ops

    def parse(self):
        node = self.expression()
        if self.current_token[0] != 'EOF':
            raise ExprSyntaxError(f"Unexpected token '{self.current_token[1]}'", self.current_token[2])
        return node

    def expression(self):
        start = self.current_token[2]
        first = self.term()
        rest = []
        while self.is_op('+', '-'):
            op = self.current_token[1]
            self.next_token()
            rest.append((op, self.term()))
        return Sum(first, tuple(rest), start) if rest else first

    def term(self):
        start = self.current_token[2]
        first = self.unary()
        rest = []
        while self.is_op('*', '/'):
            op = self.current_token[1]
            self.next_token()
            rest.append((op, self.unary()))
        return Prod(first, tuple(rest), start) if rest else first

    def unary(self):
        if self.is_op('-'):
            start = self.current_token[2]
            self.next_token()
            return Neg(self.unary(), start)
        if self.is_op('+'):
            self.next_token()
            return self.unary()
        return self.atom()

    def atom(self):
        kind, text, start = self.current_token
        if kind == 'NUMBER':
            self.next_token()
            return Num(text, start)
        if kind == 'LPAREN':
            self.next_token()
            node = self.expression()
            self.expect('RPAREN')
            return node
        if kind == 'NAME':
            self.next_token()
            if self.current_token[0] != 'LPAREN':
                return Name(text, start)
            self.next_token()
            if text in OPERATOR_CALLS:
                leg_tok = self.expect('NUMBER')
                if not leg_tok[1].isdigit():
                    raise ExprSyntaxError(f"Leg of '{text}' must be a non-negative integer", leg_tok[2])
                self.expect('RPAREN')
                return OpCall(text, int(leg_tok[1]), start)
            if text in SCALAR_FUNCTIONS:
                arg = self.expression()
                self.expect('RPAREN')
                return Func(text, arg, start)
            raise UnknownIdentifier(f"Unknown function '{text}'", start)
        got = text if text is not None else 'end of input'
        raise ExprSyntaxError(f"Unexpected '{got}'", start)


class _Evaluator:

    def __init__(self, space: Optional[SpaceSpec], params: Mapping[str, complex]):
        self.space = space
        self.params = params

    def __call__(self, node) -> Value:
        method = getattr(self, 'eval_' + type(node).__name__)
        return method(node)

    def eval_Num(self, node: Num) -> complex:
        if node.text.endswith('j'):
            return complex(0, float(node.text[:-1]))
        return complex(float(node.text))

    def eval_Name(self, node: Name) -> Value:
        if node.name == 'id':
            if self.space is None:
                raise ExprTypeError("'id' needs a Hilbert space", node.pos)
            return identity(self.space)
        if node.name in self.params:
            return complex(self.params[node.name])
        if node.name in CONSTANTS:
            return complex(CONSTANTS[node.name])
        if node.name in OPERATOR_CALLS:
            raise ExprSyntaxError(f"Operator '{node.name}' needs a leg, e.g. {node.name}(0)", node.pos)
        raise UnknownIdentifier(f"Unknown identifier '{node.name}'", node.pos)

    def eval_OpCall(self, node: OpCall) -> Operator:
        if self.space is None:
            raise ExprTypeError(f"'{node.name}' needs a Hilbert space", node.pos)
        family, which = OPERATOR_CALLS[node.name]
        build = boson_op if family == 'boson' else qubit_op
        try:
            return build(self.space, node.leg, which)
        except InvalidLeg as e:
            raise ExprTypeError(str(e), node.pos)

    def eval_Func(self, node: Func) -> complex:
        arg = self(node.arg)
        if isinstance(arg, Operator):
            raise ExprTypeError(f"Argument of '{node.name}' must be a scalar", node.pos)
        if abs(arg.imag) > 1e-15:
            raise ExprTypeError(f"Argument of '{node.name}' must be real, got {arg}", node.pos)
        try:
            return complex(SCALAR_FUNCTIONS[node.name](arg.real))
        except ValueError as e:
            raise ExprTypeError(f"'{node.name}({arg.real})': {e}", node.pos)

    def eval_Neg(self, node: Neg) -> Value:
        value = self(node.operand)
        return scale(-1, value) if isinstance(value, Operator) else -value

    def eval_Sum(self, node: Sum) -> Value:
        total = self(node.first)
        for op, term in node.rest:
            value = self(term)
            if isinstance(total, Operator) != isinstance(value, Operator):
                raise ExprTypeError('Cannot add a scalar and an operator (multiply the scalar by id)', term.pos)
            if op == '-':
                value = scale(-1, value) if isinstance(value, Operator) else -value
            total = total + value
        return total

    def eval_Prod(self, node: Prod) -> Value:
        total = self(node.first)
        for op, factor in node.rest:
            value = self(factor)
            if op == '/':
                if isinstance(value, Operator):
                    raise ExprTypeError('Cannot divide by an operator', factor.pos)
                if value == 0:
                    raise ExprTypeError('Division by zero', factor.pos)
                value = 1 / value
            total = _multiply(total, value)
        return total


def _multiply(x: Value, y: Value) -> Value:
    if isinstance(x, Operator) and isinstance(y, Operator):
        return mul(x, y)
    if isinstance(x, Operator):
        return scale(y, x)
    if isinstance(y, Operator):
        return scale(x, y)
    return x * y


# pretty-printer: explicit parentheses keep the tree shape on reparse
def _fmt(node, parent: Optional[str] = None) -> str:
    if isinstance(node, Num):
        return node.text
    if isinstance(node, Name):
        return node.name
    if isinstance(node, OpCall):
        return f'{node.name}({node.leg})'
    if isinstance(node, Func):
        return f'{node.name}({_fmt(node.arg)})'
    if isinstance(node, Neg):
        return '-' + _fmt(node.operand, 'neg')
    if isinstance(node, Sum):
        text = _fmt(node.first, 'sum')
        for op, term in node.rest:
            text += f' {op} {_fmt(term, "sum")}'
        return f'({text})' if parent is not None else text
    if isinstance(node, Prod):
        text = _fmt(node.first, 'prod')
        for op, factor in node.rest:
            text += f'{op}{_fmt(factor, "prod")}'
        return f'({text})' if parent in ('prod', 'neg') else text
    raise TypeError(f'Not an expression node: {node!r}')


class _ExprParser:

    def __call__(self, src: str):
        DEBUG_INFO(f'Parsing operator expression: {src}')
        if not src or not src.strip():
            raise ExprSyntaxError('Empty expression', 0)
        return _RecursiveDescent(tokenize(src)).parse()

    @staticmethod
    def evaluate(tree, space: Optional[SpaceSpec], params: Mapping[str, complex]) -> Value:
        return _Evaluator(space, params)(tree)

    @staticmethod
    def format(tree) -> str:
        return _fmt(tree)


ExprParser = _ExprParser()


def parse_operator_expr(src: str, space: SpaceSpec, params: Optional[Mapping[str, complex]] = None) -> Operator:
    """
    Build the Operator denoted by ``src`` on ``space``.

    Products compose left to right, so ``adag(2)*sm(0)`` is the matrix product
    adag @ sm. Numeric literals, parameter names and the constants pi and e may
    appear anywhere a scalar is allowed; cos, sin and sqrt take real scalars.
    """
    value = ExprParser.evaluate(ExprParser(src), space, params or {})
    if not isinstance(value, Operator):
        raise ExprTypeError(f"Expression '{src}' is a scalar, not an operator (multiply by id)", 0)
    return value


def evaluate_scalar(src: str, params: Optional[Mapping[str, complex]] = None) -> complex:
    value = ExprParser.evaluate(ExprParser(src), None, params or {})
    return value


def format_expr(src: str) -> str:
    return ExprParser.format(ExprParser(src))
