"""VNN-LIB properties and counterexample witnesses.

A property is read into an input box plus a list of unsafe output polytopes.
The list is a disjunction: the property is violated (``sat``) as soon as any
one polytope is reachable.
"""
import itertools
import logging
import re
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParseError
from .setlib import HPolytope, Interval
from .utils import format_float

logger = logging.getLogger(__name__)

type SExp = str | list["SExp"]

_VARIABLE = re.compile(r"^([XY])_(\d+)$")
_COMPARISONS = ("<=", ">=", "<", ">", "=")


@dataclass(frozen=True, eq=False)
class VerificationTask:
    input_box: Interval
    unsafe: tuple[HPolytope, ...]

    def __post_init__(self) -> None:
        unsafe = tuple(self.unsafe)
        if not unsafe:
            raise ContractError("a verification task needs at least one unsafe polytope")
        widths = {polytope.dim for polytope in unsafe}
        if len(widths) != 1:
            raise ContractError("unsafe polytopes differ in output dimension")
        object.__setattr__(self, "unsafe", unsafe)

    @property
    def input_dim(self) -> int:
        return self.input_box.dim

    @property
    def output_dim(self) -> int:
        return self.unsafe[0].dim


def tokenize(text: str) -> list[str]:
    """Split VNN-LIB text into parentheses and atoms, dropping ';' comments."""
    text = re.sub(r";[^\n]*", "", text)
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_sexp(tokens: list[str]) -> list[SExp]:
    """Parse all top-level s-expressions in the token list."""
    pending = deque(tokens)
    forms: list[SExp] = []
    while pending:
        forms.append(_parse_one(pending, len(forms) + 1))
    return forms


def _parse_one(pending: deque[str], form: int) -> SExp:
    token = pending.popleft()
    if token == ")":
        raise ParseError("unexpected ')'", location=f"form {form}")
    if token != "(":
        return token
    stack: list[list[SExp]] = [[]]
    while stack:
        if not pending:
            raise ParseError("unbalanced parentheses", location=f"form {form}")
        token = pending.popleft()
        if token == "(":
            stack.append([])
        elif token == ")":
            done = stack.pop()
            if not stack:
                return done
            stack[-1].append(done)
        else:
            stack[-1].append(token)
    raise AssertionError("unreachable")


@dataclass
class _Linear:
    """Affine expression coefficients over X and Y plus a constant."""
    x: np.ndarray
    y: np.ndarray
    const: float

    def scaled(self, factor: float) -> "_Linear":
        return _Linear(self.x * factor, self.y * factor, self.const * factor)

    def plus(self, other: "_Linear") -> "_Linear":
        return _Linear(self.x + other.x, self.y + other.y, self.const + other.const)

    @property
    def is_constant(self) -> bool:
        return not (np.any(self.x) or np.any(self.y))


class _PropertyReader:
    def __init__(self, input_dim: int, output_dim: int) -> None:
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.declared: dict[str, str] = {}
        self.lower = np.full(input_dim, -np.inf)
        self.upper = np.full(input_dim, np.inf)
        self.declared_at: dict[int, str] = {}
        # one entry per output assertion; each is a list of alternative row sets
        self.clauses: list[list[list[tuple[np.ndarray, float]]]] = []

    def zero(self) -> _Linear:
        return _Linear(np.zeros(self.input_dim), np.zeros(self.output_dim), 0.0)

    def read(self, forms: list[SExp]) -> None:
        for n, form in enumerate(forms, start=1):
            path = f"form {n}"
            if not isinstance(form, list) or not form:
                raise ParseError("expected a command", location=path)
            match form[0]:
                case "declare-const":
                    self.declare(form, path)
                case "assert":
                    if len(form) != 2:
                        raise ParseError("assert takes one argument", location=path)
                    self.assertion(form[1], f"{path} > assert")
                case _:
                    raise ParseError(f"unsupported command {form[0]!r}", location=path)

    def declare(self, form: list[SExp], path: str) -> None:
        if len(form) != 3 or not isinstance(form[1], str):
            raise ParseError("malformed declare-const", location=path)
        name, sort = form[1], form[2]
        if sort != "Real":
            raise ParseError(f"unsupported sort {sort!r} for {name}", location=path)
        match = _VARIABLE.match(name)
        if match is None:
            raise ParseError(f"unknown symbol {name}", location=path)
        index = int(match.group(2))
        limit = self.input_dim if match.group(1) == "X" else self.output_dim
        if index >= limit:
            raise ParseError(f"unknown symbol {name} (dimension is {limit})", location=path)
        self.declared[name] = path
        if match.group(1) == "X":
            self.declared_at[index] = path

    def expression(self, sexp: SExp, path: str) -> _Linear:
        if isinstance(sexp, str):
            if sexp in self.declared:
                kind, index = _VARIABLE.match(sexp).groups()
                result = self.zero()
                (result.x if kind == "X" else result.y)[int(index)] = 1.0
                return result
            try:
                value = float(sexp)
            except ValueError:
                raise ParseError(f"unknown symbol {sexp}", location=path) from None
            if not np.isfinite(value):
                raise ParseError(f"non-finite constant {sexp}", location=path)
            result = self.zero()
            result.const = value
            return result
        if not sexp or not isinstance(sexp[0], str):
            raise ParseError("malformed expression", location=path)
        head, args = sexp[0], sexp[1:]
        terms = [self.expression(arg, f"{path} > {head}[{i}]") for i, arg in enumerate(args, start=1)]
        if not terms:
            raise ParseError(f"operator {head!r} needs arguments", location=path)
        match head:
            case "+":
                return _sum(terms)
            case "-":
                return terms[0].scaled(-1.0) if len(terms) == 1 else terms[0].plus(_sum(terms[1:]).scaled(-1.0))
            case "*":
                variable = [t for t in terms if not t.is_constant]
                if len(variable) > 1:
                    raise ParseError("non-linear atom: product of variables", location=path)
                with np.errstate(over="ignore"):
                    factor = float(np.prod([t.const for t in terms if t.is_constant]))
                if not np.isfinite(factor):
                    raise ParseError("constant product overflows", location=path)
                return variable[0].scaled(factor) if variable else _constant_like(terms[0], factor)
            case "/":
                if len(terms) != 2 or not terms[1].is_constant or terms[1].const == 0:
                    raise ParseError("non-linear atom: division needs a nonzero constant divisor", location=path)
                return terms[0].scaled(1.0 / terms[1].const)
            case _:
                raise ParseError(f"non-linear atom: unsupported operator {head!r}", location=path)

    def atom(self, sexp: SExp, path: str) -> list[_Linear]:
        """Comparison as rows `expr <= 0`."""
        if not isinstance(sexp, list) or not sexp or sexp[0] not in _COMPARISONS:
            raise ParseError("expected a comparison", location=path)
        if len(sexp) != 3:
            raise ParseError(f"comparison {sexp[0]!r} needs two operands", location=path)
        op = sexp[0]
        left = self.expression(sexp[1], f"{path} > {op}[1]")
        right = self.expression(sexp[2], f"{path} > {op}[2]")
        less = left.plus(right.scaled(-1.0))
        if op in ("<=", "<"):
            return [less]
        if op in (">=", ">"):
            return [less.scaled(-1.0)]
        return [less, less.scaled(-1.0)]

    def conjunction(self, sexp: SExp, path: str) -> list[_Linear]:
        if isinstance(sexp, list) and sexp and sexp[0] == "and":
            rows = []
            for i, part in enumerate(sexp[1:], start=1):
                rows += self.conjunction(part, f"{path} > and[{i}]")
            return rows
        return self.atom(sexp, path)

    def assertion(self, sexp: SExp, path: str) -> None:
        if isinstance(sexp, list) and sexp and sexp[0] == "or":
            alternatives = [
                self.conjunction(part, f"{path} > or[{i}]") for i, part in enumerate(sexp[1:], start=1)
            ]
            if not alternatives:
                raise ParseError("empty disjunction", location=path)
            if any(np.any(row.x) for rows in alternatives for row in rows):
                raise ParseError("disjunctive input constraints are not supported", location=path)
            self.clauses.append([self.output_rows(rows, path) for rows in alternatives])
            return
        rows = self.conjunction(sexp, path)
        outputs = []
        for row in rows:
            if np.any(row.x) and np.any(row.y):
                raise ParseError("atom mixes input and output variables", location=path)
            if np.any(row.x):
                self.input_bound(row, path)
            else:
                outputs.append(row)
        if outputs:
            self.clauses.append([self.output_rows(outputs, path)])

    def input_bound(self, row: _Linear, path: str) -> None:
        used = np.flatnonzero(row.x)
        if used.size != 1:
            raise ParseError("input constraints must bound a single variable", location=path)
        i = int(used[0])
        bound = -row.const / row.x[i]
        if row.x[i] > 0:
            self.upper[i] = min(self.upper[i], bound)
        else:
            self.lower[i] = max(self.lower[i], bound)

    def output_rows(self, rows: list[_Linear], path: str) -> list[tuple[np.ndarray, float]]:
        for row in rows:
            if row.is_constant:
                raise ParseError("constraint mentions no output variable", location=path)
        return [(row.y, -row.const) for row in rows]

    def task(self) -> VerificationTask:
        for i in range(self.input_dim):
            where = self.declared_at.get(i, "end of property")
            if not (np.isfinite(self.lower[i]) and np.isfinite(self.upper[i])):
                raise ParseError(f"input variable X_{i} unbounded", location=where)
            if self.lower[i] > self.upper[i]:
                raise ParseError(f"input variable X_{i} has an empty range", location=where)
        if not self.clauses:
            raise ParseError("no output constraint asserted", location="end of property")
        unsafe = []
        for choice in itertools.product(*self.clauses):
            rows = [row for alternative in choice for row in alternative]
            unsafe.append(HPolytope(np.vstack([a for a, _ in rows]), np.array([b for _, b in rows])))
        return VerificationTask(Interval(self.lower, self.upper), tuple(unsafe))


def _sum(terms: list[_Linear]) -> _Linear:
    total = terms[0]
    for term in terms[1:]:
        total = total.plus(term)
    return total


def _constant_like(template: _Linear, value: float) -> _Linear:
    return _Linear(np.zeros_like(template.x), np.zeros_like(template.y), value)


def parse_vnnlib(text: str, input_dim: int, output_dim: int) -> VerificationTask:
    """Parse a VNN-LIB property for a network with the given input/output sizes.

    Strict comparisons are read as non-strict. Several output assertions are
    conjoined, and disjunctions among them are multiplied out, one polytope
    per resulting disjunct.
    """
    reader = _PropertyReader(input_dim, output_dim)
    reader.read(parse_sexp(tokenize(text)))
    task = reader.task()
    logger.debug("Parsed property with %d unsafe polytopes", len(task.unsafe))
    return task


def write_witness(x: np.ndarray, y: np.ndarray) -> str:
    """Counterexample in the competition format: `sat` then ((X_i v) ... (Y_j v))."""
    entries = [f"(X_{i} {format_float(v)})" for i, v in enumerate(np.asarray(x, dtype=np.float64))]
    entries += [f"(Y_{j} {format_float(v)})" for j, v in enumerate(np.asarray(y, dtype=np.float64))]
    return "sat\n(" + "\n".join(entries) + ")\n"


def parse_witness(text: str) -> tuple[np.ndarray, np.ndarray]:
    tokens = tokenize(text)
    if tokens and tokens[0] == "sat":
        tokens = tokens[1:]
    forms = parse_sexp(tokens)
    if len(forms) != 1 or not isinstance(forms[0], list):
        raise ParseError("expected one list of assignments", location="witness")
    values: dict[str, dict[int, float]] = {"X": {}, "Y": {}}
    for n, entry in enumerate(forms[0], start=1):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(e, str) for e in entry)):
            raise ParseError("expected (name value)", location=f"witness entry {n}")
        match = _VARIABLE.match(entry[0])
        if match is None:
            raise ParseError(f"unknown symbol {entry[0]}", location=f"witness entry {n}")
        try:
            values[match.group(1)][int(match.group(2))] = float(entry[1])
        except ValueError:
            raise ParseError(f"non-numeric value {entry[1]!r}", location=f"witness entry {n}") from None

    def vector(kind: str) -> np.ndarray:
        found = values[kind]
        if sorted(found) != list(range(len(found))):
            raise ParseError(f"witness {kind} indices are not contiguous", location="witness")
        return np.array([found[i] for i in range(len(found))])

    return vector("X"), vector("Y")
