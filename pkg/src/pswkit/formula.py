"""Model formulas: ``response ~ a + b*c + factor(g):d``.

Operator precedence follows the Wilkinson-Rogers convention: ``:`` binds
tighter than ``*``, which binds tighter than ``+``. Parentheses group
sub-expressions, so ``(a + b)*c`` expands to ``a + b + c + a:c + b:c``.
``factor(x)`` (or the alias ``as.factor(x)``) requests dummy coding; no
other functions are accepted. Terms keep their order of first appearance
and are deduplicated as sets of variables, so ``a:b`` and ``b:a`` are the
same term.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .data import MISSING_TOKENS, Dataset
from .errors import DataError, FormulaError

FACTOR_FUNCS = ("factor", "as.factor")
_TOKEN = re.compile(r"\s*(?:([A-Za-z_.][A-Za-z0-9_.]*)|(\S))")


@dataclass(frozen=True, order=True)
class Variable:
    name: str
    factor: bool = False

    def render(self) -> str:
        return f"factor({self.name})" if self.factor else self.name


@dataclass(frozen=True)
class Term:
    variables: tuple[Variable, ...]

    @property
    def key(self) -> frozenset:
        return frozenset(self.variables)

    def render(self) -> str:
        return ":".join(v.render() for v in self.variables)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class Formula:
    response: str
    terms: tuple[Term, ...]

    def render(self) -> str:
        rhs = " + ".join(t.render() for t in self.terms)
        return f"{self.response} ~ {rhs}"

    def __str__(self) -> str:
        return self.render()

    @property
    def variables(self) -> list[Variable]:
        seen: dict[Variable, None] = {}
        for t in self.terms:
            for v in t.variables:
                seen.setdefault(v)
        return list(seen)


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    column_names: tuple[str, ...]
    has_intercept: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def covariates(self) -> tuple[np.ndarray, tuple[str, ...]]:
        """Columns other than the intercept."""
        if self.has_intercept:
            return self.values[:, 1:], self.column_names[1:]
        return self.values, self.column_names


# parsing ---------------------------------------------------------------


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - pattern matches any non-space char
            break
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[str], source: str):
        self.toks = tokens
        self.i = 0
        self.source = source

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise FormulaError(f"unexpected end of formula: {self.source!r}")
        self.i += 1
        return tok

    def expect(self, tok: str) -> None:
        got = self.take()
        if got != tok:
            raise FormulaError(f"expected {tok!r} but found {got!r} in {self.source!r}")

    def parse_sum(self) -> list[Term]:
        out = self.parse_prod()
        while self.peek() == "+":
            self.take()
            out = _union(out, self.parse_prod())
        return out

    def parse_prod(self) -> list[Term]:
        out = self.parse_inter()
        while self.peek() == "*":
            self.take()
            rhs = self.parse_inter()
            out = _union(_union(out, rhs), _interact(out, rhs))
        return out

    def parse_inter(self) -> list[Term]:
        out = self.parse_atom()
        while self.peek() == ":":
            self.take()
            out = _interact(out, self.parse_atom())
        return out

    def parse_atom(self) -> list[Term]:
        tok = self.take()
        if tok == "(":
            inner = self.parse_sum()
            if self.peek() != ")":
                raise FormulaError(f"unbalanced parentheses in {self.source!r}")
            self.take()
            return inner
        if not _is_name(tok):
            raise FormulaError(f"unexpected token {tok!r} in {self.source!r}")
        if self.peek() == "(":
            if tok not in FACTOR_FUNCS:
                raise FormulaError(
                    f"unsupported term function {tok!r}: only factor() is allowed "
                    "(precompute spline or transformed columns instead)"
                )
            self.take()
            name = self.take()
            if not _is_name(name):
                raise FormulaError(f"factor() takes a single column name in {self.source!r}")
            if self.peek() == "(":
                raise FormulaError(f"nested functions are not supported in {self.source!r}")
            if self.peek() != ")":
                raise FormulaError(f"unbalanced parentheses in {self.source!r}")
            self.take()
            return [Term((Variable(name, True),))]
        return [Term((Variable(tok, False),))]


def _is_name(tok: str) -> bool:
    return bool(re.fullmatch(r"[A-Za-z_.][A-Za-z0-9_.]*", tok))


def _union(a: list[Term], b: list[Term]) -> list[Term]:
    keys = {t.key for t in a}
    out = list(a)
    for t in b:
        if t.key not in keys:
            keys.add(t.key)
            out.append(t)
    return out


def _interact(a: list[Term], b: list[Term]) -> list[Term]:
    out: list[Term] = []
    for s in a:
        for t in b:
            merged = list(s.variables)
            for v in t.variables:
                if v not in merged:
                    merged.append(v)
            out = _union(out, [Term(tuple(merged))])
    return out


def parse_formula(text: str) -> Formula:
    """Parse ``response ~ rhs`` into a :class:`Formula`."""
    if text.count("~") != 1:
        raise FormulaError(f"formula must contain exactly one '~': {text!r}")
    lhs, rhs = text.split("~")
    if text.count("(") != text.count(")"):
        raise FormulaError(f"unbalanced parentheses in {text!r}")
    response = lhs.strip()
    if not response:
        raise FormulaError(f"empty response in {text!r}")
    if not _is_name(response):
        raise FormulaError(f"response must be a single column name, got {response!r}")
    if not rhs.strip():
        raise FormulaError(f"empty right-hand side in {text!r}")
    parser = _Parser(_tokenize(rhs), text)
    terms = parser.parse_sum()
    if parser.peek() is not None:
        tok = parser.peek()
        if tok == ")":
            raise FormulaError(f"unbalanced parentheses in {text!r}")
        raise FormulaError(f"unexpected token {tok!r} in {text!r}")
    return Formula(response, tuple(terms))


# design matrices ---------------------------------------------------------


def factor_levels(d: Dataset, name: str) -> list[str]:
    vals = [v.strip() for v in d.column(name)]
    for i, v in enumerate(vals):
        if v in MISSING_TOKENS:
            raise DataError(f"missing value in covariate {name!r} (row {i + 2})")
    return sorted(set(vals))


def _variable_columns(v: Variable, d: Dataset) -> list[tuple[str, np.ndarray]]:
    if not v.factor:
        return [(v.name, d.numeric(v.name))]
    vals = np.array([s.strip() for s in d.column(v.name)], dtype=object)
    levels = factor_levels(d, v.name)
    if len(levels) < 2:
        raise DataError(f"factor {v.name!r} has fewer than two observed levels")
    return [(f"{v.name}={lev}", (vals == lev).astype(float)) for lev in levels[1:]]


def build_design_matrix(f: Formula, d: Dataset, intercept: bool = True) -> DesignMatrix:
    """Expand ``f``'s right-hand side over ``d`` into a numeric matrix.

    The intercept comes first; factors are dummy coded against their
    lexicographically first observed level; interaction columns are
    elementwise products of their parents' columns.
    """
    cache: dict[Variable, list[tuple[str, np.ndarray]]] = {}
    names: list[str] = []
    cols: list[np.ndarray] = []
    if intercept:
        names.append("(Intercept)")
        cols.append(np.ones(d.n))
    for term in f.terms:
        parts = [("", np.ones(d.n))]
        for v in term.variables:
            if v not in cache:
                cache[v] = _variable_columns(v, d)
            parts = [
                (f"{pn}:{vn}" if pn else vn, pc * vc)
                for pn, pc in parts
                for vn, vc in cache[v]
            ]
        for name, col in parts:
            names.append(name)
            cols.append(col)
    values = np.column_stack(cols) if cols else np.empty((d.n, 0))
    _check_degenerate(values, names)
    return DesignMatrix(values, tuple(names), intercept)


def _check_degenerate(values: np.ndarray, names: list[str]) -> None:
    seen: dict[bytes, str] = {}
    for k, name in enumerate(names):
        col = np.ascontiguousarray(values[:, k])
        if values.shape[0] and not np.any(col):
            raise DataError(f"design column {name!r} is identically zero")
        key = col.tobytes()
        if key in seen:
            raise DataError(f"design columns {seen[key]!r} and {name!r} are identical (collinear)")
        seen[key] = name
