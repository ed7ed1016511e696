import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pswkit.data import Dataset
from pswkit.errors import DataError, FormulaError
from pswkit.formula import Term, Variable, build_design_matrix, parse_formula


def names(f):
    return [t.render() for t in f.terms]


def test_simple_sum():
    f = parse_formula("wage ~ white + maemp")
    assert f.response == "wage"
    assert names(f) == ["white", "maemp"]


def test_star_expansion():
    assert names(parse_formula("y ~ a*b")) == ["a", "b", "a:b"]


def test_three_way_star():
    assert names(parse_formula("y ~ a*b*c")) == ["a", "b", "a:b", "c", "a:c", "b:c", "a:b:c"]


def test_parentheses_distribute():
    assert names(parse_formula("y ~ (a + b):c")) == ["a:c", "b:c"]


def test_duplicate_terms_collapse():
    assert names(parse_formula("y ~ a + b + a + b:a + a:b")) == ["a", "b", "b:a"]


def test_factor_and_alias():
    f = parse_formula("y ~ factor(g) + as.factor(h)")
    assert f.terms[0].variables == (Variable("g", True),)
    assert f.terms[1].variables == (Variable("h", True),)


@pytest.mark.parametrize("text", ["y ~ bs(x)", "y ~ log(x)", "y ~ poly(x)"])
def test_unsupported_function(text):
    with pytest.raises(FormulaError, match="unsupported term function"):
        parse_formula(text)


@pytest.mark.parametrize("text", ["y x", "y ~ a ~ b", "y ~ (a + b", "~ a", "y ~", "y ~ a +", "1 ~ a"])
def test_malformed(text):
    with pytest.raises(FormulaError):
        parse_formula(text)


def _data(**cols):
    return Dataset.from_columns(cols)


def test_factor_reference_coding():
    d = Dataset.from_text("y,x\n1,B\n2,A\n3,C\n4,B\n")
    X = build_design_matrix(parse_formula("y ~ factor(x)"), d)
    assert X.column_names == ("(Intercept)", "x=B", "x=C")
    np.testing.assert_array_equal(X.values[:, 1], [1, 0, 0, 1])
    np.testing.assert_array_equal(X.values[:, 2], [0, 0, 1, 0])


def test_interaction_column():
    d = _data(y=[0.0, 1.0], a=[1.0, 2.0], b=[3.0, 4.0])
    X = build_design_matrix(parse_formula("y ~ a:b"), d)
    assert X.column_names == ("(Intercept)", "a:b")
    np.testing.assert_array_equal(X.values[:, 1], [3.0, 8.0])


def test_missing_value():
    d = Dataset.from_text("y,x\n1,0.5\n2,\n3,1.5\n")
    with pytest.raises(DataError, match="missing value in covariate"):
        build_design_matrix(parse_formula("y ~ x"), d)


def test_missing_column():
    d = _data(y=[1.0, 2.0], x=[0.0, 1.0])
    with pytest.raises(DataError, match="missing column"):
        build_design_matrix(parse_formula("y ~ w"), d)


def test_duplicate_columns_rejected():
    d = _data(y=[1.0, 2.0, 3.0], a=[1.0, 2.0, 4.0], b=[1.0, 2.0, 4.0])
    with pytest.raises(DataError):
        build_design_matrix(parse_formula("y ~ a + b"), d)


def test_single_level_factor_rejected():
    d = Dataset.from_text("y,g\n1,A\n2,A\n")
    with pytest.raises(DataError):
        build_design_matrix(parse_formula("y ~ factor(g)"), d)


def test_factor_interaction_with_numeric():
    d = Dataset.from_text("y,g,x\n1,A,1\n2,B,2\n3,C,3\n4,B,5\n")
    X = build_design_matrix(parse_formula("y ~ factor(g):x"), d)
    assert X.column_names == ("(Intercept)", "g=B:x", "g=C:x")
    np.testing.assert_array_equal(X.values[:, 1], [0, 2, 0, 5])


_ident = st.sampled_from(["a", "b", "c", "d", "x1", "x.2"])


@st.composite
def formulas(draw):
    def atom():
        name = draw(_ident)
        return f"factor({name})" if draw(st.booleans()) else name

    terms = []
    for _ in range(draw(st.integers(1, 4))):
        k = draw(st.integers(1, 3))
        op = draw(st.sampled_from([":", "*"]))
        terms.append(op.join(atom() for _ in range(k)))
    return "y ~ " + " + ".join(terms)


@given(formulas())
def test_render_round_trip(text):
    f = parse_formula(text)
    assert parse_formula(f.render()) == f


@given(st.integers(2, 30), st.integers(0, 10_000))
def test_star_equals_concatenation(n, seed):
    r = np.random.default_rng(seed)
    d = _data(y=r.normal(size=n), a=r.normal(size=n), b=r.normal(size=n))
    full = build_design_matrix(parse_formula("y ~ a*b"), d)
    parts = [build_design_matrix(parse_formula(f"y ~ {t}"), d, intercept=False).values
             for t in ("a", "b", "a:b")]
    np.testing.assert_array_equal(full.values[:, 1:], np.hstack(parts))
    assert full.values.shape[0] == d.n


def test_term_key_is_order_free():
    a, b = Variable("a"), Variable("b")
    assert Term((a, b)).key == Term((b, a)).key
