import pytest

from planforge import catalog as cat
from planforge import plan as pl
from planforge import sexpr

from conftest import ALL_QUERIES, bundled_plan_text, fresh_catalog


# ---------------------------------------------------------------------------
# s-expressions

def test_sexpr_roundtrip():
    text = '(a (b "c d" 1.5) ; comment\n (e))'
    forms = sexpr.parse_all(text)
    assert forms == [["a", ["b", "c d", "1.5"], ["e"]]]
    assert isinstance(forms[0][1][1], sexpr.String)


def test_sexpr_unbalanced():
    with pytest.raises(sexpr.SexprError):
        sexpr.parse_all("(a (b)")
    with pytest.raises(sexpr.SexprError):
        sexpr.parse_all("(a))")


# ---------------------------------------------------------------------------
# schema parsing

def test_composite_primary_key_marked():
    c = fresh_catalog()
    li = c.relation("LINEITEM")
    assert li.primary_key == ["L_ORDERKEY", "L_LINENUMBER"]
    assert len(li.primary_key) > 1  # composite


def test_empty_schema_is_empty_catalog():
    assert cat.parse_schema("") == cat.Catalog()


def test_unknown_fk_target_rejected():
    text = """
    (relation LINEITEM
      (attrs (L_ORDERKEY INT))
      (foreign-key (L_ORDERKEY) ORDERZ (O_ORDERKEY)))
    """
    with pytest.raises(cat.SchemaError, match="unknown relation"):
        cat.parse_schema(text)


def test_duplicate_attribute_rejected():
    text = "(relation R (attrs (A INT) (A INT)))"
    with pytest.raises(cat.SchemaError, match="duplicate attribute"):
        cat.parse_schema(text)


def test_missing_pk_attribute_rejected():
    text = "(relation R (attrs (A INT)) (primary-key B))"
    with pytest.raises(cat.SchemaError, match="does not exist"):
        cat.parse_schema(text)


def test_date_parsing():
    assert cat.format_date(cat.parse_date("1994-03-15")) == "1994-03-15"
    assert cat.parse_date("1970-01-01") == 0
    with pytest.raises(cat.SchemaError):
        cat.parse_date("1994-13-40")


def test_date_matches_python_datetime():
    import datetime
    for iso in ("1992-01-01", "1996-02-29", "1998-12-31", "2000-03-01"):
        days = cat.parse_date(iso)
        expect = (datetime.date.fromisoformat(iso)
                  - datetime.date(1970, 1, 1)).days
        assert days == expect


# ---------------------------------------------------------------------------
# plan parsing

def test_q6_plan_shape():
    c = fresh_catalog()
    tree = pl.parse_plan(bundled_plan_text("q6"), c)
    # print <- agg <- select <- scan
    assert isinstance(tree, pl.Print)
    assert isinstance(tree.child, pl.Agg)
    assert isinstance(tree.child.child, pl.Select)
    assert isinstance(tree.child.child.child, pl.Scan)
    assert pl.count_nodes(tree) == 4


def test_two_node_plan():
    c = fresh_catalog()
    tree = pl.parse_plan("(print (exprs O_ORDERKEY) (scan ORDERS))", c)
    assert pl.count_nodes(tree) == 2


def test_date_vs_int_type_error():
    c = fresh_catalog()
    with pytest.raises(pl.PlanError, match="type mismatch"):
        pl.parse_plan(
            "(print (exprs L_ORDERKEY) (select (< L_SHIPDATE 42)"
            " (scan LINEITEM)))", c)


def test_unknown_attribute_rejected():
    c = fresh_catalog()
    with pytest.raises(pl.PlanError, match="unknown attribute"):
        pl.parse_plan("(print (exprs NO_SUCH) (scan ORDERS))", c)


def test_join_needs_two_children():
    c = fresh_catalog()
    with pytest.raises(pl.PlanError):
        pl.parse_plan(
            "(print (exprs O_ORDERKEY) (join equi (= O_ORDERKEY O_ORDERKEY)"
            " O_ORDERKEY O_ORDERKEY (scan ORDERS)))", c)


def test_agg_requires_functions():
    c = fresh_catalog()
    with pytest.raises(pl.PlanError):
        pl.parse_plan(
            "(print (exprs K) (agg (group (K L_SHIPMODE)) (aggs)"
            " (scan LINEITEM)))", c)


@pytest.mark.parametrize("name", ALL_QUERIES)
def test_pretty_print_roundtrip(name):
    c = fresh_catalog()
    tree = pl.parse_plan(bundled_plan_text(name), c)
    printed = pl.pretty_print(tree)
    again = pl.parse_plan(printed, c)
    assert pl.pretty_print(again) == printed


def test_roundtrip_covers_fused_nodes():
    from planforge.inline import fuse_agg_into_join
    c = fresh_catalog()
    tree = pl.parse_plan(bundled_plan_text("qmot"), c)
    fused = fuse_agg_into_join(tree)
    printed = pl.pretty_print(fused)
    again = pl.parse_plan(printed, c)
    assert pl.pretty_print(again) == printed


def test_attribute_resolution_unique():
    c = fresh_catalog()
    tree = pl.parse_plan(bundled_plan_text("q12"), c)
    base_refs = []

    def visit(e, schema_cols):
        if isinstance(e, pl.AttrRef):
            assert e.ty is not None
            if e.relation is not None:
                # resolved either to a base attribute or to an alias that
                # carries its source relation's provenance
                base_refs.append((e.relation, e.name))
        for ch in pl._expr_children(e):
            visit(ch, schema_cols)

    for e in pl.walk_exprs(tree):
        visit(e, None)
    assert ("LINEITEM", "L_SHIPMODE") in base_refs
    assert ("ORDERS", "O_ORDERKEY") in base_refs


def test_ambiguous_attribute_rejected():
    text = """
    (relation A (attrs (X INT)))
    (relation B (attrs (X INT)))
    """
    c = cat.parse_schema(text)
    with pytest.raises(pl.PlanError, match="ambiguous"):
        pl.parse_plan(
            "(print (exprs X) (join equi (= X X) X X (scan A) (scan B)))", c)
