import os
import random

import pytest

from planforge import catalog as cat
from planforge import runtime as rt

from conftest import MINI, fresh_catalog


def test_load_three_rows(tmp_path):
    c = fresh_catalog()
    path = tmp_path / "orders.tbl"
    path.write_text(
        "1|1|F|100.00|1994-01-01|1-URGENT|0|fine|\n"
        "2|2|O|200.00|1995-06-15|5-LOW|0|okay|\n"
        "3|1|P|300.00|1996-12-31|2-HIGH|0|good|\n")
    t = rt.load_table(str(path), c.relation("ORDERS"))
    assert t.row_count == 3
    assert t.rows[1]["O_TOTALPRICE"] == 200.0
    assert c.relation("ORDERS").stats.row_count == 3


def test_needed_attrs_prune_bytes(tmp_path):
    c = fresh_catalog()
    path = tmp_path / "orders.tbl"
    path.write_text("1|1|F|100.00|1994-01-01|1-URGENT|0|fine|\n")
    acct_full = rt.MemoryAccounting()
    rt.load_table(str(path), c.relation("ORDERS"), accounting=acct_full)
    acct_some = rt.MemoryAccounting()
    rt.load_table(str(path), c.relation("ORDERS"),
                  needed_attrs={"O_ORDERKEY"}, accounting=acct_some)
    assert acct_some.total() < acct_full.total()
    assert acct_some.total() == 4  # one INT, nothing else materialized


def test_malformed_date_names_row(tmp_path):
    c = fresh_catalog()
    path = tmp_path / "orders.tbl"
    path.write_text("1|1|F|100.00|1994-13-40|1-URGENT|0|x|\n")
    with pytest.raises(rt.LoadError, match=":1"):
        rt.load_table(str(path), c.relation("ORDERS"))


def test_arity_mismatch(tmp_path):
    c = fresh_catalog()
    path = tmp_path / "orders.tbl"
    path.write_text("1|2|\n")
    with pytest.raises(rt.LoadError, match="fields"):
        rt.load_table(str(path), c.relation("ORDERS"))


# ---------------------------------------------------------------------------
# dictionaries

def test_normal_dictionary_first_appearance():
    d = rt.build_string_dictionary(["SHIP", "MAIL", "SHIP"], rt.NORMAL)
    assert d.codes == {"SHIP": 0, "MAIL": 1}


def test_ordered_dictionary_sort_oracle():
    values = ["cherry", "apple", "banana"]
    d = rt.build_string_dictionary(values, rt.ORDERED)
    assert [d.codes[v] for v in sorted(set(values))] == [0, 1, 2]
    assert d.codes == {"apple": 0, "banana": 1, "cherry": 2}


def test_word_dictionary_tokenizes():
    d = rt.build_string_dictionary(["green metal box"], rt.WORD)
    assert len(d.tokens[0]) == 3
    assert d.code("metal") in d.tokens[0]
    assert d.code("plastic") == -1


def test_dictionary_roundtrip_decode():
    values = ["MAIL", "SHIP", "AIR", "MAIL", "RAIL"]
    for kind in (rt.NORMAL, rt.ORDERED):
        d = rt.build_string_dictionary(values, kind)
        for v in set(values):
            assert d.decode(d.code(v)) == v


def test_ordered_monotonic_adjacent_pairs():
    values = ["pear", "apple", "fig", "date", "apple"]
    d = rt.build_string_dictionary(values, rt.ORDERED)
    for a, b in zip(d.values, d.values[1:]):
        assert a < b
        assert d.codes[a] < d.codes[b]


def test_prefix_range_examples():
    d = rt.build_string_dictionary(
        ["apple", "banana", "blueberry", "cherry"], rt.ORDERED)
    assert rt.range_for_prefix(d, "b") == (1, 2)
    assert rt.range_for_prefix(d, "z") is None
    assert rt.range_for_prefix(d, "") == (0, d.distinct_count - 1)


def test_prefix_range_requires_ordered():
    d = rt.build_string_dictionary(["a", "b"], rt.NORMAL)
    with pytest.raises(rt.LoadError):
        rt.range_for_prefix(d, "a")


def brute_force_prefix_range(values_sorted, prefix):
    hits = [i for i, v in enumerate(values_sorted) if v.startswith(prefix)]
    return (hits[0], hits[-1]) if hits else None


def test_prefix_range_against_bruteforce_1000_sets():
    rng = random.Random(1789)
    alphabet = "abcdxyz"
    for _ in range(1000):
        n = rng.randint(1, 24)
        values = {"".join(rng.choice(alphabet)
                          for _ in range(rng.randint(0, 6)))
                  for _ in range(n)}
        values = sorted(values)
        d = rt.StringDictionary(rt.ORDERED, values,
                                {v: i for i, v in enumerate(values)})
        prefix = "".join(rng.choice(alphabet)
                         for _ in range(rng.randint(0, 3)))
        assert rt.range_for_prefix(d, prefix) == \
            brute_force_prefix_range(values, prefix)


def test_suffix_table_matches_endswith():
    values = ["STANDARD BRASS", "SMALL TIN", "PROMO BRASS", "LARGE STEEL"]
    d = rt.build_string_dictionary(values, rt.ORDERED)
    table = rt.suffix_table(d, "BRASS")
    for v in values:
        assert table[d.code(v)] == v.endswith("BRASS")


# ---------------------------------------------------------------------------
# partitioned tables

def _mini_table(relname):
    c = fresh_catalog()
    return rt.load_table(os.path.join(MINI, relname.lower() + ".tbl"),
                         c.relation(relname))


def test_pk1_partition_contiguous_keys():
    t = _mini_table("ORDERS")
    pt = rt.build_partitioned_table(t, "O_ORDERKEY", rt.PK1)
    for row in t.rows:
        assert pt.data[row["O_ORDERKEY"]] is row


def test_fk2_bucket_sizes_sum_to_rowcount():
    t = _mini_table("LINEITEM")
    pt = rt.build_partitioned_table(t, "L_ORDERKEY", rt.FK2)
    assert sum(pt.counts) == t.row_count
    for k, bucket in enumerate(pt.data):
        assert len(bucket) == pt.counts[k]
        for row in bucket:
            assert row["L_ORDERKEY"] == k


def test_partition_reconstructs_permutation():
    t = _mini_table("LINEITEM")
    pt = rt.build_partitioned_table(t, "L_ORDERKEY", rt.FK2)
    flat = [id(r) for bucket in pt.data for r in bucket]
    assert sorted(flat) == sorted(id(r) for r in t.rows)


def test_empty_table_partitions_empty():
    c = fresh_catalog()
    t = rt.Table(relation=c.relation("ORDERS"), attrs=["O_ORDERKEY"],
                 rows=[], row_count=0)
    pt = rt.build_partitioned_table(t, "O_ORDERKEY", rt.FK2)
    assert pt.data == [] and pt.counts == []


def test_duplicate_pk_rejected():
    c = fresh_catalog()
    t = rt.Table(relation=c.relation("ORDERS"), attrs=["O_ORDERKEY"],
                 rows=[{"O_ORDERKEY": 1}, {"O_ORDERKEY": 1}], row_count=2)
    with pytest.raises(rt.LoadError, match="duplicate primary key"):
        rt.build_partitioned_table(t, "O_ORDERKEY", rt.PK1)


def test_slot_cap_advises_fallback():
    c = fresh_catalog()
    t = rt.Table(relation=c.relation("ORDERS"), attrs=["O_ORDERKEY"],
                 rows=[{"O_ORDERKEY": 10_000_000}], row_count=1)
    with pytest.raises(rt.LoadError, match="cap"):
        rt.build_partitioned_table(t, "O_ORDERKEY", rt.PK1, max_slots=1000)


# ---------------------------------------------------------------------------
# date indices

def test_date_index_counts():
    c = fresh_catalog()
    rows = [{"O_ORDERDATE": cat.parse_date(s)}
            for s in ("1992-05-01", "1994-01-02", "1994-12-30", "1998-07-04")]
    t = rt.Table(relation=c.relation("ORDERS"), attrs=["O_ORDERDATE"],
                 rows=rows, row_count=4)
    idx = rt.build_date_index(t, "O_ORDERDATE")
    assert idx.min_year == 1992
    assert idx.n_years == 7
    assert idx.counts[1994 - 1992] == 2


def test_date_index_single_year():
    c = fresh_catalog()
    rows = [{"O_ORDERDATE": cat.parse_date("1995-03-03")}]
    t = rt.Table(relation=c.relation("ORDERS"), attrs=["O_ORDERDATE"],
                 rows=rows, row_count=1)
    idx = rt.build_date_index(t, "O_ORDERDATE")
    assert idx.n_years == 1 and idx.counts == [1]


def test_date_index_permutation():
    t = _mini_table("LINEITEM")
    idx = rt.build_date_index(t, "L_SHIPDATE")
    flat = [id(r) for b in idx.buckets for r in b]
    assert sorted(flat) == sorted(id(r) for r in t.rows)
    for y, bucket in enumerate(idx.buckets):
        for r in bucket:
            assert cat.date_year(r["L_SHIPDATE"]) == idx.min_year + y


def test_date_index_requires_date_attr():
    t = _mini_table("ORDERS")
    with pytest.raises(rt.LoadError, match="DATE"):
        rt.build_date_index(t, "O_ORDERKEY")
