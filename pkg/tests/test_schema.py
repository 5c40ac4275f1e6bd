import sqlite3

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from t2s import (
    ColumnDef,
    ColumnSelection,
    IngestError,
    SchemaCatalog,
    SelectionError,
    TableDef,
    expand_selection,
    ingest_schema,
    qualified_name,
    quote_identifier,
    render_schema,
)
from t2s.schema import _affinity


# -- type affinity --------------------------------------------------------


@pytest.mark.parametrize(
    "declared,expected",
    [
        ("INTEGER", "integer"),
        ("int", "integer"),
        ("BIGINT", "integer"),
        ("VARCHAR(80)", "text"),
        ("TEXT", "text"),
        ("CLOB", "text"),
        ("", "blob"),
        ("BLOB", "blob"),
        ("REAL", "real"),
        ("FLOAT", "real"),
        ("DOUBLE PRECISION", "real"),
        ("DATE", "other"),
        ("BOOLEAN", "other"),
    ],
)
def test_affinity(declared, expected):
    assert _affinity(declared) == expected


# -- identifier quoting ---------------------------------------------------


def test_plain_names_stay_bare():
    assert quote_identifier("Patient") == "Patient"
    assert quote_identifier("IGA") == "IGA"


def test_names_with_spaces_get_backquotes():
    assert quote_identifier("First Date") == "`First Date`"


def test_reserved_words_get_backquotes():
    assert quote_identifier("table") == "`table`"
    assert quote_identifier("order") == "`order`"


def test_qualified_name():
    assert qualified_name("Patient", "First Date") == "Patient.`First Date`"


# -- ingestion ------------------------------------------------------------


def test_ingest_tables_and_columns(clinical_catalog):
    assert clinical_catalog.db_id == "clinical"
    assert [t.name for t in clinical_catalog.tables] == ["Patient", "Laboratory"]
    patient = clinical_catalog.resolve_table("Patient")
    assert [c.name for c in patient.columns] == ["ID", "SEX", "First Date", "Admission"]
    assert patient.primary_key == ("ID",)


def test_ingest_types_and_constraints(clinical_catalog):
    lab = clinical_catalog.resolve_table("Laboratory")
    assert lab.column("IGA").declared_type == "integer"
    assert lab.column("Date").declared_type == "text"
    assert lab.column("ID").not_null
    assert lab.foreign_keys == (("ID", "Patient.ID"),)


def test_ingest_missing_file(tmp_path):
    with pytest.raises(IngestError):
        ingest_schema(tmp_path / "nope.sqlite")


def test_resolution_is_case_insensitive(clinical_catalog):
    assert clinical_catalog.resolve_table("patient").name == "Patient"
    table, column = clinical_catalog.resolve_column("laboratory", "iga")
    assert (table.name, column.name) == ("Laboratory", "IGA")
    assert clinical_catalog.resolve_column("Patient", "missing") is None


def test_resolve_bare_column(clinical_catalog):
    assert clinical_catalog.resolve_bare_column("SEX") == [("Patient", "SEX")]
    # ID exists in both tables
    assert len(clinical_catalog.resolve_bare_column("id")) == 2
    assert clinical_catalog.resolve_bare_column("nope") == []


def test_round_trip_through_dict(clinical_catalog):
    clone = SchemaCatalog.from_dict(clinical_catalog.to_dict())
    assert clone.to_dict() == clinical_catalog.to_dict()
    assert [t.name for t in clone.tables] == [t.name for t in clinical_catalog.tables]


def test_descriptions_from_csv(tmp_path):
    db = tmp_path / "d.sqlite"
    conn = sqlite3.connect(db)
    conn.execute("CREATE TABLE items (id integer primary key, label text)")
    conn.commit()
    conn.close()
    desc_dir = tmp_path / "database_description"
    desc_dir.mkdir()
    (desc_dir / "items.csv").write_text(
        "original_column_name,column_name,column_description,value_description\n"
        "id,,the row identifier,\n"
        'label,,,"short display   name"\n',
        encoding="utf-8",
    )
    catalog = ingest_schema(db, description_dir=desc_dir)
    table = catalog.resolve_table("items")
    assert table.column("id").description == "the row identifier"
    # value_description is the fallback; whitespace collapses
    assert table.column("label").description == "short display name"


def test_catalog_rejects_duplicate_tables():
    cols = (ColumnDef(name="id", declared_type="integer"),)
    with pytest.raises(IngestError):
        SchemaCatalog(
            db_id="x",
            tables=(
                TableDef(name="t", columns=cols),
                TableDef(name="T", columns=cols),
            ),
        )


def test_catalog_rejects_dangling_foreign_key():
    with pytest.raises(IngestError):
        SchemaCatalog(
            db_id="x",
            tables=(
                TableDef(
                    name="a",
                    columns=(ColumnDef(name="id", declared_type="integer"),),
                    foreign_keys=(("id", "missing.id"),),
                ),
            ),
        )


# -- selections -----------------------------------------------------------


def test_selection_canonicalizes_case(clinical_catalog):
    sel = ColumnSelection.of(clinical_catalog, [("patient", "sex"), ("PATIENT", "SEX")])
    assert tuple(sel.pairs()) == (("Patient", "SEX"),)
    assert ("Patient", "SEX") in sel


def test_selection_rejects_unknown_column(clinical_catalog):
    with pytest.raises(SelectionError):
        ColumnSelection.of(clinical_catalog, [("Patient", "nope")])


def test_full_selection(clinical_catalog):
    sel = ColumnSelection.full(clinical_catalog)
    assert len(sel.pairs()) == 7
    assert ("Laboratory", "Date") in sel


def test_selection_union(clinical_catalog):
    a = ColumnSelection.of(clinical_catalog, [("Patient", "SEX")])
    b = ColumnSelection.of(clinical_catalog, [("Laboratory", "IGA")])
    assert sorted(a.union(b).pairs()) == [("Laboratory", "IGA"), ("Patient", "SEX")]


# -- selection expansion --------------------------------------------------


def test_expansion_adds_primary_key(clinical_catalog):
    sel = ColumnSelection.of(clinical_catalog, [("Patient", "SEX")])
    expanded = expand_selection(clinical_catalog, sel)
    assert ("Patient", "ID") in expanded


def test_expansion_adds_foreign_key_counterpart(clinical_catalog):
    sel = ColumnSelection.of(clinical_catalog, [("Laboratory", "ID")])
    expanded = expand_selection(clinical_catalog, sel)
    assert ("Patient", "ID") in expanded


def test_expansion_adds_same_named_columns(clinical_catalog):
    sel = ColumnSelection.of(clinical_catalog, [("Patient", "ID")])
    expanded = expand_selection(clinical_catalog, sel)
    # Laboratory also has an ID column
    assert ("Laboratory", "ID") in expanded


_pair_lists = st.lists(
    st.sampled_from(
        [
            ("Patient", "ID"),
            ("Patient", "SEX"),
            ("Patient", "First Date"),
            ("Patient", "Admission"),
            ("Laboratory", "ID"),
            ("Laboratory", "IGA"),
            ("Laboratory", "Date"),
        ]
    ),
    max_size=7,
)


@settings(max_examples=100, deadline=None)
@given(pairs=_pair_lists)
def test_expansion_monotone_and_idempotent(clinical_catalog, pairs):
    if not pairs:
        return
    sel = ColumnSelection.of(clinical_catalog, pairs)
    expanded = expand_selection(clinical_catalog, sel)
    assert set(sel.pairs()) <= set(expanded.pairs())
    again = expand_selection(clinical_catalog, expanded)
    assert set(again.pairs()) == set(expanded.pairs())


# -- rendering ------------------------------------------------------------


def test_render_full_schema(clinical_catalog):
    text = render_schema(clinical_catalog)
    lines = text.splitlines()
    assert lines[0] == "/* Database schema */"
    assert "Table Patient:" in lines
    assert "Patient.ID (integer, primary key)" in lines
    assert "Patient.`First Date` (text)" in lines
    assert "Laboratory.ID (integer, references Patient.ID)" in lines


def test_render_drops_unselected_tables(clinical_catalog):
    sel = ColumnSelection.of(clinical_catalog, [("Patient", "SEX")])
    text = render_schema(clinical_catalog, sel)
    assert "Laboratory" not in text
    assert "Patient.SEX (text)" in text
    assert "Patient.ID" not in text


def test_render_quotes_reserved_table_name(golden_catalog):
    text = render_schema(golden_catalog)
    assert "Table `table`:" in text
    assert "`table`.ID (integer, primary key)" in text
