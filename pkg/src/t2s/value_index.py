"""Vector index over stored cell values and column names.

Questions rarely spell stored values the way the database does ("iga"
vs "IGA", "John" vs "JOHN").  The index embeds every distinct text cell
and every column name once, then answers similarity queries by probing
with word n-grams of the query so multi-word questions still surface
single stored tokens.

All scoring is exact cosine over the full matrix.  No approximate
structure is involved, so results are reproducible and easy to check
against a brute-force scan.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .embedding import EMBEDDING_DIM, Embedder, TrigramEmbedder
from .errors import EmbeddingError, IndexBuildError
from .schema import ColumnSelection, SchemaCatalog, quote_identifier

FORMAT_NAME = "t2s-value-index"
FORMAT_VERSION = 1

# Cells longer than this are embedded from their prefix only; the stored
# text is kept in full so replacements stay faithful.
MAX_EMBED_CHARS = 256


@dataclass(frozen=True)
class RetrievalConfig:
    top_k: int = 10
    threshold: float = 0.65
    # Column search reuses `threshold` unless this is set.
    column_threshold: Optional[float] = None

    def effective_column_threshold(self) -> float:
        return self.threshold if self.column_threshold is None else self.column_threshold


@dataclass
class IndexedEntry:
    kind: str  # "cell_value" | "column_name"
    text: str
    table: str
    column: str
    vector: np.ndarray


@dataclass
class ValueHit:
    entry: IndexedEntry
    similarity: float

    @property
    def table(self) -> str:
        return self.entry.table

    @property
    def column(self) -> str:
        return self.entry.column

    @property
    def text(self) -> str:
        return self.entry.text


def _word_ngrams(query: str, max_n: int = 3) -> list[str]:
    """Whitespace word n-grams (1..max_n) plus the whole query."""
    words = query.split()
    probes: list[str] = []
    seen: set[str] = set()
    for n in range(1, max_n + 1):
        for i in range(len(words) - n + 1):
            probe = " ".join(words[i : i + n])
            if probe not in seen:
                seen.add(probe)
                probes.append(probe)
    whole = query.strip()
    if whole and whole not in seen:
        probes.append(whole)
    return probes


class ValueIndex:
    def __init__(self, db_id: str, entries: list[IndexedEntry], dim: int,
                 column_aux: Optional[dict[int, np.ndarray]] = None):
        self.db_id = db_id
        self.dim = dim
        self.entries = entries
        # Extra vector per column entry for the qualified "table.column"
        # spelling, keyed by entry index.
        self._column_aux = column_aux or {}
        self._cell_idx = [i for i, e in enumerate(entries) if e.kind == "cell_value"]
        self._col_idx = [i for i, e in enumerate(entries) if e.kind == "column_name"]
        self._cell_matrix = self._stack([entries[i].vector for i in self._cell_idx])
        self._col_matrix = self._stack([entries[i].vector for i in self._col_idx])
        self._col_aux_matrix = self._stack(
            [self._column_aux.get(i, entries[i].vector) for i in self._col_idx]
        )
        self._by_column: dict[tuple[str, str], list[str]] = {}
        for i in self._cell_idx:
            entry = entries[i]
            key = (entry.table.casefold(), entry.column.casefold())
            self._by_column.setdefault(key, []).append(entry.text)

    def _stack(self, vectors: list[np.ndarray]) -> np.ndarray:
        if not vectors:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack(vectors)

    # -- construction -----------------------------------------------------

    @classmethod
    def build(
        cls,
        db_path: str | Path,
        catalog: SchemaCatalog,
        embedder: Optional[Embedder] = None,
    ) -> "ValueIndex":
        embedder = embedder or TrigramEmbedder()
        entries: list[IndexedEntry] = []
        conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
        try:
            for table in catalog.tables:
                for col in table.columns:
                    if col.declared_type != "text":
                        continue
                    query = (
                        f"SELECT DISTINCT {quote_identifier(col.name)} "
                        f"FROM {quote_identifier(table.name)} "
                        f"WHERE {quote_identifier(col.name)} IS NOT NULL "
                        f"ORDER BY 1"
                    )
                    try:
                        rows = conn.execute(query).fetchall()
                    except sqlite3.Error as exc:
                        raise IndexBuildError(
                            f"cannot read {table.name}.{col.name}: {exc}"
                        ) from exc
                    seen: set[str] = set()
                    for (value,) in rows:
                        if not isinstance(value, str):
                            continue
                        if not value.strip():
                            continue
                        if value in seen:
                            continue
                        seen.add(value)
                        try:
                            vector = embedder.embed(value[:MAX_EMBED_CHARS])
                        except EmbeddingError:
                            continue
                        entries.append(
                            IndexedEntry(
                                kind="cell_value",
                                text=value,
                                table=table.name,
                                column=col.name,
                                vector=vector,
                            )
                        )
        finally:
            conn.close()
        column_aux: dict[int, np.ndarray] = {}
        for table in catalog.tables:
            for col in table.columns:
                index = len(entries)
                entries.append(
                    IndexedEntry(
                        kind="column_name",
                        text=col.name,
                        table=table.name,
                        column=col.name,
                        vector=embedder.embed(col.name),
                    )
                )
                column_aux[index] = embedder.embed(f"{table.name}.{col.name}")
        return cls(catalog.db_id, entries, embedder.dim, column_aux)

    # -- queries ----------------------------------------------------------

    def _probe_vectors(self, query: str, embedder: Embedder) -> np.ndarray:
        probes = _word_ngrams(query)
        vectors = []
        for probe in probes:
            try:
                vectors.append(embedder.embed(probe))
            except EmbeddingError:
                continue
        if not vectors:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.stack(vectors)

    def search_values(
        self,
        query: str,
        config: Optional[RetrievalConfig] = None,
        embedder: Optional[Embedder] = None,
        restrict: Optional[tuple[str, str]] = None,
    ) -> list[ValueHit]:
        """Ranked stored-value hits for a query phrase.

        Each cell entry is scored by its best cosine against any word
        n-gram of the query.  Entries below the threshold are dropped
        before the top_k cut.  `restrict` limits hits to one column.
        """
        config = config or RetrievalConfig()
        embedder = embedder or TrigramEmbedder(self.dim)
        probes = self._probe_vectors(query, embedder)
        if probes.shape[0] == 0 or self._cell_matrix.shape[0] == 0:
            return []
        scores = (self._cell_matrix @ probes.T).max(axis=1)
        order = sorted(range(len(self._cell_idx)), key=lambda i: (-scores[i], i))
        hits: list[ValueHit] = []
        for i in order:
            if scores[i] < config.threshold:
                break
            entry = self.entries[self._cell_idx[i]]
            if restrict is not None:
                if (
                    entry.table.casefold() != restrict[0].casefold()
                    or entry.column.casefold() != restrict[1].casefold()
                ):
                    continue
            hits.append(ValueHit(entry=entry, similarity=float(scores[i])))
            if len(hits) >= config.top_k:
                break
        return hits

    def search_columns(
        self,
        query: str,
        catalog: SchemaCatalog,
        config: Optional[RetrievalConfig] = None,
        embedder: Optional[Embedder] = None,
    ) -> ColumnSelection:
        """Columns whose bare or qualified name resembles the query."""
        config = config or RetrievalConfig()
        embedder = embedder or TrigramEmbedder(self.dim)
        probes = self._probe_vectors(query, embedder)
        if probes.shape[0] == 0 or self._col_matrix.shape[0] == 0:
            return ColumnSelection(frozenset())
        bare = (self._col_matrix @ probes.T).max(axis=1)
        qualified = (self._col_aux_matrix @ probes.T).max(axis=1)
        scores = np.maximum(bare, qualified)
        threshold = config.effective_column_threshold()
        order = sorted(range(len(self._col_idx)), key=lambda i: (-scores[i], i))
        pairs = []
        for i in order:
            if scores[i] < threshold or len(pairs) >= config.top_k:
                break
            entry = self.entries[self._col_idx[i]]
            pairs.append((entry.table, entry.column))
        return ColumnSelection.of(catalog, pairs)

    def stored_values(self, table: str, column: str) -> tuple[str, ...]:
        return tuple(self._by_column.get((table.casefold(), column.casefold()), ()))

    def has_value(self, table: str, column: str, text: str) -> bool:
        """Exact, case-sensitive membership test for a stored cell."""
        return text in self._by_column.get((table.casefold(), column.casefold()), ())

    def cell_count(self) -> int:
        return len(self._cell_idx)

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            header = {
                "format": FORMAT_NAME,
                "version": FORMAT_VERSION,
                "dim": self.dim,
                "db_id": self.db_id,
            }
            handle.write(json.dumps(header) + "\n")
            for i, entry in enumerate(self.entries):
                record = {
                    "kind": entry.kind,
                    "text": entry.text,
                    "table": entry.table,
                    "column": entry.column,
                    "vector": [round(float(x), 9) for x in entry.vector],
                }
                if i in self._column_aux:
                    record["aux"] = [round(float(x), 9) for x in self._column_aux[i]]
                handle.write(json.dumps(record) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ValueIndex":
        with open(path, encoding="utf-8") as handle:
            lines = [line for line in handle if line.strip()]
        if not lines:
            raise IndexBuildError(f"empty index file: {path}")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise IndexBuildError(f"bad index header in {path}: {exc}") from exc
        if header.get("format") != FORMAT_NAME:
            raise IndexBuildError(f"not a value index file: {path}")
        if header.get("version") != FORMAT_VERSION:
            raise IndexBuildError(f"unsupported index version {header.get('version')!r}")
        dim = int(header.get("dim", EMBEDDING_DIM))
        entries: list[IndexedEntry] = []
        column_aux: dict[int, np.ndarray] = {}
        for lineno, raw in enumerate(lines[1:], start=2):
            try:
                record = json.loads(raw)
                entry = IndexedEntry(
                    kind=record["kind"],
                    text=record["text"],
                    table=record["table"],
                    column=record["column"],
                    vector=np.asarray(record["vector"], dtype=np.float64),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IndexBuildError(f"bad index record at line {lineno}: {exc}") from exc
            if entry.vector.shape != (dim,):
                raise IndexBuildError(
                    f"vector at line {lineno} has shape {entry.vector.shape}, want ({dim},)"
                )
            if "aux" in record:
                column_aux[len(entries)] = np.asarray(record["aux"], dtype=np.float64)
            entries.append(entry)
        return cls(header.get("db_id", ""), entries, dim, column_aux)
