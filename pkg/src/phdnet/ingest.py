"""Hire-record ingestion: parsing, year-rule validation, canonical ids, dedup.

Records arrive as delimited UTF-8 text with one row per doctoral graduate's
first teaching appointment. Institution names are resolved against an
:class:`InstitutionRegistry`; every institution flagged as overseas collapses
onto the single :data:`OVERSEAS` node.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Mapping

from phdnet.errors import ConfigurationError, IngestError

OVERSEAS = "OVERSEAS"
ALWAYS_INCLUDE_TAG = "always-include"

YEAR_MIN, YEAR_MAX = 1900, 2100
YEAR_RULES = ("strict", "inclusive")

FIELDS = ("person", "degree_unit", "employer_unit", "graduation_year", "employment_year")
DEFAULT_SCHEMA = {name: name for name in FIELDS}


@dataclass(frozen=True)
class HireRecord:
    person_key: str | None
    degree_unit: str
    employer_unit: str
    graduation_year: int
    employment_year: int
    row_index: int | None = field(default=None, compare=False, repr=False)

    @property
    def trainer(self) -> str:
        return self.degree_unit

    @property
    def employer(self) -> str:
        return self.employer_unit


@dataclass(frozen=True)
class Rejection:
    row_index: int
    reason: str


@dataclass
class IngestDiagnostics:
    total_rows: int = 0
    admitted: int = 0
    rejected: list[Rejection] = field(default_factory=list)
    deduplicated: int = 0
    unknown_institutions: list[str] = field(default_factory=list)

    def reconciles(self) -> bool:
        return self.admitted + len(self.rejected) + self.deduplicated == self.total_rows

    def to_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "admitted": self.admitted,
            "rejected": [{"row_index": r.row_index, "reason": r.reason} for r in self.rejected],
            "deduplicated": self.deduplicated,
            "unknown_institutions": list(self.unknown_institutions),
        }


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class InstitutionEntry:
    canonical_id: str
    display_name: str = ""
    aliases: tuple[str, ...] = ()
    is_overseas: bool = False
    tags: frozenset[str] = frozenset()


class InstitutionRegistry:
    """Canonical institution ids with alias lookup.

    The aggregated overseas node is always present, whether or not the
    source file lists it.
    """

    def __init__(self, entries: Iterable[InstitutionEntry] = ()):
        self.entries: list[InstitutionEntry] = []
        self._lookup: dict[str, str] = {}
        self._by_id: dict[str, InstitutionEntry] = {}
        entries = list(entries)
        if not any(e.canonical_id == OVERSEAS for e in entries):
            entries.append(InstitutionEntry(OVERSEAS, "Overseas", is_overseas=True))
        for entry in entries:
            self._add(entry)

    def _add(self, entry: InstitutionEntry) -> None:
        cid = entry.canonical_id.strip()
        if not cid:
            raise ConfigurationError("registry entry with empty canonical_id")
        if cid in self._by_id:
            raise ConfigurationError(f"duplicate canonical_id {cid!r}")
        if cid == OVERSEAS and not entry.is_overseas:
            raise ConfigurationError(f"{OVERSEAS!r} is reserved for the overseas node")
        target = OVERSEAS if entry.is_overseas else cid
        names = {cid, *(a.strip() for a in entry.aliases)}
        if entry.display_name.strip():
            names.add(entry.display_name.strip())
        names.discard("")
        for name in sorted(names):
            bound = self._lookup.get(name)
            if bound is not None and bound != target:
                raise ConfigurationError(
                    f"name {name!r} maps to both {bound!r} and {target!r}"
                )
        for name in names:
            self._lookup[name] = target
        self._by_id[cid] = entry
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, canonical_id: str) -> bool:
        return canonical_id in self._by_id

    def resolve(self, name: str) -> tuple[str, bool]:
        """Return ``(canonical_id, known)``; unknown names stand for themselves."""
        name = name.strip()
        hit = self._lookup.get(name)
        if hit is None:
            return name, False
        return hit, True

    def tagged(self, tag: str) -> list[str]:
        return sorted(
            OVERSEAS if e.is_overseas else e.canonical_id
            for e in self.entries
            if tag in e.tags
        )

    def always_include(self) -> list[str]:
        return sorted(set(self.tagged(ALWAYS_INCLUDE_TAG)))

    @classmethod
    def from_csv(cls, source: str | os.PathLike | IO[str]) -> "InstitutionRegistry":
        """Read ``canonical_id,display_name,aliases,is_overseas,tags``.

        ``aliases`` and ``tags`` are pipe-separated, ``is_overseas`` is
        ``true``/``false``.
        """
        with _open_text(source) as fh:
            reader = csv.DictReader(fh)
            required = {"canonical_id", "display_name", "aliases", "is_overseas", "tags"}
            missing = required - set(reader.fieldnames or ())
            if missing:
                raise ConfigurationError(f"registry missing columns: {sorted(missing)}")
            entries = []
            for row in reader:
                flag = (row["is_overseas"] or "").strip().lower()
                if flag not in ("true", "false", ""):
                    raise ConfigurationError(f"bad is_overseas value {row['is_overseas']!r}")
                entries.append(
                    InstitutionEntry(
                        canonical_id=row["canonical_id"].strip(),
                        display_name=(row["display_name"] or "").strip(),
                        aliases=_split_pipe(row["aliases"]),
                        is_overseas=flag == "true",
                        tags=frozenset(_split_pipe(row["tags"])),
                    )
                )
        return cls(entries)

    def to_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["canonical_id", "display_name", "aliases", "is_overseas", "tags"])
        for e in self.entries:
            writer.writerow([
                e.canonical_id,
                e.display_name,
                "|".join(e.aliases),
                "true" if e.is_overseas else "false",
                "|".join(sorted(e.tags)),
            ])


def _split_pipe(value: str | None) -> tuple[str, ...]:
    if not value:
        return ()
    return tuple(part.strip() for part in value.split("|") if part.strip())


# --------------------------------------------------------------------------
# parsing


class _open_text:
    """Context manager accepting a path or an already-open text stream."""

    def __init__(self, source):
        self.source = source
        self._owned = None

    def __enter__(self) -> IO[str]:
        if isinstance(self.source, (str, os.PathLike)):
            try:
                self._owned = open(self.source, encoding="utf-8", newline="")
            except OSError as exc:
                raise IngestError(f"cannot read {os.fspath(self.source)}: {exc}") from exc
            return self._owned
        return self.source

    def __exit__(self, *exc):
        if self._owned is not None:
            self._owned.close()
        return False


def parse_records(
    source: str | os.PathLike | IO[str],
    schema: Mapping[str, str | None] | None = None,
    delimiter: str = ",",
) -> tuple[list[HireRecord], IngestDiagnostics]:
    """Parse a header-led delimited stream into :class:`HireRecord` objects.

    ``schema`` maps the logical field names in :data:`FIELDS` to header
    names; ``person`` may map to ``None`` when the data has no identity
    column. Malformed rows are kept out of the result and listed in the
    diagnostics with a reason; row indices count data rows from 0.
    """
    schema = dict(DEFAULT_SCHEMA if schema is None else schema)
    for name in FIELDS:
        if name != "person" and not schema.get(name):
            raise ConfigurationError(f"schema does not map required field {name!r}")
    diag = IngestDiagnostics()
    records: list[HireRecord] = []
    with _open_text(source) as fh:
        try:
            text = fh.read()
        except (OSError, UnicodeDecodeError) as exc:
            raise IngestError(f"unreadable records stream: {exc}") from exc
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = next(reader, None)
    if header is None:
        raise IngestError("records stream has no header row")
    header = [h.strip().lstrip("﻿") for h in header]
    columns = {}
    for name in FIELDS:
        col = schema.get(name)
        if col is None:
            continue
        if col not in header:
            raise ConfigurationError(f"header has no column {col!r} (field {name!r})")
        columns[name] = header.index(col)

    for row_index, row in enumerate(reader):
        if not any(cell.strip() for cell in row):
            continue  # blank line, not a data row
        diag.total_rows += 1
        parsed = _parse_row(row, columns, row_index)
        if isinstance(parsed, str):
            diag.rejected.append(Rejection(row_index, parsed))
        else:
            records.append(parsed)
    diag.admitted = len(records)
    return records, diag


def _parse_row(row: list[str], columns: dict[str, int], row_index: int) -> HireRecord | str:
    def cell(name):
        idx = columns.get(name)
        if idx is None or idx >= len(row):
            return ""
        return row[idx].strip()

    for name in ("degree_unit", "employer_unit", "graduation_year", "employment_year"):
        if columns[name] >= len(row) or not cell(name):
            return f"missing {name}"
    years = {}
    for name in ("graduation_year", "employment_year"):
        try:
            years[name] = int(cell(name))
        except ValueError:
            return f"non-integer {name}"
    return HireRecord(
        person_key=cell("person") or None,
        degree_unit=cell("degree_unit"),
        employer_unit=cell("employer_unit"),
        graduation_year=years["graduation_year"],
        employment_year=years["employment_year"],
        row_index=row_index,
    )


# --------------------------------------------------------------------------
# record-level transformations


def validate_record(record: HireRecord, rule: str = "strict") -> str | None:
    """Return ``None`` when admitted as a first teaching post, else the reason.

    ``strict`` requires employment after graduation; ``inclusive`` also
    admits same-year appointments.
    """
    if rule not in YEAR_RULES:
        raise ConfigurationError(f"unknown year rule {rule!r}")
    for name in ("graduation_year", "employment_year"):
        year = getattr(record, name)
        if not YEAR_MIN <= year <= YEAR_MAX:
            return f"{name} {year} outside [{YEAR_MIN}, {YEAR_MAX}]"
    if rule == "strict" and record.employment_year <= record.graduation_year:
        return "employment_year not later than graduation_year"
    if rule == "inclusive" and record.employment_year < record.graduation_year:
        return "employment_year before graduation_year"
    return None


def canonicalize(
    record: HireRecord,
    registry: InstitutionRegistry,
    unknown: set[str] | None = None,
) -> HireRecord:
    """Replace both institution names by canonical ids.

    Unknown names become their own id and are added to ``unknown`` when a
    collector set is given. Idempotent.
    """
    degree, known_d = registry.resolve(record.degree_unit)
    employer, known_e = registry.resolve(record.employer_unit)
    if unknown is not None:
        if not known_d:
            unknown.add(degree)
        if not known_e:
            unknown.add(employer)
    return replace(record, degree_unit=degree, employer_unit=employer)


def deduplicate(records: Iterable[HireRecord]) -> tuple[list[HireRecord], int]:
    """Collapse records sharing (person_key, employer_unit, employment_year).

    The first occurrence wins. Records without a person_key are always kept.
    Returns the surviving records and the number removed.
    """
    seen = set()
    out = []
    dropped = 0
    for rec in records:
        if rec.person_key is None:
            out.append(rec)
            continue
        key = (rec.person_key, rec.employer_unit, rec.employment_year)
        if key in seen:
            dropped += 1
            continue
        seen.add(key)
        out.append(rec)
    return out, dropped


def clean_records(
    records: Iterable[HireRecord],
    diagnostics: IngestDiagnostics,
    registry: InstitutionRegistry | None = None,
    rule: str = "strict",
) -> tuple[list[HireRecord], IngestDiagnostics]:
    """Validate, canonicalize and deduplicate parsed records.

    Returns the admitted records and a new diagnostics object continuing the
    one produced by :func:`parse_records`.
    """
    rejected = list(diagnostics.rejected)
    unknown: set[str] = set()
    kept = []
    for i, rec in enumerate(records):
        reason = validate_record(rec, rule)
        if reason is not None:
            row = rec.row_index if rec.row_index is not None else i
            rejected.append(Rejection(row, reason))
            continue
        if registry is not None:
            rec = canonicalize(rec, registry, unknown)
        kept.append(rec)
    kept, dropped = deduplicate(kept)
    diag = IngestDiagnostics(
        total_rows=diagnostics.total_rows,
        admitted=len(kept),
        rejected=sorted(rejected, key=lambda r: r.row_index),
        deduplicated=diagnostics.deduplicated + dropped,
        unknown_institutions=sorted(set(diagnostics.unknown_institutions) | unknown),
    )
    return kept, diag


def load_records(
    path: str | os.PathLike,
    registry: InstitutionRegistry | None = None,
    rule: str = "strict",
    schema: Mapping[str, str | None] | None = None,
    delimiter: str = ",",
) -> tuple[list[HireRecord], IngestDiagnostics]:
    raw, diag = parse_records(path, schema=schema, delimiter=delimiter)
    return clean_records(raw, diag, registry=registry, rule=rule)


def write_records(records: Iterable[HireRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(FIELDS)
    for r in records:
        writer.writerow([
            r.person_key or "",
            r.degree_unit,
            r.employer_unit,
            r.graduation_year,
            r.employment_year,
        ])
