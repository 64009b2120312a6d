"""Rating-list CSV ingestion, stratum filters and empirical summaries.

File format: UTF-8 CSV with header ``player_id,name,federation,sex,rating,active``.
Extra columns are ignored; LF and CRLF line endings are accepted.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import BinaryIO, Callable, Dict, Iterable, List, Union

import numpy as np

from .errors import DomainError, FormatError
from .estimation import RatingSample, TopKSample

log = logging.getLogger(__name__)

COLUMNS = ("player_id", "name", "federation", "sex", "rating", "active")
SEX_CODES = ("M", "W", "U")
_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f", ""}


@dataclass(frozen=True)
class RatingRecord:
    player_id: str
    name: str
    federation: str
    sex: str
    rating: int
    active: bool

    def __post_init__(self):
        if self.rating <= 0:
            raise DomainError("rating must be > 0")
        if self.federation and not (self.federation.isalpha() and self.federation.isupper()):
            raise DomainError(f"federation must be uppercase letters, got {self.federation!r}")
        if self.sex not in SEX_CODES:
            raise DomainError(f"sex must be one of {SEX_CODES}, got {self.sex!r}")


@dataclass
class RowDiagnostic:
    row: int  # 1-based file row; the header is row 1
    message: str

    def __str__(self):
        return f"row {self.row}: {self.message}"


@dataclass
class RatingList:
    records: List[RatingRecord]
    source: str = "<stream>"
    rejected: List[RowDiagnostic] = field(default_factory=list)


def _parse_sex(raw: str) -> str:
    code = raw.strip().upper()
    if code == "F":  # FIDE's own code for women
        return "W"
    return code or "U"


def _parse_active(raw: str) -> bool:
    v = raw.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"unparseable active flag {raw!r}")


def parse_rating_csv(stream: Union[bytes, BinaryIO], source: str = "<stream>") -> RatingList:
    """Parse a rating list; bad rows are skipped and reported in ``rejected``."""
    data = stream if isinstance(stream, (bytes, bytearray)) else stream.read()
    try:
        text = bytes(data).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source}: input is not UTF-8") from exc
    if not text.strip():
        raise FormatError(f"{source}: empty file")

    reader = csv.reader(io.StringIO(text, newline=""))
    header = [h.strip().lower() for h in next(reader)]
    for col in COLUMNS:
        if col not in header:
            raise FormatError(f"{source}: missing column {col!r}")
    idx = {col: header.index(col) for col in COLUMNS}

    records: List[RatingRecord] = []
    rejected: List[RowDiagnostic] = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            rejected.append(RowDiagnostic(row_no, f"expected {len(header)} fields, got {len(row)}"))
            continue
        raw_rating = row[idx["rating"]].strip()
        try:
            rating = int(raw_rating)
        except ValueError:
            rejected.append(RowDiagnostic(row_no, f"unparseable rating {raw_rating!r}"))
            continue
        try:
            rec = RatingRecord(
                player_id=row[idx["player_id"]].strip(),
                name=row[idx["name"]].strip(),
                federation=row[idx["federation"]].strip().upper(),
                sex=_parse_sex(row[idx["sex"]]),
                rating=rating,
                active=_parse_active(row[idx["active"]]),
            )
        except (ValueError, DomainError) as exc:
            rejected.append(RowDiagnostic(row_no, str(exc)))
            continue
        records.append(rec)
    for diag in rejected:
        log.warning("%s: %s", source, diag)
    return RatingList(records=records, source=source, rejected=rejected)


def read_rating_csv(path) -> RatingList:
    with open(path, "rb") as fh:
        return parse_rating_csv(fh, source=str(path))


def write_rating_csv(lst: Union[RatingList, Iterable[RatingRecord]], stream) -> None:
    """Write records in the canonical column order (LF line endings)."""
    records = lst.records if isinstance(lst, RatingList) else lst
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([r.player_id, r.name, r.federation, r.sex, r.rating, "true" if r.active else "false"])


# ---------------------------------------------------------------------------
# strata
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Stratum:
    """Conjunction of ``field=value`` conditions on records."""

    label: str
    conditions: Dict[str, str]

    def __call__(self, rec: RatingRecord) -> bool:
        return all(str(getattr(rec, k)) == v for k, v in self.conditions.items())


_STRATUM_FIELDS = {"sex", "federation", "player_id", "name"}


def parse_stratum(expr: str) -> Stratum:
    """Parse ``"sex=M"``, ``"sex=W,federation=NOR"`` or ``"all"``."""
    expr = (expr or "").strip()
    if expr.lower() in ("", "all", "*"):
        return Stratum("all", {})
    conds: Dict[str, str] = {}
    for part in expr.split(","):
        if "=" not in part:
            raise FormatError(f"bad stratum condition {part!r}; expected field=value")
        key, value = (p.strip() for p in part.split("=", 1))
        key = key.lower()
        if key not in _STRATUM_FIELDS:
            raise FormatError(f"unknown stratum field {key!r}")
        if key in ("sex", "federation"):
            value = value.upper()
        if key == "sex":
            value = _parse_sex(value)
        conds[key] = value
    label = ",".join(f"{k}={v}" for k, v in conds.items())
    return Stratum(label, conds)


def make_sample(lst: RatingList, r0: float, predicate: Union[Stratum, Callable[[RatingRecord], bool]]) -> RatingSample:
    """Active records matching ``predicate`` with rating >= r0."""
    label = getattr(predicate, "label", getattr(predicate, "__name__", "custom"))
    ratings = [r.rating for r in lst.records if r.active and r.rating >= r0 and predicate(r)]
    return RatingSample(stratum=label, r0=float(r0), ratings=np.asarray(ratings, dtype=float))


def to_topk(s: RatingSample, k: int) -> TopKSample:
    """The ``k`` largest ratings, ties broken stably by input order."""
    if k > s.n:
        raise DomainError(f"k={k} exceeds sample size {s.n}")
    if k < 0:
        raise DomainError("k must be >= 0")
    order = np.argsort(-s.ratings, kind="stable")
    return TopKSample(r0=s.r0, top=s.ratings[order[:k]], n_total=s.n)


def ecdf(s: RatingSample, x):
    """Right-continuous empirical cdf evaluated at ``x``."""
    if s.n == 0:
        raise DomainError("empty sample")
    sorted_r = np.sort(s.ratings)
    out = np.searchsorted(sorted_r, np.asarray(x, dtype=float), side="right") / s.n
    return float(out) if np.ndim(x) == 0 else out


__all__ = [
    "COLUMNS",
    "RatingList",
    "RatingRecord",
    "RowDiagnostic",
    "Stratum",
    "ecdf",
    "make_sample",
    "parse_rating_csv",
    "parse_stratum",
    "read_rating_csv",
    "to_topk",
    "write_rating_csv",
]
