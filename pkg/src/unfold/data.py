"""Roll-call vote matrices: CSV input/output, preprocessing and term alignment.

Cells are stored as ``int8`` with ``YEA = 1``, ``NAY = 0`` and
``MISSING = -1``.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

YEA = 1
NAY = 0
MISSING = -1


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class EmptyDataError(ValueError):
    pass


@dataclass(frozen=True)
class VoteMatrix:
    legislator_ids: tuple
    parties: tuple
    vote_ids: tuple
    cells: np.ndarray
    terms: tuple | None = None
    anchor_eligible: tuple | None = None

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "legislator_ids", tuple(self.legislator_ids))
        object.__setattr__(self, "parties", tuple(self.parties))
        object.__setattr__(self, "vote_ids", tuple(self.vote_ids))
        if self.terms is not None:
            object.__setattr__(self, "terms", tuple(int(t) for t in self.terms))
        if self.anchor_eligible is None:
            object.__setattr__(self, "anchor_eligible", (True,) * len(self.legislator_ids))
        else:
            object.__setattr__(self, "anchor_eligible", tuple(bool(a) for a in self.anchor_eligible))
        n_leg, n_vote = len(self.legislator_ids), len(self.vote_ids)
        if cells.shape != (n_leg, n_vote):
            raise ValidationError(f"cells shape {cells.shape} != ({n_leg}, {n_vote})")
        if len(self.parties) != n_leg:
            raise ValidationError("one party label per legislator required")
        if self.terms is not None and len(self.terms) != n_vote:
            raise ValidationError("one term label per vote required")
        _check_unique(self.legislator_ids, "legislator")
        _check_unique(self.vote_ids, "vote")
        if not np.isin(cells, (YEA, NAY, MISSING)).all():
            raise ValidationError("cells must be 1, 0 or missing")

    @property
    def shape(self):
        return self.cells.shape

    @property
    def observed(self) -> np.ndarray:
        return self.cells != MISSING

    def legislator_index(self, legislator_id: str) -> int:
        try:
            return self.legislator_ids.index(legislator_id)
        except ValueError:
            raise KeyError(f"unknown legislator id {legislator_id!r}") from None

    def vote_index(self, vote_id: str) -> int:
        try:
            return self.vote_ids.index(vote_id)
        except ValueError:
            raise KeyError(f"unknown vote id {vote_id!r}") from None

    def subset(self, rows, cols) -> "VoteMatrix":
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        return VoteMatrix(
            legislator_ids=[self.legislator_ids[i] for i in rows],
            parties=[self.parties[i] for i in rows],
            vote_ids=[self.vote_ids[j] for j in cols],
            cells=self.cells[np.ix_(rows, cols)],
            terms=None if self.terms is None else [self.terms[j] for j in cols],
            anchor_eligible=[self.anchor_eligible[i] for i in rows],
        )

    def fingerprint(self) -> str:
        """SHA-256 over ids, terms and cells; stable across processes."""
        h = hashlib.sha256()
        h.update(to_csv_text(self).encode("utf-8"))
        return h.hexdigest()

    def equals(self, other: "VoteMatrix") -> bool:
        return (self.legislator_ids == other.legislator_ids
                and self.parties == other.parties
                and self.vote_ids == other.vote_ids
                and self.terms == other.terms
                and np.array_equal(self.cells, other.cells))


def _check_unique(ids, what):
    seen = set()
    for x in ids:
        if x in seen:
            raise ValidationError(f"duplicate {what} id {x!r}")
        seen.add(x)


_CELL = {"1": YEA, "0": NAY, "NA": MISSING}
_CELL_OUT = {YEA: "1", NAY: "0", MISSING: "NA"}


def read_vote_csv(text: str) -> VoteMatrix:
    rows = list(csv.reader(io.StringIO(text), quoting=csv.QUOTE_NONE))
    rows = [r for r in rows if r]
    if not rows:
        raise ParseError("empty file")
    header = rows[0]
    if len(header) < 2 or header[0] != "legislator" or header[1] != "party":
        raise ParseError("row 1: header must start with 'legislator,party'")
    vote_ids = header[2:]
    body = rows[1:]
    terms = None
    if body and body[0][0] == "term":
        trow = body[0]
        if len(trow) != len(header):
            raise ParseError(f"row 2: expected {len(header)} fields, got {len(trow)}")
        try:
            terms = [int(t) for t in trow[2:]]
        except ValueError as exc:
            raise ParseError(f"row 2: term labels must be integers ({exc})") from None
        body = body[1:]
        first_body_row = 3
    else:
        first_body_row = 2
    ids, parties, cells = [], [], []
    for r, row in enumerate(body, start=first_body_row):
        if len(row) != len(header):
            raise ParseError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        ids.append(row[0])
        parties.append(row[1])
        vals = []
        for c, cell in enumerate(row[2:], start=3):
            try:
                vals.append(_CELL[cell.strip()])
            except KeyError:
                raise ParseError(f"row {r}, column {c}: invalid cell {cell!r}") from None
        cells.append(vals)
    arr = np.array(cells, dtype=np.int8).reshape(len(ids), len(vote_ids))
    return VoteMatrix(ids, parties, vote_ids, arr, terms=terms)


def load_vote_matrix(path, format: str = "csv") -> VoteMatrix:
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    return read_vote_csv(Path(path).read_text(encoding="utf-8"))


def to_csv_text(m: VoteMatrix) -> str:
    lines = [",".join(["legislator", "party", *m.vote_ids])]
    if m.terms is not None:
        lines.append(",".join(["term", "", *(str(t) for t in m.terms)]))
    for lid, party, row in zip(m.legislator_ids, m.parties, m.cells):
        lines.append(",".join([lid, party, *(_CELL_OUT[int(v)] for v in row)]))
    return "\n".join(lines) + "\n"


def write_vote_matrix(m: VoteMatrix, path) -> None:
    Path(path).write_text(to_csv_text(m), encoding="utf-8")


def preprocess(m: VoteMatrix, absence_threshold: float = 0.4,
               drop_unanimous: bool = True) -> VoteMatrix:
    """Drop frequently absent legislators, then unanimous votes.

    The first absence pass is measured over all columns of the input.
    Dropping votes can push a legislator over the threshold or leave them
    with no observed cell, so both filters repeat until nothing changes;
    this makes the result a fixed point.
    """
    cur = m
    while True:
        obs = cur.observed
        if cur.shape[1]:
            absent = 1.0 - obs.mean(axis=1)
        else:
            absent = np.ones(cur.shape[0])
        rows = (absent <= absence_threshold) & obs.any(axis=1)
        cols = np.ones(cur.shape[1], dtype=bool)
        if drop_unanimous:
            sub = cur.cells[rows]
            cols = (sub == YEA).any(axis=0) & (sub == NAY).any(axis=0)
        if rows.all() and cols.all():
            break
        cur = cur.subset(np.flatnonzero(rows), np.flatnonzero(cols))
        if cur.shape[0] == 0 or cur.shape[1] == 0:
            raise EmptyDataError("no data left after preprocessing")
    if cur.shape[0] == 0 or cur.shape[1] == 0:
        raise EmptyDataError("no data left after preprocessing")
    return cur


@dataclass(frozen=True)
class DynamicVoteData:
    """Votes organised by term, with each legislator's tenure window.

    ``vote_term`` holds 0-based term indices; ``tenure`` is an ``(I, 2)``
    array of inclusive 0-based ``[first, last]`` term indices. ``terms``
    are the original labels, in order.
    """

    base: VoteMatrix
    vote_term: np.ndarray
    tenure: np.ndarray
    terms: tuple = field(default=())

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def tenure_mask(self) -> np.ndarray:
        t = np.arange(self.n_terms)
        return (t >= self.tenure[:, :1]) & (t <= self.tenure[:, 1:])


def align_terms(m: VoteMatrix) -> DynamicVoteData:
    if m.terms is None:
        raise ValidationError("every vote needs a term label")
    labels = sorted(set(m.terms))
    index = {t: k for k, t in enumerate(labels)}
    vote_term = np.array([index[t] for t in m.terms], dtype=int)
    # 1..T relabelling of the base matrix
    base = VoteMatrix(m.legislator_ids, m.parties, m.vote_ids, m.cells,
                      terms=[int(t) + 1 for t in vote_term], anchor_eligible=m.anchor_eligible)
    tenure = np.zeros((m.shape[0], 2), dtype=int)
    obs = m.observed
    for i in range(m.shape[0]):
        active = vote_term[obs[i]]
        if active.size == 0:
            raise ValidationError(f"legislator {m.legislator_ids[i]!r} has no observed votes")
        tenure[i] = active.min(), active.max()
    return DynamicVoteData(base=base, vote_term=vote_term, tenure=tenure, terms=tuple(labels))
