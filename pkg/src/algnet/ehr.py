"""Patient records, code vocabularies, medication graphs and dataset splits."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

FIELDS = ("diag", "proc", "med")


class RecordFormatError(ValueError):
    pass


@dataclass
class CodeVocab:
    """One code table per field; index is position in the list."""

    diag: list[str] = field(default_factory=list)
    proc: list[str] = field(default_factory=list)
    med: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._index = {f: {c: i for i, c in enumerate(getattr(self, f))} for f in FIELDS}
        for f in FIELDS:
            if len(self._index[f]) != len(getattr(self, f)):
                raise ValueError(f"duplicate codes in {f} table")

    def sizes(self) -> tuple[int, int, int]:
        return len(self.diag), len(self.proc), len(self.med)

    def index_of(self, field_: str, code: str, grow: bool = False) -> int:
        table = self._index[field_]
        if code not in table:
            if not grow:
                raise KeyError(f"unknown {field_} code {code!r}")
            table[code] = len(table)
            getattr(self, field_).append(code)
        return table[code]

    def lookup(self, field_: str, code: str) -> int | None:
        return self._index[field_].get(code)

    def to_json(self) -> dict:
        return {f: list(getattr(self, f)) for f in FIELDS}

    @classmethod
    def from_json(cls, obj: dict) -> CodeVocab:
        return cls(**{f: list(obj.get(f, [])) for f in FIELDS})

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> CodeVocab:
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Visit:
    d: frozenset[int]
    p: frozenset[int]
    m: frozenset[int]

    def multi_hot(self, n_med: int) -> np.ndarray:
        y = np.zeros(n_med)
        y[sorted(self.m)] = 1.0
        return y


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    visits: tuple[Visit, ...]


@dataclass(frozen=True)
class AdjacencyMatrix:
    matrix: np.ndarray
    kind: str  # "ehr" | "ddi"
    counts: np.ndarray | None = None

    def __post_init__(self):
        a = self.matrix
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency diagonal must be zero")
        if np.any(a < 0):
            raise ValueError("adjacency entries must be nonnegative")
        if self.kind == "ddi" and not np.all((a == 0) | (a == 1)):
            raise ValueError("DDI adjacency must be 0/1")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def _visit_from_json(obj, vocab: CodeVocab, grow: bool, where: str) -> Visit:
    if not isinstance(obj, dict):
        raise RecordFormatError(f"{where}: visit must be an object")
    unknown = set(obj) - set(FIELDS)
    if unknown:
        raise RecordFormatError(f"{where}: unknown visit field(s) {sorted(unknown)}")
    sets = {}
    for f in FIELDS:
        codes = obj.get(f)
        if not isinstance(codes, list) or not all(isinstance(c, str) for c in codes):
            raise RecordFormatError(f"{where}: field {f!r} must be a list of strings")
        if not codes:
            raise RecordFormatError(f"{where}: field {f!r} is empty")
        try:
            sets[f] = frozenset(vocab.index_of(f, c, grow=grow) for c in codes)
        except KeyError as e:
            raise RecordFormatError(f"{where}: {e.args[0]}") from None
    return Visit(sets["diag"], sets["proc"], sets["med"])


def load_records(path, vocab: CodeVocab | None = None) -> tuple[CodeVocab, list[PatientRecord]]:
    """Read line-delimited JSON patients.

    With ``vocab=None`` the vocabulary is built from codes in order of first
    appearance; with a vocab given, unknown codes are an error.
    """
    grow = vocab is None
    vocab = CodeVocab() if vocab is None else vocab
    records: list[PatientRecord] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise RecordFormatError(f"{where}: {e.msg}") from None
            if not isinstance(obj, dict):
                raise RecordFormatError(f"{where}: expected an object")
            unknown = set(obj) - {"patient_id", "visits"}
            if unknown:
                raise RecordFormatError(f"{where}: unknown field(s) {sorted(unknown)}")
            pid, visits = obj.get("patient_id"), obj.get("visits")
            if not isinstance(pid, str):
                raise RecordFormatError(f"{where}: patient_id must be a string")
            if not isinstance(visits, list) or not visits:
                raise RecordFormatError(f"{where}: visits must be a non-empty list")
            parsed = tuple(
                _visit_from_json(v, vocab, grow, f"{where} visit {k + 1}")
                for k, v in enumerate(visits)
            )
            records.append(PatientRecord(pid, parsed))
    return vocab, records


def record_to_json(record: PatientRecord, vocab: CodeVocab) -> dict:
    def codes(table, idx):
        return [table[i] for i in sorted(idx)]

    return {
        "patient_id": record.patient_id,
        "visits": [
            {"diag": codes(vocab.diag, v.d), "proc": codes(vocab.proc, v.p), "med": codes(vocab.med, v.m)}
            for v in record.visits
        ],
    }


def save_records(path, records: Iterable[PatientRecord], vocab: CodeVocab) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r, vocab)) + "\n")


def build_ehr_adjacency(records: Iterable[PatientRecord], n_med: int) -> AdjacencyMatrix:
    """Binarized medication co-occurrence; raw pair counts kept on ``counts``."""
    counts = np.zeros((n_med, n_med))
    for r in records:
        for v in r.visits:
            meds = sorted(v.m)
            for a in range(len(meds)):
                for b in range(a + 1, len(meds)):
                    counts[meds[a], meds[b]] += 1
                    counts[meds[b], meds[a]] += 1
    return AdjacencyMatrix((counts > 0).astype(np.float64), "ehr", counts)


def ddi_from_pairs(pairs: Iterable[tuple[int, int]], n_med: int) -> AdjacencyMatrix:
    a = np.zeros((n_med, n_med))
    for i, j in pairs:
        if i != j:
            a[i, j] = a[j, i] = 1.0
    return AdjacencyMatrix(a, "ddi")


def build_ddi_adjacency(path, vocab: CodeVocab) -> tuple[AdjacencyMatrix, int]:
    """Read ``<med_code> <med_code>`` lines; returns the matrix and the number
    of edges skipped because a code is not in the medication vocabulary."""
    pairs, skipped = [], 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise RecordFormatError(f"{path}:{lineno}: expected two medication codes")
            i, j = vocab.lookup("med", parts[0]), vocab.lookup("med", parts[1])
            if i is None or j is None:
                skipped += 1
                continue
            pairs.append((i, j))
    if skipped:
        log.warning("skipped %d DDI edges with unknown medication codes", skipped)
    return ddi_from_pairs(pairs, len(vocab.med)), skipped


def save_ddi(path, pairs: Iterable[tuple[int, int]], vocab: CodeVocab) -> None:
    with open(path, "w") as fh:
        for i, j in pairs:
            fh.write(f"{vocab.med[i]} {vocab.med[j]}\n")


def split_dataset(records: Sequence[PatientRecord], seed: int,
                  ratios: tuple[float, float, float] = (2 / 3, 1 / 6, 1 / 6)):
    """Random patient-level train/validation/test partition."""
    n = len(records)
    if n < 6:
        raise ValueError(f"need at least 6 records to split, got {n}")
    if abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        raise ValueError(f"split ratios must be positive and sum to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * ratios[0]))
    n_val = max(1, int(round(n * ratios[1])))
    n_train = min(n_train, n - n_val - 1)
    pick = lambda ix: [records[i] for i in sorted(ix)]  # noqa: E731
    return (
        pick(order[:n_train]),
        pick(order[n_train:n_train + n_val]),
        pick(order[n_train + n_val:]),
    )
