"""Planted-rule synthetic EHR corpus.

Each diagnosis owns a fixed small set of "correct" medications. A visit
samples a few diagnoses and prescribes the union of their sets; with
probability ``noise`` one spurious medication is added, and independently
with probability ``noise`` one planted medication is dropped (never
emptying the set). DDI edges are drawn from medication pairs that the
planted rule never co-prescribes, falling back to other pairs only when
those run out.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .ehr import CodeVocab, PatientRecord, Visit


@dataclass(frozen=True)
class SynthConfig:
    patients: int = 200
    n_diag: int = 24
    n_proc: int = 12
    n_med: int = 20
    max_visits: int = 5
    min_visits: int = 1
    diag_per_visit: tuple[int, int] = (1, 3)
    meds_per_diag: tuple[int, int] = (1, 3)
    proc_per_visit: tuple[int, int] = (1, 2)
    noise: float = 0.1
    n_ddi: int = 10

    def validate(self) -> None:
        if min(self.patients, self.n_diag, self.n_proc, self.min_visits) < 1:
            raise ValueError("synthetic sizes must be positive")
        if self.min_visits > self.max_visits:
            raise ValueError("min_visits exceeds max_visits")
        if self.n_med < 4:
            raise ValueError("need at least 4 medications")
        for lo, hi in (self.diag_per_visit, self.meds_per_diag, self.proc_per_visit):
            if not 1 <= lo <= hi:
                raise ValueError("per-visit ranges must satisfy 1 <= lo <= hi")
        if self.diag_per_visit[1] > self.n_diag or self.proc_per_visit[1] > self.n_proc:
            raise ValueError("per-visit range exceeds vocabulary size")
        if self.meds_per_diag[1] > self.n_med:
            raise ValueError("meds_per_diag exceeds medication vocabulary")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must lie in [0, 1]")
        if self.n_ddi < 0 or self.n_ddi > self.n_med * (self.n_med - 1) // 2:
            raise ValueError("n_ddi out of range")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class SynthCorpus:
    vocab: CodeVocab
    records: list[PatientRecord]
    ddi_pairs: list[tuple[int, int]]
    planted: list[frozenset[int]]  # diagnosis index -> medication set

    def planted_union(self, diags) -> frozenset[int]:
        return frozenset().union(*(self.planted[d] for d in diags))


def synth_generate(config: SynthConfig, seed: int) -> SynthCorpus:
    config.validate()
    rng = np.random.default_rng(seed)
    vocab = CodeVocab(
        diag=[f"D{i:03d}" for i in range(config.n_diag)],
        proc=[f"P{i:03d}" for i in range(config.n_proc)],
        med=[f"M{i:03d}" for i in range(config.n_med)],
    )

    def draw(lo_hi, n):
        k = int(rng.integers(lo_hi[0], lo_hi[1] + 1))
        return frozenset(int(x) for x in rng.choice(n, size=k, replace=False))

    planted = [draw(config.meds_per_diag, config.n_med) for _ in range(config.n_diag)]
    # each diagnosis also has a typical procedure, so procedures carry signal
    typical_proc = rng.integers(0, config.n_proc, size=config.n_diag)

    records = []
    for k in range(config.patients):
        n_visits = int(rng.integers(config.min_visits, config.max_visits + 1))
        visits = []
        for _ in range(n_visits):
            d = draw(config.diag_per_visit, config.n_diag)
            p = set(draw(config.proc_per_visit, config.n_proc))
            p.add(int(typical_proc[min(d)]))
            m = set().union(*(planted[i] for i in d))
            if rng.random() < config.noise:
                extra = [j for j in range(config.n_med) if j not in m]
                if extra:
                    m.add(int(rng.choice(extra)))
            if rng.random() < config.noise and len(m) > 1:
                m.discard(int(rng.choice(sorted(m))))
            visits.append(Visit(d, frozenset(p), frozenset(m)))
        records.append(PatientRecord(f"SYN{k:05d}", tuple(visits)))

    co = set()
    for s in planted:
        co.update(combinations(sorted(s), 2))
    pairs = list(combinations(range(config.n_med), 2))
    clean = [pr for pr in pairs if pr not in co]
    dirty = [pr for pr in pairs if pr in co]
    rng.shuffle(clean)
    rng.shuffle(dirty)
    ddi = sorted((clean + dirty)[: config.n_ddi])
    return SynthCorpus(vocab, records, ddi, planted)


class MajorityVoteOracle:
    """Per diagnosis, keep medications prescribed in more than half of the
    training visits containing it; predict the union over a visit's diagnoses."""

    def __init__(self, records, n_diag: int, n_med: int):
        seen = np.zeros(n_diag)
        hits = np.zeros((n_diag, n_med))
        for r in records:
            for v in r.visits:
                for d in v.d:
                    seen[d] += 1
                    for m in v.m:
                        hits[d, m] += 1
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(seen[:, None] > 0, hits / np.maximum(seen[:, None], 1), 0.0)
        self.sets = [frozenset(np.flatnonzero(row > 0.5).tolist()) for row in frac]

    def predict(self, visit: Visit) -> frozenset[int]:
        return frozenset().union(*(self.sets[d] for d in visit.d))
