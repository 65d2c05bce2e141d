"""One-to-one matching of candidate links between two frames.

:func:`match_conflict_sweep` is the production matcher: every unmatched source
proposes its best remaining candidate; a target already held goes to the
higher-scoring proposal and the loser's candidate is zeroed; sweeps repeat
until no conflict is left. :func:`match_greedy_sorted` and
:func:`match_bruteforce` are reference solvers used by the tests.

Ties: among equal scores, a smaller target id is preferred, then a smaller
source id. All three solvers apply the same rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

BRUTEFORCE_LIMIT = 24


@dataclass(frozen=True)
class AssignmentProblem:
    sources: tuple[int, ...]
    targets: tuple[int, ...]
    source_of: np.ndarray       # per candidate
    target_of: np.ndarray
    scores: np.ndarray

    @classmethod
    def from_candidates(cls, candidates: Iterable[tuple[int, int, float]],
                        sources: Iterable[int] | None = None,
                        targets: Iterable[int] | None = None) -> "AssignmentProblem":
        cands = list(candidates)
        src = np.array([int(c[0]) for c in cands], dtype=int)
        tgt = np.array([int(c[1]) for c in cands], dtype=int)
        sc = np.array([float(c[2]) for c in cands], dtype=float)
        if np.any(sc < 0) or np.any(~np.isfinite(sc)):
            raise ValueError("scores must be finite and non-negative")
        if len(set(zip(src.tolist(), tgt.tolist()))) != len(cands):
            raise ValueError("duplicate (source, target) candidate")
        all_src = set(src.tolist()) | set(sources or ())
        all_tgt = set(tgt.tolist()) | set(targets or ())
        return cls(tuple(sorted(all_src)), tuple(sorted(all_tgt)), src, tgt, sc)

    @property
    def m(self) -> int:
        return len(self.sources)

    @property
    def n(self) -> int:
        return len(self.targets)

    @property
    def size(self) -> int:
        return len(self.scores)


@dataclass
class MatchResult:
    x: np.ndarray
    matched_pairs: list[tuple[int, int]]
    unmatched_sources: list[int]
    unmatched_targets: list[int]
    total_score: float = 0.0
    # diagnostics: full sweeps, and conflicts (each zeroes one candidate)
    sweeps: int = 0
    conflicts: int = 0
    target_of_source: dict[int, int] = field(default_factory=dict)


def build_system_matrix(problem: AssignmentProblem) -> tuple[np.ndarray, np.ndarray]:
    """Incidence matrix Y ((m + n) x N) and all-ones b.

    Rows are the sources in ascending id, then the targets in ascending id.
    """
    row_s = {s: q for q, s in enumerate(problem.sources)}
    row_t = {t: problem.m + q for q, t in enumerate(problem.targets)}
    Y = np.zeros((problem.m + problem.n, problem.size), dtype=int)
    for k in range(problem.size):
        Y[row_s[int(problem.source_of[k])], k] = 1
        Y[row_t[int(problem.target_of[k])], k] = 1
    return Y, np.ones(problem.m + problem.n, dtype=int)


def is_feasible(problem: AssignmentProblem, x: np.ndarray) -> bool:
    Y, b = build_system_matrix(problem)
    return bool(np.all(Y @ np.asarray(x, dtype=int) <= b))


def _result(problem: AssignmentProblem, chosen: Iterable[int], **stats) -> MatchResult:
    x = np.zeros(problem.size, dtype=int)
    for k in chosen:
        x[k] = 1
    pairs = sorted((int(problem.source_of[k]), int(problem.target_of[k]))
                   for k in np.flatnonzero(x))
    used_s = {s for s, _ in pairs}
    used_t = {t for _, t in pairs}
    total = float(sum(problem.scores[k] for k in np.flatnonzero(x)))
    return MatchResult(x, pairs,
                       [s for s in problem.sources if s not in used_s],
                       [t for t in problem.targets if t not in used_t],
                       total, target_of_source=dict(pairs), **stats)


def match_conflict_sweep(problem: AssignmentProblem) -> MatchResult:
    a = problem.scores.copy()
    src, tgt = problem.source_of, problem.target_of
    # per-source candidates, best first; zeroing only ever removes entries
    ranked: dict[int, list[int]] = {s: [] for s in problem.sources}
    for k in sorted(range(problem.size), key=lambda k: (-a[k], tgt[k])):
        ranked[int(src[k])].append(k)
    cursor = {s: 0 for s in problem.sources}

    held_by_source = {s: -1 for s in problem.sources}
    held_target = {t: -1 for t in problem.targets}
    sweeps = conflicts = 0
    conflict = True
    while conflict:
        conflict = False
        sweeps += 1
        for s in problem.sources:
            if held_by_source[s] != -1:
                continue
            options = ranked[s]
            c = cursor[s]
            while c < len(options) and a[options[c]] <= 0:
                c += 1
            cursor[s] = c
            if c == len(options):
                continue            # exhausted: stays unmatched
            k = options[c]
            t = int(tgt[k])
            holder = held_target[t]
            if holder == -1:
                held_target[t] = k
                held_by_source[s] = k
                continue
            conflict = True
            conflicts += 1
            challenger_wins = a[k] > a[holder] or (a[k] == a[holder] and src[k] < src[holder])
            if challenger_wins:
                a[holder] = 0.0
                held_by_source[int(src[holder])] = -1
                held_by_source[s] = k
                held_target[t] = k
            else:
                a[k] = 0.0
    chosen = [k for k in held_by_source.values() if k != -1]
    return _result(problem, chosen, sweeps=sweeps, conflicts=conflicts)


def match_greedy_sorted(problem: AssignmentProblem) -> MatchResult:
    """Take candidates in descending score, skipping any that touch a used instance."""
    order = sorted(range(problem.size),
                   key=lambda k: (-problem.scores[k], problem.target_of[k], problem.source_of[k]))
    used_s: set[int] = set()
    used_t: set[int] = set()
    chosen = []
    for k in order:
        if problem.scores[k] <= 0:
            break
        s, t = int(problem.source_of[k]), int(problem.target_of[k])
        if s in used_s or t in used_t:
            continue
        used_s.add(s)
        used_t.add(t)
        chosen.append(k)
    return _result(problem, chosen)


def match_bruteforce(problem: AssignmentProblem) -> MatchResult:
    """Exact maximiser of the summed score; ties go to the lexicographically smallest x."""
    N = problem.size
    if N > BRUTEFORCE_LIMIT:
        raise ValueError(f"problem too large for exhaustive search (N={N} > {BRUTEFORCE_LIMIT})")
    scores = problem.scores
    src = problem.source_of.tolist()
    tgt = problem.target_of.tolist()
    positive = np.where(scores > 0, scores, 0.0)
    suffix = np.concatenate([np.cumsum(positive[::-1])[::-1], [0.0]])

    best_total = -1.0
    best: list[int] = []
    chosen: list[int] = []
    used_s: set[int] = set()
    used_t: set[int] = set()

    def search(k: int, total: float) -> None:
        nonlocal best_total, best
        if k == N:
            if total > best_total:
                best_total = total
                best = list(chosen)
            return
        if total + suffix[k] < best_total - 1e-9:
            return
        search(k + 1, total)                        # x_k = 0 explored first
        if scores[k] > 0 and src[k] not in used_s and tgt[k] not in used_t:
            used_s.add(src[k])
            used_t.add(tgt[k])
            chosen.append(k)
            search(k + 1, total + scores[k])
            chosen.pop()
            used_s.discard(src[k])
            used_t.discard(tgt[k])

    search(0, 0.0)
    return _result(problem, best)
