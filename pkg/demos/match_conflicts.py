"""Conflict-resolving matching against the exact optimum on a hand-made problem."""

from rodtrack import AssignmentProblem, match_conflict_sweep, match_bruteforce

# source 1 likes both targets, source 2 only likes target 1
problem = AssignmentProblem.from_candidates([(1, 1, 0.9), (1, 2, 0.85), (2, 1, 0.89)])

fast = match_conflict_sweep(problem)
best = match_bruteforce(problem)
print(f"conflict resolution: {fast.matched_pairs} total {fast.total_score:.2f}, "
      f"{fast.conflicts} conflicts in {fast.sweeps} sweeps")
print(f"exact optimum:       {best.matched_pairs} total {best.total_score:.2f}")
