"""Continuation in b for the matrix Riccati equation with nested Anderson.

The plain iterate stalls once b passes the contraction limit; nested
depth-7 acceleration with warm starts carries the solution to b = 47.5.
"""

from romaccel import ContinuationSchedule, continuation_run, gen_random_spd
from romaccel.cli import table_report
from romaccel.problems import riccati_family

fam = riccati_family(10, gen_random_spd(10, seed=0))
schedule = ContinuationSchedule([1, 2, 5, 10, 20, 40, 45, 47.5], budget=200, tol=1e-6)

print("plain iterate")
print(table_report(continuation_run(fam, ContinuationSchedule([0.05, 0.5], budget=200), "plain",
                                    batch=1)))
print("nested depth 7")
print(table_report(continuation_run(fam, schedule, "nested", m=7)))
