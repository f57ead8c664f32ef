"""Per-criterion PASS/FAIL lines collected during the acceptance run."""

import time
from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(label: str):
    """Record ``label`` as PASS if the block completes, FAIL otherwise.

    The yielded dict collects short measurements shown after the verdict.
    """
    notes: dict = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield notes
        ok = True
    finally:
        detail = ", ".join(f"{k}={v}" for k, v in notes.items())
        LINES.append(f"{label}: {'PASS' if ok else 'FAIL'} ({time.perf_counter() - t0:.2f} s){'  ' + detail if detail else ''}")
        print(LINES[-1])
