#!/usr/bin/env python3
"""End-to-end oracle replay over a generated fixture.

Generates a data-formatting fixture, drives the engine through every member
profile with the rule-based oracle backend, and prints the scored grid. Any
outcome other than a fully correct grid points at a plumbing bug, since the
oracle answers from the fixture's own ground truth.

Usage: python3 scripts/run_oracle_replay.py [seed] [n_profiles]
"""

import os
import sys
import tempfile
import time
from collections import Counter

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from formfill.replay_harness import generate_fixture, run_replay, score_run


def main() -> int:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
    n_profiles = int(sys.argv[2]) if len(sys.argv) > 2 else 51

    fixture = generate_fixture(seed, n_profiles)
    start = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="formfill-oracle-") as state_dir:
        log = run_replay(fixture, fixture.oracle_backend(), state_dir)
    grid = score_run(log, fixture, run_id=f"seed-{seed}")
    elapsed = time.monotonic() - start

    phone_counts = Counter(c.phone_outcome for c in grid.cells)
    shirt_counts = Counter(c.shirt_outcome for c in grid.cells)
    print(f"seed {seed}, {n_profiles} profiles, {elapsed:.2f}s")
    print(f"phone outcomes: {dict(phone_counts)}")
    print(f"shirt outcomes: {dict(shirt_counts)}")
    print(f"phone success ratio: {grid.phone_success_ratio}")
    print(f"shirt success ratio: {grid.shirt_success_ratio}")
    print(f"fallback contribution: {grid.fallback_contribution}")
    print(f"overeager suggestions: {grid.overeager_suggestions}")

    ok = grid.phone_success_ratio in (None, 1.0) and grid.shirt_success_ratio in (None, 1.0)
    print("RESULT:", "all-correct grid" if ok else "FAILURES PRESENT (plumbing bug)")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
