"""Self-check runner: executes the built-in cases and prints a PASS/FAIL table.

Usage:
    python -m eval.runner                       # every case
    python -m eval.runner --category poles
    python -m eval.runner --case bf_noise
    python -m eval.runner --pairs 100000 --output selfcheck.json
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field

from errors import BenchError, ConfigError, SelfCheckError
from eval.cases import ALL_CASES, CATEGORIES, CheckContext, SelfCheckCase


@dataclass
class CaseResult:
    case_id: str
    category: str
    passed: bool
    elapsed_ms: float
    reasons: list[str] = field(default_factory=list)
    error: str | None = None


def select_cases(category: str | None = None, case_id: str | None = None) -> list[SelfCheckCase]:
    if case_id:
        matches = [c for c in ALL_CASES if c.id == case_id]
        if not matches:
            raise ConfigError(f"unknown self-check case: {case_id}")
        return matches
    if category:
        if category not in CATEGORIES:
            raise ConfigError(f"unknown category {category!r}; available: {', '.join(CATEGORIES)}")
        return CATEGORIES[category]
    return ALL_CASES


def run_case(case: SelfCheckCase, ctx: CheckContext) -> CaseResult:
    start = time.monotonic()
    reasons, error = [], None
    try:
        reasons = case.check(ctx)
    except BenchError as e:
        error = str(e)
    elapsed = (time.monotonic() - start) * 1000
    return CaseResult(case.id, case.category, not reasons and error is None, elapsed, reasons, error)


def _print_report(results: list[CaseResult]):
    print()
    header = f"{'Category':<14} | {'Passed':<14} | {'Time':>9}"
    print(header)
    print("-" * len(header))
    for cat in CATEGORIES:
        rows = [r for r in results if r.category == cat]
        if not rows:
            continue
        passed = sum(1 for r in rows if r.passed)
        elapsed = sum(r.elapsed_ms for r in rows)
        cell = f"{passed}/{len(rows)} ({int(passed / len(rows) * 100):>3}%)"
        print(f"{cat:<14} | {cell:<14} | {elapsed:>7.0f}ms")
    print("-" * len(header))
    passed = sum(1 for r in results if r.passed)
    total = len(results)
    cell = f"{passed}/{total} ({int(passed / total * 100) if total else 0:>3}%)"
    print(f"{'TOTAL':<14} | {cell:<14} | {sum(r.elapsed_ms for r in results):>7.0f}ms")
    print()


def _print_failures(results: list[CaseResult]):
    failures = [r for r in results if not r.passed]
    if not failures:
        print("All cases passed!")
        return
    print("=" * 60)
    print("FAILURES")
    print("=" * 60)
    for r in failures:
        print(f"  {r.case_id}")
        for reason in r.reasons:
            print(f"    - {reason}")
        if r.error:
            print(f"    ERROR: {r.error}")


def _save_json(results: list[CaseResult], path: str):
    with open(path, "w") as f:
        json.dump([asdict(r) for r in results], f, indent=2)
    print(f"Results saved to {path}")


def run_selfcheck(
    ctx: CheckContext,
    category: str | None = None,
    case_id: str | None = None,
    output: str | None = None,
) -> list[CaseResult]:
    """Run the selected cases; raise SelfCheckError if any fails."""
    cases = select_cases(category, case_id)
    print(f"Running {len(cases)} self-check cases ({ctx.pairs} pairs, seed {ctx.seed})...")
    results = []
    for i, case in enumerate(cases, 1):
        sys.stdout.write(f"  [{i}/{len(cases)}] {case.id}... ")
        sys.stdout.flush()
        result = run_case(case, ctx)
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} ({result.elapsed_ms:.0f}ms)")
        results.append(result)

    _print_report(results)
    _print_failures(results)
    if output:
        _save_json(results, output)

    failed = [r.case_id for r in results if not r.passed]
    if failed:
        raise SelfCheckError(f"{len(failed)} self-check case(s) failed: {', '.join(failed)}")
    return results


def main():
    parser = argparse.ArgumentParser(description="Run the built-in self-check suite")
    parser.add_argument("--category", help="Run only this category")
    parser.add_argument("--case", help="Run only this case ID")
    parser.add_argument("--pairs", type=int, default=CheckContext.pairs, help="Sampled pairs per direction")
    parser.add_argument("--seed", type=int, default=CheckContext.seed)
    parser.add_argument("--output", help="Save results to JSON file")
    args = parser.parse_args()

    logging.basicConfig(level=logging.WARNING, format="%(asctime)s %(name)s %(message)s")
    try:
        run_selfcheck(CheckContext(pairs=args.pairs, seed=args.seed), args.category, args.case, args.output)
    except BenchError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
