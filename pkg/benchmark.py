#!/usr/bin/env python3
"""
Benchmark script comparing the fast code paths with their brute-force oracles.

Compares:
- cox: sorted suffix-sum partial likelihood vs per-event risk set loops
- hazard: dyadic-tree Nelson-Aalen vs direct summation on every grid point

Prerequisites:
    pip install psutil

Usage:
    python benchmark.py [--quick] [--full] [--memory]

Options:
    --quick     Run quick benchmark (n up to 1000, brute force included)
    --full      Run full benchmark (n up to 100000, brute force capped at 5000)
    --memory    Include memory profiling (requires psutil)
"""

import argparse
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict

sys.path.insert(0, str(Path(__file__).parent))

from dp_survtest import cox_engine  # noqa: E402
from dp_survtest.data_model import SimulationConfig, generate_cox_dataset, generate_hazard_sample  # noqa: E402
from dp_survtest.dp_core import PrivacyBudget  # noqa: E402
from dp_survtest.hazard_estimator import dp_nelson_aalen  # noqa: E402
from dp_survtest.oracle import (brute_force_log_partial_likelihood, brute_force_score,  # noqa: E402
                                exhaustive_na_check, relative_error)
from dp_survtest.utility import make_stream  # noqa: E402

BRUTE_FORCE_LIMIT = 5000


def check_dependencies():
    """Check if psutil is installed when memory profiling is requested."""
    try:
        import psutil  # noqa: F401
    except ImportError:
        print("ERROR: Missing required dependency: psutil")
        print("\nInstall with: pip install psutil")
        print("Or install all dependencies: pip install -e .")
        return False
    return True


class BenchmarkResults:
    """Store and display benchmark results."""

    def __init__(self):
        self.results: Dict[int, Dict[str, Any]] = {}

    def add_result(self, n: int, operation: str, time_ms: float, **kwargs):
        self.results.setdefault(n, {})[operation] = {'time_ms': time_ms, **kwargs}

    def add_memory(self, n: int, memory_mb: float):
        self.results.setdefault(n, {})['memory_mb'] = memory_mb

    def print_comparison(self):
        """Print formatted comparison table."""
        print("\n" + "=" * 80)
        print("BENCHMARK RESULTS")
        print("=" * 80)
        print(f"\n{'n':>8} {'cox fast':>12} {'cox brute':>12} {'speedup':>9} {'rel err':>10} "
              f"{'hazard':>10} {'na gap':>10} {'memory':>9}")
        print("-" * 88)
        for n in sorted(self.results):
            row = self.results[n]
            fast = row.get('cox_fast', {}).get('time_ms', 0)
            brute = row.get('cox_brute', {}).get('time_ms', 0)
            speedup = f"{brute / fast:.1f}x" if fast > 0 and brute > 0 else "N/A"
            brute_str = f"{brute:.2f}ms" if brute > 0 else "N/A"
            err = row.get('cox_brute', {}).get('relative_error')
            err_str = f"{err:.1e}" if err is not None else "N/A"
            hazard = row.get('hazard', {}).get('time_ms', 0)
            gap = row.get('hazard', {}).get('na_gap')
            gap_str = f"{gap:.1e}" if gap is not None else "N/A"
            mem = row.get('memory_mb', 0)
            mem_str = f"{mem:.1f}MB" if mem > 0 else "N/A"
            print(f"{n:>8} {fast:>10.2f}ms {brute_str:>12} {speedup:>9} {err_str:>10} "
                  f"{hazard:>8.2f}ms {gap_str:>10} {mem_str:>9}")
        print("\n" + "=" * 80 + "\n")


def benchmark_cox(n: int, results: BenchmarkResults, repeat: int = 5):
    """Time the engine and, for moderate n, the brute-force oracle on the same dataset."""
    config = SimulationConfig(n=n, d=3, beta_star=(0.3, 0.3, 0.3), seed=n)
    dataset = generate_cox_dataset(config)
    beta = [0.1, -0.2, 0.3]

    start = time.perf_counter()
    for _ in range(repeat):
        fast = cox_engine.evaluate(dataset, beta)
    results.add_result(n, 'cox_fast', (time.perf_counter() - start) / repeat * 1000)

    if n <= BRUTE_FORCE_LIMIT:
        print(f"  Brute force partial likelihood for n={n}...", end=" ", flush=True)
        start = time.perf_counter()
        value = brute_force_log_partial_likelihood(dataset, beta)
        grad = brute_force_score(dataset, beta)
        elapsed = time.perf_counter() - start
        print(f"Done in {elapsed:.2f}s")
        err = max(relative_error(fast.loglik, value), relative_error(fast.score, grad))
        results.add_result(n, 'cox_brute', elapsed * 1000, relative_error=err)


def benchmark_hazard(n: int, results: BenchmarkResults):
    """Time a noise-off tree build and compare it with direct summation."""
    dataset = generate_hazard_sample(1.0, 0.3, n, make_stream(n))
    start = time.perf_counter()
    curve = dp_nelson_aalen(dataset, PrivacyBudget(1.0, 0.001), None, noise_off=True)
    elapsed = time.perf_counter() - start
    gap = exhaustive_na_check(dataset, curve) if n <= BRUTE_FORCE_LIMIT else None
    results.add_result(n, 'hazard', elapsed * 1000, na_gap=gap)


def benchmark_memory(n: int, results: BenchmarkResults):
    try:
        import psutil
        process = psutil.Process(os.getpid())
        results.add_memory(n, process.memory_info().rss / 1024 / 1024)
    except ImportError:
        print("    Memory profiling skipped (psutil not installed)")


def run_benchmark(args):
    sizes = [100, 1000] if args.quick else [100, 1000, 5000]
    if args.full:
        sizes += [20000, 100000]
    results = BenchmarkResults()
    for n in sizes:
        print(f"\nBenchmarking n={n}")
        benchmark_cox(n, results)
        benchmark_hazard(n, results)
        if args.memory:
            benchmark_memory(n, results)
    results.print_comparison()


def main():
    parser = argparse.ArgumentParser(
        description='Benchmark dp-survtest fast paths against brute-force oracles',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python benchmark.py --quick              # n in {100, 1000}
  python benchmark.py --full --memory      # Up to n = 100000 with memory profiling
        """
    )
    parser.add_argument('--quick', action='store_true', help='Quick benchmark (n up to 1000)')
    parser.add_argument('--full', action='store_true', help='Full benchmark (n up to 100000)')
    parser.add_argument('--memory', action='store_true', help='Include memory profiling (requires psutil)')
    args = parser.parse_args()

    if args.memory and not check_dependencies():
        sys.exit(1)
    run_benchmark(args)


if __name__ == '__main__':
    main()
