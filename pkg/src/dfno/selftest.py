"""Quick invariant suites with fixed tolerances, for checking an install."""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import checks
from .config import SelftestConfig
from .model import FnoConfig


@dataclass
class SuiteResult:
    name: str
    observed: float
    tolerance: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.observed < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} max={self.observed:.3e}  tol={self.tolerance:.0e}  ({self.seconds:.1f}s)"


def _gradient_suite(seed: int) -> float:
    cfg = FnoConfig(spatial_shape=(8, 8, 4), out_timesteps=4, width=4, num_blocks=2, modes=(2, 2, 2, 2),
                    partition=(1, 1, 2, 2, 1, 1))
    return max(checks.gradient_check(cfg, seed=seed, directions=1).values())


def _invariance_suite(seed: int) -> float:
    cfg = FnoConfig(spatial_shape=(8, 8, 8), out_timesteps=6, width=4, num_blocks=2, modes=(2, 2, 2, 2))
    parts = [(1, 1, 1, 1, 1, 1), (1, 1, 2, 1, 1, 1), (1, 1, 2, 2, 1, 1), (1, 1, 2, 2, 2, 1)]
    return max(checks.partition_invariance(cfg, parts, seed).values())


def _spectral_suite(seed: int) -> float:
    return max(checks.spectral_case((1, 3, 12, 9), (1, 1, 3, 3), (3, 2), seed),
               checks.spectral_case((1, 2, 8, 8, 6, 4), (1, 1, 2, 2, 2, 1), (2, 3, 2, 2), seed))


def run_selftest(cfg: SelftestConfig, log=print) -> list:
    n = cfg.seeds
    suites = [
        ("adjoint (broadcast, repart.)", 1e-10, lambda: checks.adjoint_sweep(n, corrupt=cfg.corrupt_adjoint,
                                                                               first_seed=cfg.seed)),
        ("dfft vs numpy.fft", 1e-10, lambda: checks.dfft_sweep(n)["forward"]),
        ("dfft unitarity", 1e-12, lambda: checks.dfft_sweep(n)["unitarity"]),
        ("spectral conv ownership", 1e-10, lambda: _spectral_suite(cfg.seed)),
        ("fno partition invariance", 1e-8, lambda: _invariance_suite(cfg.seed)),
        ("gradient vs finite diff.", 1e-5, lambda: _gradient_suite(cfg.seed)),
        ("tensor file round trip", 0.5, lambda: float(checks.file_roundtrip(n, cfg.seed))),
    ]
    results = []
    for name, tol, fn in suites:
        start = time.perf_counter()
        res = SuiteResult(name, float(fn()), tol, time.perf_counter() - start)
        results.append(res)
        if log is not None:
            log(res.line())
    return results
