import os
import time
from functools import cached_property
from pathlib import Path

import pytest
import torch

CACHE_ENV = "LSRNA_CACHE"
ACCEPTANCE: list[tuple[str, bool, str]] = []


def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "lsrna" / "components"))


class DeskRuns:
    """Trained desk components plus the experiments shared by several tests, computed on first use."""

    def __init__(self):
        from lsrna import bench
        from lsrna.config import RunConfig
        self.bench = bench
        self.cfg = RunConfig()
        self.components = bench.load_or_train(self.cfg, cache_dir())
        self.parts = self.components.parts(self.cfg)
        self._edges = {}
        self.seconds: dict[str, float] = {}

    def _timed(self, name, fn):
        start = time.perf_counter()
        out = fn()
        self.seconds[name] = time.perf_counter() - start
        return out

    @cached_property
    def refs(self):
        return self._timed("references", lambda: self.bench.references(self.cfg, self.parts))

    @cached_property
    def gt(self):
        return self.bench.reference_images(self.cfg)

    @cached_property
    def rna_sweep(self):
        return self._timed("rna_sweep", lambda: self.bench.sweep_rna(self.cfg, self.parts, self.refs, self.gt))

    @cached_property
    def step_sweep(self):
        return self._timed("step_sweep", lambda: self.bench.sweep_steps(self.cfg, self.parts, self.refs, self.gt))

    def edge_difference(self, e: float) -> dict:
        if e not in self._edges:
            self._edges[e] = self._timed(f"edges_{e}", lambda: self.bench.edge_difference(
                self.cfg, self.parts, self.refs, e))
        return self._edges[e]


@pytest.fixture(scope="session")
def desk():
    torch.set_num_threads(max(1, os.cpu_count() or 1))
    return DeskRuns()


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert it."""
    def record(name: str, ok: bool, detail: str = "") -> None:
        ACCEPTANCE.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
