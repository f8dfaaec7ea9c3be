import numpy as np
import pytest

from lorasculpt.numcore import RandomStream


@pytest.fixture
def rng():
    return RandomStream(1234, 0)


def random_matrix(seed, rows, cols, stream=0):
    return RandomStream(seed, stream).normal(rows * cols).reshape(rows, cols)


@pytest.fixture(scope="session")
def default_setup():
    """Seed-0 tasks and default pretrained base, shared across test modules."""
    from lorasculpt.tasks import make_tasks
    from lorasculpt.trainer import TrainConfig, pretrain_base

    cfg = TrainConfig(seed=0)
    task = make_tasks(0)
    base = pretrain_base(0, task, cfg.arch(task), cfg.pretrain_steps, cfg.pretrain_lr)
    return cfg, task, base


@pytest.fixture(scope="session")
def small_setup():
    """Cheap base (few pretraining steps) for structural tests of the loop."""
    from lorasculpt.tasks import make_tasks
    from lorasculpt.trainer import TrainConfig, pretrain_base

    cfg = TrainConfig(seed=1, total_steps=40, pretrain_steps=200)
    task = make_tasks(1)
    base = pretrain_base(1, task, cfg.arch(task), cfg.pretrain_steps, cfg.pretrain_lr)
    return cfg, task, base


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
