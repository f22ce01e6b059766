import numpy as np
import pytest

from coreprune.dataset import InteractionLog


def random_pairs(rng: np.random.Generator, n_users: int, n_items: int, n: int) -> set[tuple[str, str]]:
    "Up to ``n`` distinct random (user, item) token pairs."
    us = rng.integers(0, n_users, n)
    its = rng.integers(0, n_items, n)
    return {(f"u{u:03d}", f"i{i:03d}") for u, i in zip(us, its)}


def log_from_pairs(pairs) -> InteractionLog:
    pairs = sorted(pairs)
    return InteractionLog.from_tokens([u for u, _ in pairs], [i for _, i in pairs])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)


def write_raw_log(log, path, seed=0, low_share=0.2):
    """
    Write a log as ``user,item,rating,timestamp`` rows.  About ``low_share``
    of the rows get a rating below 4 and are dropped on ingest; a few
    duplicate rows are appended.
    """
    rng = np.random.default_rng(seed)
    pairs = sorted(log.token_pairs())
    lines = []
    for n, (u, i) in enumerate(pairs):
        rating = float(rng.integers(1, 4)) if rng.random() < low_share else float(rng.integers(4, 6))
        lines.append(f"{u},{i},{rating},{1_600_000_000 + n}")
    lines += lines[: len(lines) // 50]
    path.write_text("\n".join(lines) + "\n")
    return path
