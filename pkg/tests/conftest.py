import itertools
from fractions import Fraction

import pytest

from prefsignal.ranks import RankPanel, Ranking


def brute_tau(a, b):
    """Kendall tau straight from concordant/discordant pair counts."""
    p = len(a)
    c = d = 0
    for i, j in itertools.combinations(range(p), 2):
        s = (a[i] - a[j]) * (b[i] - b[j])
        c += s > 0
        d += s < 0
    return Fraction(c - d, p * (p - 1) // 2)


def make_panel(rank_rows, prompt="q", criterion="c"):
    items = tuple(f"i{j}" for j in range(len(rank_rows[0])))
    raters = tuple(f"r{j}" for j in range(len(rank_rows)))
    return RankPanel(prompt, criterion, raters, tuple(Ranking(tuple(r)) for r in rank_rows), items)


@pytest.fixture
def panel_factory():
    return make_panel


ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record_acceptance(criterion: int, passed: bool | None, detail: str) -> None:
    """Log one acceptance line; ``passed=None`` marks a skip."""
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    ACCEPTANCE[f"{criterion}"] = (status, detail)
    print(f"criterion {criterion}: {status} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=int):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {status}  {detail}")
