import numpy as np
import pytest

from fqchopt.config import parse_scenario


@pytest.fixture(scope="session")
def a9():
    scen = parse_scenario({}, env={})
    cfg = scen.model()
    return scen, cfg, scen.initial(cfg)


@pytest.fixture(scope="session")
def dirichlet():
    scen = parse_scenario({"preset": "dirichlet-1d"}, env={})
    cfg = scen.model()
    return scen, cfg, scen.initial(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria: one summary line each, printed at the end of the run
_ACCEPTANCE: dict[int, dict] = {}


class AcceptanceRecorder:
    def __init__(self, number: int, title: str):
        self.entry = _ACCEPTANCE.setdefault(number, {"title": title, "parts": []})

    def __call__(self, label: str, value, threshold, passed: bool) -> bool:
        self.entry["parts"].append((label, value, threshold, bool(passed)))
        return bool(passed)


@pytest.fixture
def criterion():
    return AcceptanceRecorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[n]
        ok = bool(e["parts"]) and all(p[3] for p in e["parts"])
        detail = "; ".join(f"{lab} {val:.4g} vs {thr:.4g}{'' if p else ' (fail)'}"
                           if isinstance(val, float) else f"{lab} {val} vs {thr}{'' if p else ' (fail)'}"
                           for lab, val, thr, p in e["parts"])
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {e['title']}: {detail}")
