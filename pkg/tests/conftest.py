import pytest

from fedrep.attacks import AttackSpec
from fedrep.client import LocalAlgoSpec
from fedrep.config import ExperimentConfig
from fedrep.datasets import DatasetSpec
from fedrep.models import ModelSpec
from fedrep.robust_agg import AggregatorSpec
from fedrep.secure_agg import QuantSpec


def small_config(**changes) -> ExperimentConfig:
    """A fast logistic-regression setup; keyword arguments override fields."""
    base = ExperimentConfig(
        m=4,
        byz_count=0,
        K=8,
        alpha=0.3,
        s=2,
        rounds=5,
        master_seed=3,
        dataset=DatasetSpec(n_per_client=40, n_test=200, features=9),
        model=ModelSpec(kind="logistic_regression"),
        local=LocalAlgoSpec(eta=0.5, batch_size=10),
        aggregator=AggregatorSpec(kind="geomed"),
        attack=AttackSpec(),
        quant=QuantSpec(),
    )
    return base.replace(**changes)


@pytest.fixture
def make_config():
    return small_config


ACCEPTANCE: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    """Log one acceptance line; the lines are repeated in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
