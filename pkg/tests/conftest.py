import pytest
from hypothesis import HealthCheck, settings

from gradjoin import costmodel
from gradjoin.plan import Query
from gradjoin.storage import TripleStore
from gradjoin.synth import GenConfig, generate_synthetic

settings.register_profile(
    "repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def toy_store():
    """People, who they know and where they live."""
    labels = ["knows", "livesIn", "worksAt", "alice", "bob", "carol", "dave", "paris", "rome", "acme"]
    ids = {lab: i for i, lab in enumerate(labels)}
    facts = [
        ("alice", "knows", "bob"),
        ("alice", "knows", "carol"),
        ("bob", "knows", "carol"),
        ("carol", "knows", "dave"),
        ("dave", "knows", "alice"),
        ("alice", "livesIn", "paris"),
        ("bob", "livesIn", "rome"),
        ("carol", "livesIn", "paris"),
        ("dave", "livesIn", "rome"),
        ("alice", "worksAt", "acme"),
        ("carol", "worksAt", "acme"),
    ]
    return TripleStore([tuple(ids[x] for x in f) for f in facts], labels)


@pytest.fixture(scope="session")
def toy_query(toy_store):
    """?x knows ?y . ?y livesIn ?c . ?x worksAt acme . ?y knows ?z"""
    s = toy_store
    return Query(
        (
            s.pattern_from_labels("?x", "knows", "?y"),
            s.pattern_from_labels("?y", "livesIn", "?c"),
            s.pattern_from_labels("?x", "worksAt", "acme"),
            s.pattern_from_labels("?y", "knows", "?z"),
        ),
        id="toy",
    )


@pytest.fixture(scope="session")
def small_synthetic():
    cfg = GenConfig(n_entities=200, n_predicates=24, n_classes=3, n_triples=900, sizes=(2, 3, 4, 5),
                    queries_per_size=4, seed=3)
    return generate_synthetic(cfg)


@pytest.fixture(scope="session")
def random_model():
    return costmodel.init_params(d_e=4, hidden=16, seed=5)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
