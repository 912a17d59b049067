from fractions import Fraction

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from givental.series import Poly, TruncationSpec

settings.register_profile(
    "repo",
    deadline=None,
    derandomize=True,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")

SMALL = TruncationSpec(rank=2, max_descendant=2, max_degree=4, max_genus=1, flow_order=2)

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=6)


@st.composite
def polys(draw, spec: TruncationSpec = SMALL, max_terms: int = 5, max_degree: int | None = None, frame: str = "t"):
    top = spec.max_degree if max_degree is None else max_degree
    var = st.tuples(st.integers(0, spec.rank - 1), st.integers(0, spec.max_descendant))
    mono = st.lists(var, max_size=top).map(lambda m: tuple(sorted(m)))
    terms = draw(st.dictionaries(mono, rationals, max_size=max_terms))
    return Poly(terms, spec, frame)


@st.composite
def rational_matrices(draw, n: int, bound: int = 5):
    return [[Fraction(draw(st.integers(-bound, bound))) for _ in range(n)] for _ in range(n)]


# one line per acceptance criterion, printed after the run
CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
