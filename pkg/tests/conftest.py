import pytest

from ibdiar import ib, pipeline
from ibdiar.synth import SynthSpec, generate, make_corpus, well_separated

_agglomerate = ib.agglomerate
CLUSTERING_RUNS = []


def _checked_agglomerate(state, nmi_threshold=0.4):
    """Every clustering run in the suite goes through this invariant check."""
    i_xy = state.I_XY
    result = _agglomerate(state, nmi_threshold)
    nmis = [1.0] + [r.nmi_after for r in result.records]
    assert all(b <= a + 1e-12 for a, b in zip(nmis, nmis[1:])), "NMI increased along the trajectory"
    assert max(nmis) * i_xy <= i_xy + 1e-9
    assert result.state.I_YC <= result.state.I_XY + 1e-9
    CLUSTERING_RUNS.append(len(result.records))
    return result


ib.agglomerate = _checked_agglomerate
pipeline.agglomerate = _checked_agglomerate


@pytest.fixture(scope="session")
def two_speaker():
    return generate(well_separated(total_duration_s=60, rng_seed=11, recording_id="two"))


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(3, SynthSpec(num_speakers=2, total_duration_s=40), name="small", seed=5)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for ok, name, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
