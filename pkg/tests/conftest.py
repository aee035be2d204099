import pytest

from ehrkg import synth


@pytest.fixture(scope="session")
def standard_run():
    """The 2,000-patient benchmark cohort, generated once per session."""
    cfg = synth.standard_config(seed=7)
    cohort, vocab, truth = synth.generate(cfg)
    return cfg, cohort, vocab, truth
