import numpy as np
import pytest

from recomlab.config import load_preset

# criterion lines collected by test_acceptance.py and echoed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(tmp_path, **changes):
    """A few-iteration training config for plumbing tests."""
    cfg = load_preset("desk")
    ppo = cfg.ppo.__class__(**{**cfg.ppo.__dict__, "n_envs": 2, "horizon": 64, "epochs": 2})
    recom = cfg.recom.__class__(**{**cfg.recom.__dict__, "update_period": 128})
    base = dict(total_timesteps=640, checkpoint_every=256, output_dir=str(tmp_path / "run"),
                ppo=ppo, recom=recom, probe_size=64)
    base.update(changes)
    return cfg.replace(**base)
