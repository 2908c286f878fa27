import numpy as np
import pytest

from ladderforge.model import EncodeParams, OperatingPoint, ShotRecord
from ladderforge.rdtfit import analyze_shot
from ladderforge.synth import SynthConfig, gen_dataset


def make_points(rtd):
    """OperatingPoints from (rate, time, distortion) triples; params are placeholders."""
    return [OperatingPoint(EncodeParams(0, 16, 16, i), float(r), float(d), float(t))
            for i, (r, t, d) in enumerate(rtd)]


def make_shot(shot_id, rtd, duration=1.0, analyzed=True):
    shot = ShotRecord(shot_id, tuple(make_points(rtd)), duration=duration)
    return analyze_shot(shot) if analyzed else shot


def random_model_shot(rng, shot_id, n, noise=0.1):
    """n points scattered around d = 100 r^-0.8 t^-0.3 with lognormal noise."""
    r = np.exp(rng.uniform(0, 6, n))
    t = np.exp(rng.uniform(0, 4, n))
    d = 100 * r**-0.8 * t**-0.3 * np.exp(rng.normal(0, noise, n))
    return make_shot(shot_id, zip(r, t, d))


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture(scope="session")
def small_cfg():
    return SynthConfig(
        presets=((0, 1.0), (4, 4.0), (8, 16.0)),
        resolutions=((1920, 1080), (960, 540)),
        crf_range=(19, 41, 4),
        noise_sigma=0.05,
        content_jitter=0.1,
        seed=11,
    )


@pytest.fixture(scope="session")
def small_shots(small_cfg):
    return [analyze_shot(s) for s in gen_dataset(small_cfg, 4)]


def brute_select(shot, lam, mu, indices=None):
    """Exhaustive argmin of d + lam r + mu t with the (J, t, r, index) tie-break."""
    indices = range(len(shot.points)) if indices is None else indices
    return min(
        indices,
        key=lambda i: (shot.points[i].distortion + lam * shot.points[i].rate + mu * shot.points[i].time,
                       shot.points[i].time, shot.points[i].rate, i),
    )


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
