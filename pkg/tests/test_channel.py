import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slicedrl.channel import LinkConfig, UserLink, achievable_rate, fading_gain, make_links, mean_snr
from slicedrl.traffic import ConfigError


def test_reference_distance_gives_reference_snr():
    cfg = LinkConfig(reference_snr_db=20.0, reference_distance=40.0)
    assert float(mean_snr(40.0, cfg)) == pytest.approx(100.0)
    # 3.5 exponent: halving distance gains 35 log10(2) dB
    assert 10 * math.log10(float(mean_snr(20.0, cfg)) / 100.0) == pytest.approx(35 * math.log10(2))


def test_rate_formula():
    cfg = LinkConfig(antenna_count=32)
    link = UserLink(0, 40.0, 100.0)
    assert achievable_rate(1e6, link, 0.5, cfg) == pytest.approx(1e6 * math.log2(1 + 32 * 0.5 * 100))
    assert achievable_rate(0.0, link, 0.5, cfg) == 0.0
    with pytest.raises(ValueError):
        achievable_rate(-1.0, link, 0.5, cfg)


@given(b=st.floats(1e3, 1e8), g=st.floats(1e-6, 50), m1=st.integers(1, 64), m2=st.integers(1, 64))
def test_rate_monotone_in_antennas_and_linear_in_bandwidth(b, g, m1, m2):
    link = UserLink(0, 10.0, 30.0)
    lo, hi = sorted((m1, m2))
    r_lo = achievable_rate(b, link, g, LinkConfig(antenna_count=lo))
    r_hi = achievable_rate(b, link, g, LinkConfig(antenna_count=hi))
    assert r_lo <= r_hi
    assert achievable_rate(2 * b, link, g, LinkConfig(antenna_count=lo)) == pytest.approx(2 * r_lo)


def test_fading_is_unit_mean_exponential():
    g = fading_gain(np.random.default_rng(0), 400_000)
    assert g.mean() == pytest.approx(1.0, abs=0.01)
    assert g.var() == pytest.approx(1.0, abs=0.02)
    assert np.all(g >= 0)


def test_make_links_keeps_order():
    links = make_links([5.0, 40.0], LinkConfig())
    assert [l.user_id for l in links] == [0, 1]
    assert links[0].mean_snr > links[1].mean_snr


@pytest.mark.parametrize("kw", [{"antenna_count": 0}, {"slot_duration": 0.0},
                                {"path_loss_exponent": 1.5}, {"reference_distance": 0.0}])
def test_invalid_link_config(kw):
    with pytest.raises(ConfigError):
        LinkConfig(**kw)
