import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmv2v.channel import (LinkBudgetParams, McsEntry, McsTable, antenna_gain_db, db_to_linear,
                           interference_mw, link_rate, link_sinr_matrix, linear_to_db, noise_power_dbm,
                           path_loss_db, received_power_dbm, sample_shadowing, select_mcs, sinr_db)
from mmv2v.scenario import build_manhattan_grid

P = LinkBudgetParams()
P5 = LinkBudgetParams(beamwidth=math.radians(5))
TABLE = McsTable.default()
GEO = build_manhattan_grid()


def test_antenna_gain():
    assert antenna_gain_db(math.radians(5)) == pytest.approx(32.18, abs=0.01)
    assert antenna_gain_db(math.radians(15)) == pytest.approx(22.63, abs=0.01)
    assert antenna_gain_db(0.1) > antenna_gain_db(0.2)
    for bad in (0.0, -1.0, 4.0):
        with pytest.raises(ValueError):
            antenna_gain_db(bad)


def test_path_loss():
    assert path_loss_db(10, P) == pytest.approx(97.00, abs=0.01)
    assert path_loss_db(1, P) == pytest.approx(70.04, abs=0.01)
    assert path_loss_db(10, P, 3.5) - path_loss_db(10, P) == pytest.approx(3.5, abs=1e-12)
    with pytest.raises(ValueError):
        path_loss_db(0, P)


def test_received_power():
    assert received_power_dbm(10, P) == pytest.approx(-41.74, abs=0.02)
    assert received_power_dbm(10, P5) == pytest.approx(-22.64, abs=0.02)
    assert received_power_dbm(10, P) - received_power_dbm(20, P) == pytest.approx(8.41, abs=0.02)


def test_noise_power():
    assert noise_power_dbm(P) == pytest.approx(-74.66, abs=0.01)
    assert noise_power_dbm(LinkBudgetParams(bandwidth=1.0, noise_figure=0.0)) == pytest.approx(-174.0)
    assert (noise_power_dbm(LinkBudgetParams(bandwidth=2 * P.bandwidth)) - noise_power_dbm(P)
            == pytest.approx(3.01, abs=0.01))


def test_sinr():
    assert sinr_db(-41.74, -74.66) == pytest.approx(32.92, abs=0.02)
    base = sinr_db(-41.74, -74.66)
    assert base - sinr_db(-41.74, -74.66, float(db_to_linear(-74.66))) == pytest.approx(10 * math.log10(2))
    assert sinr_db(-60.0, -60.0) == pytest.approx(0.0, abs=1e-12)


def test_single_expression_oracle():
    # one-line evaluation of the whole budget chain
    for d, s in ((3.0, 0.0), (17.5, -4.2), (40.0, 2.0)):
        g = 10 * math.log10(4 * math.pi / math.radians(15) ** 2)
        pl = 26.6 * math.log10(d) + 0.04 * d + 70 + s
        expected = 10 + 2 * g - pl - (-174 + 10 * math.log10(2.16e9) + 6)
        assert sinr_db(received_power_dbm(d, P, s), noise_power_dbm(P)) == pytest.approx(expected, abs=1e-6)
        assert link_sinr_matrix(np.array([d]), P, s)[0] == pytest.approx(expected, abs=1e-6)


def test_shadowing():
    assert sample_shadowing(np.random.default_rng(0), 0.0) == 0.0
    x = sample_shadowing(np.random.default_rng(1), 5.8, 100_000)
    assert abs(x.mean()) < 0.1 and abs(x.std() - 5.8) < 0.1
    assert np.array_equal(sample_shadowing(np.random.default_rng(2), 5.8, 5),
                          sample_shadowing(np.random.default_rng(2), 5.8, 5))


def test_interference():
    rx, aim = (20.0, 6.4), (10.0, 6.4)
    assert interference_mw(rx, aim, [], GEO, P) == 0.0
    # interferer 10 m away on the receive boresight, beaming at the receiver
    got = interference_mw(rx, aim, [((10.0, 6.4), (25.0, 6.4))], GEO, P)
    assert got == pytest.approx(10 ** (-41.74 / 10), rel=0.01)
    # same interferer beaming the other way
    assert interference_mw(rx, aim, [((10.0, 6.4), (0.0, 6.4))], GEO, P) == 0.0
    # receiver looking the other way
    assert interference_mw(rx, (30.0, 6.4), [((10.0, 6.4), (25.0, 6.4))], GEO, P) == 0.0


def test_mcs_table_default():
    assert TABLE.max_rate == pytest.approx(6.7568)
    assert select_mcs(60.0, TABLE).rate == pytest.approx(6.7568)
    assert select_mcs(-50.0, TABLE) is None
    first = TABLE[0]
    assert select_mcs(first.k_mcs, TABLE) == first
    assert TABLE.rate_for(first.k_mcs - 1e-9) == 0.0
    with pytest.raises(ValueError):
        select_mcs(10.0, [])


def test_mcs_table_validation(tmp_path):
    with pytest.raises(ValueError):
        McsTable([McsEntry(1, 5.0, 1.0), McsEntry(2, 4.0, 2.0)])
    path = tmp_path / "m.csv"
    path.write_text("index,k_mcs_db,rate_gbps\n1,1.0,0.5\n2,3.0,x\n")
    with pytest.raises(ValueError, match="m.csv:3"):
        McsTable.from_csv(path)
    path.write_text("index,k_mcs_db,rate_gbps\n1,1.0,0.5\n2,3.0,1.5\n")
    assert McsTable.from_csv(path).max_rate == 1.5


@given(st.floats(-20, 60), st.floats(-20, 60))
def test_mcs_monotone_and_vectorised(a, b):
    lo, hi = sorted((a, b))
    assert TABLE.rate_for(lo) <= TABLE.rate_for(hi)
    entry = select_mcs(a, TABLE)
    assert TABLE.rate_for(a) == (0.0 if entry is None else entry.rate)


@given(st.floats(0.5, 200), st.floats(0.5, 200))
@settings(max_examples=200)
def test_rate_non_increasing_in_distance(d1, d2):
    lo, hi = sorted((d1, d2))
    assert link_rate(lo, P, TABLE) >= link_rate(hi, P, TABLE)


@given(st.floats(-100, 100))
def test_db_roundtrip(x):
    assert float(linear_to_db(db_to_linear(x))) == pytest.approx(x, rel=1e-9, abs=1e-9)


def test_params_validation():
    for kw in ({"bandwidth": 0}, {"pathloss_exponent": 0}, {"beamwidth": 0}, {"shadow_sigma": -1}):
        with pytest.raises(ValueError):
            LinkBudgetParams(**kw)
