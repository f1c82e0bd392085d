import math

import numpy as np
import pytest

from coupled_nod.environment import (EfficiencyAccount, TrashField, bias_from_efficiency,
                                     efficiency, on_patch_entry, sense_and_collect)
from coupled_nod.model import PATCH1, PATCH2, mirrored_patches

P1, P2 = mirrored_patches(0.1, y_bounds=(-0.5, 0.5))
TANH_QMIN = math.tanh(1.5)


def test_efficiency_examples():
    assert efficiency(EfficiencyAccount()) == pytest.approx(200.0, rel=1e-15)
    acct = EfficiencyAccount(collected_count=3, distance_in_patch=2.0)
    assert efficiency(acct) == pytest.approx(5 / 2.01, rel=1e-15)
    assert abs(efficiency(acct) - 2.4876) < 1e-4


def test_efficiency_decreases_with_distance():
    qs = [efficiency(EfficiencyAccount(distance_in_patch=d)) for d in np.linspace(0, 5, 51)]
    assert np.all(np.diff(qs) < 0)


def test_bias_examples():
    acct = EfficiencyAccount()
    assert bias_from_efficiency(acct, q=1.5) == 0.0
    assert bias_from_efficiency(acct, q=1e6) == pytest.approx(1 - 0.905148, abs=1e-6)
    assert bias_from_efficiency(acct, q=1e-12) == pytest.approx(-0.905148, abs=1e-6)
    acct.s = -1
    assert bias_from_efficiency(acct, q=1e6) == pytest.approx(-(1 - TANH_QMIN), abs=1e-12)


def test_bias_sign_semantics_and_bound():
    for s in (1, -1):
        for q in np.geomspace(1e-3, 1e3, 50):
            b = bias_from_efficiency(EfficiencyAccount(s=s), q=q)
            assert abs(b) < 1
            if q > 1.5:
                assert np.sign(b) == s
            elif q < 1.5:
                assert np.sign(b) == -s


@pytest.mark.parametrize("kw", [dict(q0=0), dict(epsilon=0), dict(q_min=-1), dict(s=0)])
def test_account_validation(kw):
    with pytest.raises(ValueError):
        EfficiencyAccount(**kw)


def test_on_patch_entry_resets():
    acct = EfficiencyAccount(collected_count=4, distance_in_patch=3.0, s=1)
    on_patch_entry(acct, P2)
    assert (acct.collected_count, acct.distance_in_patch, acct.s) == (0, 0.0, -1)
    assert acct.patch == PATCH2
    assert bias_from_efficiency(acct) == pytest.approx(-(math.tanh(200) - TANH_QMIN))
    on_patch_entry(acct, PATCH1)
    assert acct.s == 1


def test_trash_uniform_inside_patches():
    f = TrashField.uniform((P1, P2), {PATCH1: 200, PATCH2: 50}, np.random.default_rng(3))
    assert f.counts() == {PATCH1: dict(total=200, uncollected=200),
                          PATCH2: dict(total=50, uncollected=50)}
    for p in (P1, P2):
        pts = f.xy[f.patch == p.id]
        assert np.all(p.contains(pts[:, 0], pts[:, 1]))


def test_sense_and_collect():
    f = TrashField.empty()
    f.add(P1, 3, np.random.default_rng(0))
    before = f.collected_at.copy()
    far = (0.5, 5.0)
    assert sense_and_collect(far, f, 0.05, 1.0) == 0
    assert np.array_equal(f.collected_at, before)
    at = tuple(f.xy[1])
    assert sense_and_collect(at, f, 0.05, 2.0) >= 1
    assert f.collected_at[1] == 2.0
    # already collected items stay collected at their first time
    assert sense_and_collect(at, f, 0.05, 3.0) == 0
    assert f.collected_at[1] == 2.0
    with pytest.raises(ValueError):
        sense_and_collect(at, f, 0.0, 0.0)


def test_no_pickup_outside_patch():
    f = TrashField(np.array([[0.05, 0.0]]), np.array([PATCH1]), np.array([-1.0]))
    assert sense_and_collect((0.05, 0.0), f, 0.05, 0.0, inside_patch=False) == 0


def test_overlapping_agents_never_double_collect():
    f = TrashField.empty()
    f.add(P1, 5, np.random.default_rng(1))
    f.xy[:] = [0.5, 0.0]  # all items under both agents
    picks = [sense_and_collect((0.5, 0.0), f, 0.05, 0.0) for _ in range(2)]
    assert picks == [5, 0]
    assert int((~f.uncollected).sum()) == 5


def test_trash_csv(tmp_path):
    f = TrashField(np.array([[0.5, 0.1], [-0.5, 0.2]]), np.array([1, 2]), np.array([-1.0, 4.5]))
    f.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "x,y,collected_at_time"
    assert lines[1:] == ["0.5,0.1,-1.0", "-0.5,0.2,4.5"]
