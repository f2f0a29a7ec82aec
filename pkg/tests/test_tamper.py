from __future__ import annotations

from dataclasses import replace
from itertools import groupby

import pytest

from iotforensics.analyzer import Feature, FeatureSchema, StateSequence
from iotforensics.analyzer.features import StateRun
from iotforensics.analyzer.tamper import CooperationModel, contradiction_ratios, detect_tampered
from iotforensics.experiments import RunSpec, fit, simulate
from iotforensics.sim import load_scenario, prepare_apps

# three devices in one room: the lights follow the motion sensor
ROOM = FeatureSchema(tuple(
    Feature(name, "S", name, attr, None, ("on", "active"), "room", kind)
    for name, attr, kind in (("m1", "motion", "motion-sensor"), ("l1", "switch", "light"),
                             ("l2", "switch", "light"))))
ALL_OFF, ALL_ON = 0b000, 0b111


def _seq(bits: list[int], width: int = 3) -> StateSequence:
    runs, slot = [], 0
    for b, group in groupby(bits):
        n = len(list(group))
        runs.append(StateRun(b, slot, n))
        slot += n
    return StateSequence(runs, width)


def _cycling(periods: int, half: int = 20) -> list[int]:
    return ([ALL_OFF] * half + [ALL_ON] * half) * periods


@pytest.fixture
def room_model():
    return CooperationModel.train([_seq(_cycling(10))], ROOM)


def test_untampered_room_flags_nothing(room_model):
    rep = detect_tampered(room_model, _seq(_cycling(6)), window=30, ratio=0.5)
    assert rep.flagged == frozenset() and rep.trust == "trusted"
    assert set(rep.peak_ratio.values()) == {0.0}


def test_frozen_motion_sensor_is_flagged(room_model):
    # motion stuck at 0 while both lights keep cycling
    frozen = [b & ~1 for b in _cycling(6)]
    rep = detect_tampered(room_model, _seq(frozen), window=30, ratio=0.5)
    assert rep.flagged == {"m1"}
    assert rep.peak_ratio["m1"] > 0.5
    start, end = rep.spans["m1"]
    assert end - start == 30 * 10_000


def test_unknown_context_never_votes(room_model):
    # l1 and m1 disagree in a context never seen in training: peers cannot tell
    assert room_model.implied(0, 0b010) is None
    assert room_model.implied(0, 0b110) == 1


def test_majority_of_devices_flagged_is_untrusted():
    # four devices in pairs; training only saw each pair in agreement
    schema = FeatureSchema(tuple(Feature(f"d{i}", "S", f"d{i}", "switch", None, ("on",), f"z{i // 2}", "light")
                                 for i in range(4)))
    train_bits = [b for b in (0b0000, 0b0011, 0b1100, 0b1111) for _ in range(20)] * 3
    model = CooperationModel.train([_seq(train_bits, 4)], schema)
    assert detect_tampered(model, _seq(train_bits, 4)).trust == "trusted"
    # d0 and d2 stuck off while their partners keep switching
    stuck = [b & 0b1010 for b in train_bits]
    rep = detect_tampered(model, _seq(stuck, 4), window=30, ratio=0.5)
    assert len(rep.flagged) <= 2
    three_stuck = [b & 0b1000 for b in train_bits]
    rep3 = detect_tampered(model, _seq(three_stuck, 4), window=30, ratio=0.5)
    assert (rep3.trust == "untrusted") == (len(rep3.flagged) > 2)


def test_ratio_one_short_window_is_strict(room_model):
    frozen = [b & ~1 for b in _cycling(6)]
    ratios = contradiction_ratios(room_model, _seq(frozen), window=30)
    assert ratios["m1"] == pytest.approx(20 / 30)
    rep = detect_tampered(room_model, _seq(frozen), window=30, ratio=ratios["m1"])
    assert rep.flagged == frozenset()


def test_model_round_trip(room_model):
    assert CooperationModel.from_dict(room_model.to_dict()) == room_model


def test_training_needs_states():
    with pytest.raises(ValueError):
        CooperationModel.train([StateSequence([], 3)], ROOM)


@pytest.fixture(scope="module")
def office():
    base = replace(load_scenario("office-baseline"), days=7)
    apps = prepare_apps(base)
    train_logs = [simulate(base, RunSpec(f"train-{i}", 2000 + i), apps).logs for i in range(8)]
    return base, apps, train_logs, fit(base, train_logs)


def test_no_tampering_no_flags_on_training_runs(office):
    _, _, train_logs, models = office
    for logs in train_logs:
        rep = models.tamper(logs)
        assert rep.flagged == frozenset() and rep.trust == "trusted"


def test_two_frozen_devices_in_simulation(office):
    base, apps, _, models = office
    out = simulate(base, RunSpec("b1", 77, "Behavior-1", {"k": 2, "choice_seed": 3}), apps)
    truth = set(out.truth[-1].detail.get("diverged", []))
    rep = models.tamper(out.logs)
    assert truth and rep.flagged & truth
    assert set(rep.spans) == rep.flagged


def test_unseen_pair_rule_matches_tables(office):
    _, _, _, models = office
    coop = models.cooperation
    for d in coop.devices:
        for ctx, row in coop.tables[d][0].items():
            if sum(row) >= coop.min_support:
                for bit in (0, 1):
                    bits = (ctx & ~(1 << d)) | (bit << d)
                    assert coop.contradicts(d, bits) == (row[bit] == 0 and row[1 - bit] >= coop.min_support)
