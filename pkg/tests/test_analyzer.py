from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import replace

import pytest

from iotforensics.analyzer import (
    UNKNOWN, Confusion, Detection, DetectionParams, EvalWindow, Feature, FeatureSchema, InsufficientData,
    MissingThreshold, ModelFormatError, SchemaMismatch, StateSequence, TransitionModel, binarize, build_states,
    detect_anomalies, evaluate, label_logs, load_policy, policy_from_dict, predict_next, sequence_probability,
    split_train_test, train, train_many, transition_prob,
)
from iotforensics.analyzer.features import StateRun
from iotforensics.experiments import RunSpec, fit, simulate
from iotforensics.logstore import LogRecord
from iotforensics.sim import inject_threat, load_scenario, prepare_apps

A, B, C = 0, 1, 2


# -- binarizer and labeling ---------------------------------------------------------------

def test_binarize_over_threshold():
    assert binarize(75, 70) == 1


def test_binarize_equal_is_zero():
    assert binarize(70, 70) == 0


def test_binarize_sweep_is_a_step():
    out = [binarize(v / 10, 70) for v in range(600, 800)]
    first_one = out.index(1)
    assert out == [0] * first_one + [1] * (len(out) - first_one)
    assert first_one == 701 - 600


def test_numeric_feature_needs_threshold():
    with pytest.raises(MissingThreshold):
        binarize(1, None)
    with pytest.raises(MissingThreshold):
        FeatureSchema((Feature("t", "S", "t1", "temperature"),))


def _record(ts, device="m1", attr="motion", value="active", kind="Event", app="app", seq=None):
    return LogRecord(ts, app, seq if seq is not None else ts + 1, kind, device, attr, value)


def test_label_slot_zero_and_unknown_device():
    [a, b] = label_logs([_record(0), _record(5, device="ghost")], {"m1": ("motion-sensor", "lobby")})
    assert a.slot == 0 and a.binding == "m1" and a.zone == "lobby"
    assert b.binding == UNKNOWN and b.zone == UNKNOWN


def test_label_slots_match_floor_division():
    rng = random.Random(0)
    records = sorted((_record(rng.randrange(0, 10**8), seq=i + 1) for i in range(1000)), key=lambda r: r.ts)
    for slot_ms in (1_000, 10_000, 60_000):
        assert [lr.slot for lr in label_logs(records, {}, None, slot_ms)] == [r.ts // slot_ms for r in records]


MOTION = FeatureSchema((Feature("m1", "S", "m1", "motion", None, ("active",)),))


def test_states_hold_last_value():
    records = [_record(0, value="inactive"), _record(30_000), _record(55_000, device="other")]
    states = build_states(label_logs(records), MOTION)
    assert states.bits() == [0, 0, 0, 1, 1, 1]


def test_no_records_no_states():
    assert len(build_states([], MOTION)) == 0


def test_states_match_replay_oracle():
    rng = random.Random(1)
    schema = FeatureSchema((Feature("a", "S", "a", "switch", None, ("on",)),
                            Feature("b", "S", "b", "switch", None, ("on",))))
    records = []
    for i in range(300):
        records.append(_record(rng.randrange(0, 3_000_000), rng.choice("ab"), "switch", rng.choice(["on", "off"]),
                               seq=i + 1))
    records.sort(key=lambda r: (r.ts, r.seq))
    states = build_states(label_logs(records), schema)
    first, last = records[0].ts // 10_000, records[-1].ts // 10_000
    held = {"a": 0, "b": 0}
    want = []
    for slot in range(first, last + 1):
        for r in records:
            if r.ts // 10_000 == slot:
                held[r.device_id] = int(r.value == "on")
        want.append(held["a"] | held["b"] << 1)
    assert states.bits() == want


# -- Markov model -------------------------------------------------------------------------

def test_alternating_trace_counts():
    m = train([A, B, A, B, A], epsilon=0)
    assert m.counts == {A: {B: 2}, B: {A: 2}}
    assert transition_prob(m, A, B) == 1.0 and transition_prob(m, B, A) == 1.0


def test_constant_trace():
    assert transition_prob(train([A, A, A], epsilon=0), A, A) == 1.0


def test_too_short_to_train():
    with pytest.raises(InsufficientData):
        train([A])


def test_brute_force_counts_on_random_trace():
    rng = random.Random(2)
    trace = [rng.randrange(4) for _ in range(500)]
    m = train(trace, epsilon=0)
    pairs = Counter(zip(trace, trace[1:]))
    for i in range(4):
        total = sum(c for (a, _), c in pairs.items() if a == i)
        for j in range(4):
            want = pairs[(i, j)] / total if total else 0.25
            assert abs(transition_prob(m, i, j) - want) <= 1e-12


def test_unseen_source_is_uniform():
    m = train([A, B, A, B], epsilon=0)
    assert transition_prob(m, A, B) == 1.0
    assert transition_prob(m, 7, A) == 0.5 and transition_prob(m, 7, B) == 0.5


def test_smoothing_matches_hand_arithmetic(manifest):
    doc = manifest["smoothing"]
    m = train(doc["trace"], epsilon=doc["epsilon"])
    for i, j, num, den in doc["expected"]:
        assert transition_prob(m, i, j) == pytest.approx(num / den, abs=1e-15)


def test_sequence_probability_examples():
    m = TransitionModel({A: {B: 1}, B: {A: 1}}, {A: 1}, 0.0)
    assert sequence_probability(m, [A]) == 1.0
    assert sequence_probability(m, [A, B, A]) == 1.0
    assert sequence_probability(m, [A, A]) == 0.0


def test_sequence_probability_direct_product():
    rng = random.Random(3)
    counts = {i: {j: rng.randrange(1, 9) for j in range(4)} for i in range(4)}
    initial = {i: rng.randrange(1, 5) for i in range(4)}
    m = TransitionModel(counts, initial, 0.0)
    seq = [rng.randrange(4) for _ in range(6)]
    want = initial[seq[0]] / sum(initial.values())
    for a, b in zip(seq, seq[1:]):
        want *= counts[a][b] / sum(counts[a].values())
    assert abs(sequence_probability(m, seq) - want) <= 1e-12


def test_predict_next_examples():
    m = TransitionModel({A: {B: 9, A: 1}}, {A: 1}, 1e-3)
    assert predict_next(m, A) == B
    tie = TransitionModel({0: {3: 2, 5: 2}}, {0: 1}, 1e-3)
    assert predict_next(tie, 0) == 3


def test_predict_next_matches_scan():
    rng = random.Random(4)
    counts = {i: {j: rng.randrange(0, 4) for j in range(4) if rng.random() < 0.8} for i in range(4)}
    counts = {i: {j: c for j, c in row.items() if c} for i, row in counts.items()}
    m = TransitionModel(counts, {0: 1}, 1e-3)
    for i in range(4):
        probs = [transition_prob(m, i, j) for j in m.support]
        best = max(probs)
        assert predict_next(m, i) == m.support[probs.index(best)]


def test_initial_distribution_is_empirical():
    m = train_many([[A, B], [A, A], [B, A]], epsilon=0)
    assert m.initial_counts == {A: 2, B: 1}
    assert m.initial_prob(A) == pytest.approx(2 / 3)


def test_model_round_trip_and_format_errors():
    m = train([A, B, C, A], epsilon=0.01)
    again = TransitionModel.loads(m.dumps())
    assert again == m
    with pytest.raises(ModelFormatError):
        TransitionModel.loads("{}")
    with pytest.raises(ModelFormatError):
        TransitionModel.loads("not json")


def test_run_length_states_train_like_flat_lists():
    runs = StateSequence([StateRun(A, 0, 3), StateRun(B, 3, 2), StateRun(A, 5, 1)], 1)
    assert train(runs, 0.0).counts == train(runs.bits(), 0.0).counts


def test_schema_mismatch():
    m = train([A, B, A], schema=MOTION)
    wide = StateSequence([StateRun(A, 0, 2)], 3)
    with pytest.raises(SchemaMismatch):
        detect_anomalies(m, wide, policy_from_dict({}), [])


# -- metrics ------------------------------------------------------------------------------

def _window(i, label, run="r"):
    return EvalWindow(run, i * 100, i * 100 + 100, label)


def _det(i, cls, run="r"):
    return Detection((i * 100, i * 100 + 100), cls, 1.0, (("app", i),), run)


def test_perfect_detector():
    windows = [_window(0, "Activity-1"), _window(1, "Benign")]
    c = evaluate([_det(0, "Activity-1")], windows, ["Activity-1"]).per_class["Activity-1"]
    assert (c.tpr, c.fpr, c.acc, c.f_score) == (1.0, 0.0, 1.0, 1.0)


def test_all_benign_detector():
    windows = [_window(0, "Activity-1"), _window(1, "Benign")]
    c = evaluate([], windows, ["Activity-1"]).per_class["Activity-1"]
    assert (c.tpr, c.tnr) == (0.0, 1.0)


def test_random_detections_match_counting_oracle():
    rng = random.Random(5)
    classes = ["Activity-1", "Activity-2", "Behavior-2"]
    windows = [_window(i, rng.choice(classes + ["Benign"])) for i in range(300)]
    dets = [_det(i, rng.choice(classes)) for i in range(300) if rng.random() < 0.5]
    rep = evaluate(dets, windows, classes)
    predicted = {d.window[0] // 100: d.cls for d in dets}
    for c in classes:
        tp = sum(1 for i, w in enumerate(windows) if w.label == c and predicted.get(i) == c)
        fn = sum(1 for i, w in enumerate(windows) if w.label == c and predicted.get(i) != c)
        tn = sum(1 for i, w in enumerate(windows) if w.label == "Benign" and i not in predicted)
        fp = sum(1 for i, w in enumerate(windows) if w.label == "Benign" and i in predicted)
        assert rep.per_class[c] == Confusion(tp, fn, tn, fp)


def test_metric_identities_on_example():
    c = Confusion(7, 3, 11, 2)
    assert c.tpr + c.fnr == 1 and c.tnr + c.fpr == 1
    assert c.acc == (7 + 11) / 23 and c.f_score == 14 / (14 + 2 + 3)


def test_split_forty_benign_runs():
    runs = [RunSpec(f"b{i}", i) for i in range(40)] + [RunSpec("t", 99, "Activity-1")]
    train_runs, test_runs = split_train_test(runs, 0.75, seed=1)
    assert len(train_runs) == 30 and len(test_runs) == 11
    assert all(not r.malicious for r in train_runs)
    assert split_train_test(runs, 0.75, seed=1) == (train_runs, test_runs)
    with pytest.raises(ValueError):
        split_train_test(runs, 1.0)


# -- policy -------------------------------------------------------------------------------

def test_policy_file_and_unknown_zone(tmp_path):
    path = tmp_path / "policy.yaml"
    path.write_text("allowed_days: [MON, TUE]\nallowed_hours: ['07:00', '20:00']\nrestricted: {vault: [u1]}\n")
    pol = load_policy(path, {"vault"})
    assert pol.allowed_at(8 * 3_600_000) and not pol.allowed_at(21 * 3_600_000)
    assert not pol.allowed_at(2 * 86_400_000 + 8 * 3_600_000)
    from iotforensics.analyzer import PolicyError
    with pytest.raises(PolicyError):
        load_policy(path, {"lobby"})


# -- trained on simulated office weeks ----------------------------------------------------

@pytest.fixture(scope="module")
def office():
    base = replace(load_scenario("office-baseline"), days=7)
    apps = prepare_apps(base)
    train_logs = [simulate(base, RunSpec(f"train-{i}", 1000 + i), apps).logs for i in range(8)]
    return base, apps, train_logs, fit(base, train_logs)


def test_training_runs_are_self_consistent(office):
    _, _, train_logs, models = office
    for logs in train_logs:
        labeled, states = models.states(logs)
        assert detect_anomalies(models.markov, states, models.policy, labeled,
                                DetectionParams(tau=models.tau)) == []


def test_after_hours_lock_access_detected(office):
    base, apps, _, models = office
    sc = inject_threat(base, "Activity-5", {"at": "20:45"})
    logs = simulate(sc, RunSpec("a5", 7, "Activity-5"), apps).logs
    [label] = sc.truth
    hits = [d for d in models.detect(logs, "a5") if d.cls == "Activity-5" and d.overlaps(label.start, label.end)]
    assert hits and all(d.evidence for d in hits)


def test_detection_is_deterministic(office):
    base, apps, _, models = office
    logs = simulate(base, RunSpec("b", 55), apps).logs
    assert models.detect(logs, "b") == models.detect(logs, "b")
