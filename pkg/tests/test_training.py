import numpy as np
import pytest
from oracles import blob_view

from gdrcil import nn, training
from gdrcil.training import EarlyStopper, NumericError, Objective, PlateauScheduler, Schedule


class Frozen(Objective):
    """Zero gradient, so only the engineered validation losses drive the schedule."""

    name = "frozen"

    def batch(self, cache, y):
        return 0.0, np.zeros_like(cache.probs)


def _run(monkeypatch, val_losses, schedule=None, lr=1e-2):
    seq = iter(val_losses)
    monkeypatch.setattr(training, "validation_loss", lambda params, subset: next(seq))
    hyper = nn.TrainHyper(hidden=(3,), learning_rate=lr, batch_size=64)
    return training.fit(blob_view((10, 10, 10)), hyper, Frozen(), schedule or Schedule(), seed=0)


def _halvings(trace):
    lrs = [e["lr"] for e in trace.epochs]
    # epoch e whose end-of-epoch step lowered the rate used in epoch e + 1
    return [e for e in range(1, len(lrs)) if lrs[e] < lrs[e - 1]]


def test_constant_loss_halves_at_7_13_19_and_stops_at_31(monkeypatch):
    _, trace = _run(monkeypatch, [1.0] * 300)
    assert _halvings(trace) == [7, 13, 19, 25]
    assert trace.final_epoch == 31 and trace.stop_reason == "early_stop"
    assert trace.best_epoch == 1
    lrs = [e["lr"] for e in trace.epochs]
    assert lrs[0] == 1e-2 and lrs[7] == 5e-3 and lrs[13] == 2.5e-3


def test_improvement_resets_both_counters(monkeypatch):
    seq = [5.0] + [5.0] * 5 + [4.0] + [4.0] * 40
    _, trace = _run(monkeypatch, seq)
    # six stagnant epochs needed after the new best at epoch 7
    assert _halvings(trace)[0] == 13
    assert trace.final_epoch == 37 and trace.best_epoch == 7


def test_equal_loss_is_not_an_improvement(monkeypatch):
    _, trace = _run(monkeypatch, [1.0, 0.5] + [0.5] * 40)
    assert trace.best_epoch == 2 and trace.final_epoch == 32


def test_learning_rate_floor(monkeypatch):
    _, trace = _run(monkeypatch, [1.0] * 300, Schedule(early_stop_patience=100), lr=1e-5)
    lrs = [e["lr"] for e in trace.epochs]
    assert min(lrs) == 1e-6
    assert sorted(set(lrs), reverse=True) == [1e-5, 5e-6, 2.5e-6, 1.25e-6, 1e-6]
    assert trace.final_epoch == 101


def test_hard_cap_of_200_epochs(monkeypatch):
    _, trace = _run(monkeypatch, list(np.linspace(10, 1, 300)))
    assert trace.final_epoch == 200 and trace.stop_reason == "max_epochs"
    assert _halvings(trace) == []
    assert Schedule().max_epochs == 200


def test_scheduler_and_stopper_units():
    s = PlateauScheduler(1.0, patience=2, factor=0.5, floor=0.3)
    out = [s.step(v) for v in (3, 3, 3, 3, 3, 3, 3)]
    assert out == [False, False, True, False, True, False, False]
    assert s.lr == 0.3
    e = EarlyStopper(patience=3)
    assert [e.step(v) for v in (2, 1, 1, 1, 1)] == [False, False, False, False, True]


def test_schedule_validation():
    for bad in ({"plateau_patience": 0}, {"early_stop_patience": 0}, {"lr_floor": 0}, {"max_epochs": 0}):
        with pytest.raises(ValueError):
            Schedule(**bad)


def test_best_checkpoint_is_returned(monkeypatch):
    seen = []

    def val(params, subset):
        seen.append(params.copy())
        return [3.0, 1.0, 2.0, 2.5][len(seen) - 1]

    monkeypatch.setattr(training, "validation_loss", val)
    hyper = nn.TrainHyper(hidden=(4,), init_std=0.3, batch_size=8)
    best, trace = training.fit(blob_view(), hyper, training.ERMObjective(), Schedule(max_epochs=4), seed=1)
    assert trace.best_epoch == 2
    np.testing.assert_array_equal(best.flat(), seen[1].flat())
    assert not np.array_equal(best.flat(), seen[-1].flat())


def test_non_finite_loss_raises_with_trace():
    class Bad(Objective):
        def batch(self, cache, y):
            return float("nan"), np.zeros_like(cache.probs)

    with pytest.raises(NumericError) as info:
        training.fit(blob_view(), nn.TrainHyper(hidden=(3,)), Bad(), Schedule(max_epochs=3), seed=0)
    assert info.value.trace.stop_reason == "numeric_failure"


def test_erm_fit_reduces_loss_and_is_deterministic():
    view = blob_view((200, 150, 100))
    hyper = nn.TrainHyper(hidden=(32, 16), init_std=0.3, batch_size=32)
    a, ta = training.fit(view, hyper, training.ERMObjective(), Schedule(max_epochs=15), seed=4)
    b, tb = training.fit(view, hyper, training.ERMObjective(), Schedule(max_epochs=15), seed=4)
    assert ta.epochs[-1]["val_loss"] < 0.5 * ta.epochs[0]["val_loss"]
    assert ta.to_dict() == tb.to_dict() and a.flat().tobytes() == b.flat().tobytes()
