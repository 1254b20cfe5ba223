import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tschsim.bdpc import ADD, DELETE, PROPORTIONAL, Bdpc, LateWindow, budget_s, classify_arrival


@pytest.mark.parametrize(
    "elapsed_slots,late", [(0, False), (160, True), (150, False), (151, True)]
)
def test_classify_arrival(elapsed_slots, late):
    assert classify_arrival(1000, 1000 + elapsed_slots, 10.0, 1.5) is late


def test_proportional_budget():
    assert budget_s(1.5) == 1.5
    assert budget_s(1.5, PROPORTIONAL, own_rank=256, leaf_rank=1621) == pytest.approx(1.5)
    b = budget_s(1.5, PROPORTIONAL, own_rank=1280, leaf_rank=1621)
    assert b == pytest.approx(1.5 * (1621 - 1280 + 256) / 1621)


def test_window_slides():
    w = LateWindow(100)
    for i in range(150):
        w.push(i < 50)
    assert w.occupancy == 100 and w.late_rate == 0.0


def window_with(late, total=100):
    b = Bdpc()
    for i in range(total):
        b.record(5, i < late)
    return b


@pytest.mark.parametrize("late,action", [(12, ADD), (10, ADD), (3, DELETE), (5, DELETE), (7, None), (0, DELETE)])
def test_threshold_rows(late, action):
    assert window_with(late).evaluate_child(5, 0) == action


def test_warm_up_needs_ten_verdicts():
    b = window_with(9, 9)
    assert b.evaluate_child(5, 0) is None
    b.record(5, True)
    assert b.evaluate_child(5, 0) == ADD


def test_cooldown_one_slotframe():
    b = window_with(20)
    assert b.evaluate_child(5, 0) == ADD
    b.record(5, True)
    assert b.evaluate_child(5, 100) is None
    assert b.evaluate_child(5, 101) == ADD


def test_children_isolated():
    b = Bdpc()
    for _ in range(50):
        b.record(1, True)
        b.record(2, False)
    assert b.evaluate_child(1, 0) == ADD
    assert b.evaluate_child(2, 0) == DELETE


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=40),
    st.integers(1, 30),
    st.integers(0, 2**32 - 1),
)
def test_one_transaction_per_cooldown_window(rates, per_frame, salt):
    """Scripted late-rate streams: at most one action per child per cooldown window."""
    import random

    rng = random.Random(salt)
    b = Bdpc(cooldown_slots=101)
    fired = []
    for frame, rate in enumerate(rates):
        for _ in range(per_frame):
            b.record(3, rng.random() < rate)
        for sub in range(0, 101, 20):  # several evaluations inside one slotframe
            a = b.evaluate_child(3, frame * 101 + sub)
            if a is not None:
                fired.append(frame * 101 + sub)
    assert all(t2 - t1 >= 101 for t1, t2 in zip(fired, fired[1:]))


def test_crossing_streams_follow_the_window():
    # six late slotframes then on-time ones, ten verdicts per slotframe
    b = Bdpc()
    fired = []
    for frame in range(20):
        for _ in range(10):
            b.record(8, frame < 6)
        fired.append(b.evaluate_child(8, frame * 101))
    # the last late verdicts leave the 100-verdict window after frame 14
    assert fired == [ADD] * 15 + [DELETE] * 5
