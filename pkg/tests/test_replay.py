import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridmec.errors import InsufficientData
from hybridmec.replay import PrioritizedReplay, ReplayBuffer, SumTree


# ---------------------------------------------------------------------------
# uniform buffer
# ---------------------------------------------------------------------------

def test_ring_overwrites_oldest():
    buf = ReplayBuffer(3)
    for i in range(5):
        buf.push(i)
    assert len(buf) == 3
    assert sorted(buf._items) == [2, 3, 4]


def test_sample_needs_enough_items():
    buf = ReplayBuffer(10)
    buf.push("a")
    with pytest.raises(InsufficientData):
        buf.sample(2, np.random.default_rng(0))


def test_uniform_sample_is_uniform():
    buf = ReplayBuffer(4)
    for i in range(4):
        buf.push(i)
    rng = np.random.default_rng(8)
    counts = np.zeros(4)
    for _ in range(20_000):
        for item in buf.sample(2, rng):
            counts[item] += 1
    freqs = counts / counts.sum()
    assert np.all(np.abs(freqs - 0.25) < 0.01)


# ---------------------------------------------------------------------------
# sum tree
# ---------------------------------------------------------------------------

def test_sum_tree_total_tracks_sets():
    t = SumTree(5)
    t.set(0, 2.0)
    t.set(4, 3.0)
    assert t.total == pytest.approx(5.0)
    t.set(0, 0.5)
    assert t.total == pytest.approx(3.5)


def test_sum_tree_find_prefix_semantics():
    t = SumTree(4)
    for i, v in enumerate([1.0, 2.0, 0.0, 3.0]):
        t.set(i, v)
    assert t.find(0.0) == 0
    assert t.find(0.999) == 0
    assert t.find(1.0) == 1
    assert t.find(2.999) == 1
    assert t.find(3.0) == 3  # zero-mass leaf 2 is skipped
    assert t.find(5.999) == 3


def test_sum_tree_rejects_negative():
    t = SumTree(2)
    with pytest.raises(ValueError):
        t.set(0, -1.0)


def test_sum_tree_root_matches_brute_force_after_fuzz():
    rng = np.random.default_rng(13)
    t = SumTree(37)
    shadow = np.zeros(37)
    for _ in range(1000):
        i = int(rng.integers(0, 37))
        v = float(rng.uniform(0, 10))
        t.set(i, v)
        shadow[i] = v
    assert abs(t.total - shadow.sum()) < 1e-9
    for i in range(37):
        assert t.get(i) == pytest.approx(shadow[i])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9),
                          st.floats(0, 100, allow_nan=False)),
                min_size=1, max_size=50),
       st.floats(0, 1, exclude_max=True))
def test_sum_tree_internal_consistency(ops, frac):
    t = SumTree(10)
    for i, v in ops:
        t.set(i, v)
    nodes = t._nodes
    for node in range(1, t._base):
        assert nodes[node] == pytest.approx(nodes[2 * node] + nodes[2 * node + 1])
    if t.total > 0:
        mass = frac * t.total
        leaf = t.find(mass)
        prefix = sum(t.get(i) for i in range(leaf))
        assert prefix <= mass + 1e-9
        assert mass < prefix + t.get(leaf) + 1e-9


# ---------------------------------------------------------------------------
# prioritized replay
# ---------------------------------------------------------------------------

def test_first_push_gets_unit_priority():
    per = PrioritizedReplay(8)
    per.push("x")
    assert per._tree.total == pytest.approx(1.0)


def test_new_items_enter_at_max_priority():
    per = PrioritizedReplay(8, alpha=1.0, eps=0.0)
    per.push("a")
    per.update_priorities([0], [5.0])
    per.push("b")
    assert per._tree.get(1) == pytest.approx(5.0)


def test_zero_error_keeps_floor_priority():
    per = PrioritizedReplay(4, alpha=0.5, eps=1e-3)
    per.push("a")
    per.update_priorities([0], [0.0])
    assert per._tree.get(0) == pytest.approx(1e-3 ** 0.5)
    items, idx, w = per.sample(1, np.random.default_rng(0))
    assert items == ["a"]


def test_sampling_proportional_to_priority():
    per = PrioritizedReplay(2, alpha=1.0, eps=0.0)
    per.push("hot")
    per.push("cold")
    per.update_priorities([0, 1], [3.0, 1.0])
    rng = np.random.default_rng(77)
    n = 100_000
    hot = 0
    for _ in range(n):
        items, _, _ = per.sample(1, rng)
        hot += items[0] == "hot"
    sigma = np.sqrt(0.75 * 0.25 / n)
    assert abs(hot / n - 0.75) < 3 * sigma


def test_alpha_zero_means_uniform():
    per = PrioritizedReplay(4, alpha=0.0)
    for i in range(4):
        per.push(i)
    per.update_priorities([0, 1, 2, 3], [100.0, 0.0, 5.0, 1e6])
    rng = np.random.default_rng(5)
    counts = np.zeros(4)
    for _ in range(20_000):
        items, _, _ = per.sample(1, rng)
        counts[items[0]] += 1
    freqs = counts / counts.sum()
    assert np.all(np.abs(freqs - 0.25) < 0.015)


def test_beta_zero_gives_unit_weights():
    per = PrioritizedReplay(8, beta=0.0)
    for i in range(8):
        per.push(i)
    per.update_priorities(range(8), np.linspace(0, 7, 8))
    _, _, w = per.sample(4, np.random.default_rng(1))
    np.testing.assert_allclose(w, 1.0)


def test_weights_match_formula():
    per = PrioritizedReplay(4, alpha=1.0, beta=0.5, eps=0.0)
    for i in range(4):
        per.push(i)
    per.update_priorities([0, 1, 2, 3], [4.0, 3.0, 2.0, 1.0])
    rng = np.random.default_rng(3)
    items, idx, w = per.sample(4, rng)
    total = 10.0
    probs = np.array([4.0, 3.0, 2.0, 1.0])[idx] / total
    raw = (4 * probs) ** -0.5
    np.testing.assert_allclose(w, raw / raw.max(), rtol=1e-12)


def test_stratified_covers_equal_masses():
    per = PrioritizedReplay(8)
    for i in range(8):
        per.push(i)
    items, idx, _ = per.sample(8, np.random.default_rng(0))
    # equal masses and one draw per segment: every item exactly once
    assert sorted(idx.tolist()) == list(range(8))


def test_per_overwrite_cycles_storage():
    per = PrioritizedReplay(2)
    per.push("a")
    per.push("b")
    per.push("c")
    assert len(per) == 2
    assert per._items == ["c", "b"]


def test_per_sample_needs_enough():
    per = PrioritizedReplay(8)
    per.push(1)
    with pytest.raises(InsufficientData):
        per.sample(2, np.random.default_rng(0))
