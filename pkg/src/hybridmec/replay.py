"""Experience replay buffers.

Two flavors: a plain uniform ring buffer, and a proportional
prioritized buffer backed by a sum tree. Both store transitions as
opaque objects; stacking them into arrays is the caller's job.
"""

from __future__ import annotations

import numpy as np

from hybridmec.errors import InsufficientData


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._items = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item) -> None:
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[self._next] = item
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng):
        if len(self._items) < batch_size:
            raise InsufficientData(
                f"buffer holds {len(self._items)} < batch {batch_size}")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


class SumTree:
    """Complete binary tree whose leaves hold nonnegative masses.

    Internal nodes cache the sum of their subtree, so prefix-mass
    lookups and updates are both O(log n).
    """

    def __init__(self, capacity: int):
        size = 1
        while size < capacity:
            size *= 2
        self.capacity = capacity
        self._base = size
        self._nodes = np.zeros(2 * size)

    @property
    def total(self) -> float:
        return float(self._nodes[1])

    def get(self, idx: int) -> float:
        return float(self._nodes[self._base + idx])

    def set(self, idx: int, value: float) -> None:
        if value < 0:
            raise ValueError("mass must be nonnegative")
        node = self._base + idx
        delta = value - self._nodes[node]
        while node >= 1:
            self._nodes[node] += delta
            node //= 2

    def find(self, mass: float) -> int:
        """Leaf index i with sum(leaves[:i]) <= mass < sum(leaves[:i+1])."""
        node = 1
        while node < self._base:
            left = 2 * node
            if mass < self._nodes[left]:
                node = left
            else:
                mass -= self._nodes[left]
                node = left + 1
        return min(node - self._base, self.capacity - 1)


class PrioritizedReplay:
    """Proportional prioritized replay with importance-sampling weights.

    New transitions enter at the current maximum priority so each gets
    replayed at least once. Priorities are (|error| + eps)**alpha and
    are written at update time, so alpha changes only affect later
    updates. Sampling is stratified: the total mass splits into equal
    segments, one draw per segment.
    """

    def __init__(self, capacity: int, alpha: float = 0.6,
                 beta: float = 0.4, eps: float = 1e-3):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.capacity = int(capacity)
        self.alpha = alpha
        self.beta = beta
        self.eps = eps
        self._tree = SumTree(self.capacity)
        self._items = []
        self._next = 0
        self._max_priority = 1.0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, item) -> None:
        idx = self._next
        if len(self._items) < self.capacity:
            self._items.append(item)
        else:
            self._items[idx] = item
        self._tree.set(idx, self._max_priority)
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size: int, rng):
        """Returns (items, indices, weights); weights are scaled to max 1."""
        n = len(self._items)
        if n < batch_size:
            raise InsufficientData(f"buffer holds {n} < batch {batch_size}")
        total = self._tree.total
        seg = total / batch_size
        indices = np.empty(batch_size, dtype=int)
        probs = np.empty(batch_size)
        for j in range(batch_size):
            mass = (j + rng.random()) * seg
            i = self._tree.find(mass)
            if i >= n:  # zero-mass padding leaves, can only happen near empty
                i = n - 1
            indices[j] = i
            probs[j] = self._tree.get(i) / total
        weights = (n * probs) ** (-self.beta)
        weights /= weights.max()
        items = [self._items[i] for i in indices]
        return items, indices, weights

    def update_priorities(self, indices, errors) -> None:
        for i, err in zip(indices, errors):
            p = (abs(float(err)) + self.eps) ** self.alpha
            self._tree.set(int(i), p)
            if p > self._max_priority:
                self._max_priority = p
