"""Check the hand-rolled network against finite differences.

Backpropagation through the MLP is exact; central differences should
agree to several digits. The second half fits a small regression with
Adam to show the optimizer actually descends.
"""

import numpy as np

from hybridmec import nn

rng = np.random.default_rng(0)
net = nn.MLP([3, 8, 8, 2], activation="tanh", rng=rng)
x = rng.normal(size=(5, 3))
weight = rng.normal(size=(5, 2))

y, cache = net.forward_cached(x)
grads, _ = net.backward(cache, weight)

worst = 0.0
h = 1e-6
for p, g in zip(net.parameters(), grads):
    it = np.nditer(p, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        keep = p[idx]
        p[idx] = keep + h
        up = float(np.sum(weight * net.forward(x)))
        p[idx] = keep - h
        down = float(np.sum(weight * net.forward(x)))
        p[idx] = keep
        fd = (up - down) / (2 * h)
        rel = abs(g[idx] - fd) / max(1e-8, abs(g[idx]) + abs(fd))
        worst = max(worst, rel)
print(f"worst relative error over {sum(p.size for p in net.parameters())} "
      f"parameters: {worst:.2e}")

# Fit y = sin(x) on [-2, 2] with a fresh net and Adam.
train_x = np.linspace(-2, 2, 128)[:, None]
train_y = np.sin(train_x)
model = nn.MLP([1, 32, 32, 1], activation="tanh", rng=rng)
opt = nn.Adam(model, lr=1e-2)

for step in range(2001):
    pred, cache = model.forward_cached(train_x)
    err = pred - train_y
    grads, _ = model.backward(cache, 2.0 * err / len(train_x))
    opt.step(grads)
    if step % 400 == 0:
        print(f"step {step:4d}  mse {float((err ** 2).mean()):.6f}")

probe = np.array([[-1.5], [0.0], [0.7]])
for xi, yi in zip(probe[:, 0], model.forward(probe)[:, 0]):
    print(f"sin({xi:+.1f}) ~ {yi:+.4f} (true {np.sin(xi):+.4f})")
