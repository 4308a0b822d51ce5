import numpy as np
import pytest

from hybridmec import nn
from hybridmec.errors import ShapeError


def rel_err(a, b):
    return abs(a - b) / max(1e-8, abs(a) + abs(b))


def fd_param_grads(net, x, weight, h=1e-6):
    """Central-difference gradient of sum(weight * net(x)) wrt every parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            keep = p[idx]
            p[idx] = keep + h
            up = float(np.sum(weight * net.forward(x)))
            p[idx] = keep - h
            down = float(np.sum(weight * net.forward(x)))
            p[idx] = keep
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def fd_input_grad(net, x, weight, h=1e-6):
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        keep = x[idx]
        x[idx] = keep + h
        up = float(np.sum(weight * net.forward(x)))
        x[idx] = keep - h
        down = float(np.sum(weight * net.forward(x)))
        x[idx] = keep
        g[idx] = (up - down) / (2 * h)
    return g


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def test_forward_known_tiny_net():
    net = nn.MLP([2, 2, 1], rng=np.random.default_rng(0))
    net.weights[0][...] = [[1.0, -1.0], [0.5, 2.0]]
    net.biases[0][...] = [0.0, -1.0]
    net.weights[1][...] = [[1.0], [1.0]]
    net.biases[1][...] = [0.25]
    # hidden pre-act: [1*1+2*0.5, 1*-1+2*2-1] = [2, 2] -> relu [2, 2]
    assert net.forward(np.array([1.0, 2.0])) == pytest.approx([4.25])


def test_forward_batch_matches_rows():
    rng = np.random.default_rng(1)
    net = nn.MLP([4, 8, 3], rng=rng)
    X = rng.normal(size=(5, 4))
    batch = net.forward(X)
    for i in range(5):
        np.testing.assert_allclose(net.forward(X[i]), batch[i], rtol=1e-12)


def test_forward_rejects_wrong_width():
    net = nn.MLP([3, 4, 2], rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        net.forward(np.zeros(5))


def test_output_layer_is_linear():
    net = nn.MLP([2, 3, 1], rng=np.random.default_rng(2))
    x = np.array([0.3, -0.7])
    y1 = net.forward(x)[0]
    net.biases[-1][0] += 5.0
    assert net.forward(x)[0] == pytest.approx(y1 + 5.0)


# ---------------------------------------------------------------------------
# backward against finite differences
# ---------------------------------------------------------------------------

def test_gradients_match_finite_differences_many_nets():
    rng = np.random.default_rng(42)
    worst = 0.0
    checked = 0
    for trial in range(100):
        depth = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 6)) for _ in range(depth + 2)]
        act = "relu" if trial % 2 == 0 else "tanh"
        net = nn.MLP(sizes, activation=act, rng=rng)
        for b in net.biases:
            b[...] = 0.1 * rng.normal(size=b.shape)
        x = rng.normal(size=(3, sizes[0]))
        weight = rng.normal(size=(3, sizes[-1]))
        y, cache = net.forward_cached(x)
        if act == "relu":
            # finite differences are meaningless on a relu kink; stay clear
            margin = min(np.abs(z).min() for z in cache[1][:-1])
            if margin < 1e-4:
                continue
        checked += 1
        grads, gin = net.backward(cache, weight)
        fd = fd_param_grads(net, x, weight)
        for a, b in zip(grads, fd):
            for u, v in zip(a.ravel(), b.ravel()):
                worst = max(worst, rel_err(u, v))
        fdi = fd_input_grad(net, x.copy(), weight)
        for u, v in zip(gin.ravel(), fdi.ravel()):
            worst = max(worst, rel_err(u, v))
    assert checked >= 80
    assert worst < 1e-4, f"worst relative error {worst:.2e}"


def test_backward_sums_over_batch():
    rng = np.random.default_rng(7)
    net = nn.MLP([3, 5, 2], rng=rng)
    X = rng.normal(size=(4, 3))
    G = rng.normal(size=(4, 2))
    _, cache = net.forward_cached(X)
    batch_grads, _ = net.backward(cache, G)
    acc = [np.zeros_like(p) for p in net.parameters()]
    for i in range(4):
        _, c = net.forward_cached(X[i])
        g, _ = net.backward(c, G[i])
        for a, b in zip(acc, g):
            a += b
    for a, b in zip(batch_grads, acc):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_backward_rejects_mismatched_grad():
    net = nn.MLP([2, 3, 2], rng=np.random.default_rng(0))
    _, cache = net.forward_cached(np.zeros((4, 2)))
    with pytest.raises(ShapeError):
        net.backward(cache, np.zeros((4, 3)))


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

def test_adam_first_step_hand_computed():
    net = nn.MLP([1, 1], rng=np.random.default_rng(0))
    net.weights[0][...] = [[2.0]]
    net.biases[0][...] = [0.5]
    opt = nn.Adam(net, lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    g_w = np.array([[4.0]])
    g_b = np.array([-3.0])
    opt.step([g_w, g_b])
    # bias-corrected first step: m_hat = g, v_hat = g^2
    assert net.weights[0][0, 0] == pytest.approx(2.0 - 0.1 * 4.0 / (4.0 + 1e-8))
    assert net.biases[0][0] == pytest.approx(0.5 + 0.1 * 3.0 / (3.0 + 1e-8))


def test_adam_two_steps_match_reference_formula():
    rng = np.random.default_rng(11)
    net = nn.MLP([2, 2], rng=rng)
    start = [p.copy() for p in net.parameters()]
    gs = [[rng.normal(size=p.shape) for p in net.parameters()] for _ in range(2)]
    opt = nn.Adam(net, lr=0.01)
    for g in gs:
        opt.step(g)
    # reference implementation, textbook form
    for p0, p, g_seq in zip(start, net.parameters(),
                            zip(gs[0], gs[1])):
        m = np.zeros_like(p0)
        v = np.zeros_like(p0)
        ref = p0.copy()
        for t, g in enumerate(g_seq, start=1):
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_adam_descends_on_frozen_quadratic():
    rng = np.random.default_rng(3)
    net = nn.MLP([4, 16, 1], rng=rng)
    X = rng.normal(size=(32, 4))
    y = (X ** 2).sum(axis=1, keepdims=True)
    opt = nn.Adam(net, lr=1e-2)

    def loss():
        return float(np.mean((net.forward(X) - y) ** 2))

    before = loss()
    for _ in range(200):
        pred, cache = net.forward_cached(X)
        grad = 2.0 * (pred - y) / len(X)
        grads, _ = net.backward(cache, grad)
        opt.step(grads)
    assert loss() < 0.2 * before


def test_adam_rejects_bad_grad_list():
    net = nn.MLP([2, 2], rng=np.random.default_rng(0))
    opt = nn.Adam(net, lr=0.1)
    with pytest.raises(ShapeError):
        opt.step([np.zeros((2, 2))])


# ---------------------------------------------------------------------------
# init / soft_update / copy
# ---------------------------------------------------------------------------

def test_he_init_variance():
    rng = np.random.default_rng(99)
    W = nn.he_init(512, 512, rng)
    assert abs(W.var() - 2.0 / 512) < 0.2 * (2.0 / 512)
    assert abs(W.mean()) < 0.01


def test_xavier_init_bounds():
    rng = np.random.default_rng(5)
    W = nn.xavier_init(30, 20, rng)
    limit = np.sqrt(6.0 / 50)
    assert np.all(np.abs(W) <= limit)


def test_soft_update_tau_one_copies():
    rng = np.random.default_rng(1)
    a = nn.MLP([3, 4, 2], rng=rng)
    b = nn.MLP([3, 4, 2], rng=rng)
    nn.soft_update(a, b, tau=1.0)
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)


def test_soft_update_halfway():
    rng = np.random.default_rng(2)
    a = nn.MLP([2, 2], rng=rng)
    b = nn.MLP([2, 2], rng=rng)
    expect = [(p + q) / 2 for p, q in zip(a.parameters(), b.parameters())]
    nn.soft_update(a, b, tau=0.5)
    for p, e in zip(a.parameters(), expect):
        np.testing.assert_allclose(p, e, rtol=1e-15)


def test_copy_is_independent():
    net = nn.MLP([2, 3, 1], rng=np.random.default_rng(0))
    dup = net.copy()
    dup.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != dup.weights[0][0, 0]
    x = np.array([0.1, 0.2])
    assert net.forward(x)[0] != pytest.approx(dup.forward(x)[0])


# ---------------------------------------------------------------------------
# save / load
# ---------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    net = nn.MLP([5, 8, 8, 3], activation="tanh", rng=np.random.default_rng(21))
    path = tmp_path / "net.mlp"
    nn.save_mlp(net, path)
    back = nn.load_mlp(path)
    assert back.layer_sizes == net.layer_sizes
    assert back.activation == "tanh"
    for p, q in zip(net.parameters(), back.parameters()):
        np.testing.assert_array_equal(p, q)
    x = np.random.default_rng(0).normal(size=(4, 5))
    np.testing.assert_array_equal(net.forward(x), back.forward(x))


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.mlp"
    path.write_bytes(b"NOPE!\n" + b"\x00" * 40)
    with pytest.raises(ShapeError):
        nn.load_mlp(path)


def test_load_rejects_truncated_payload(tmp_path):
    net = nn.MLP([3, 3], rng=np.random.default_rng(0))
    path = tmp_path / "net.mlp"
    nn.save_mlp(net, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(ShapeError):
        nn.load_mlp(path)
