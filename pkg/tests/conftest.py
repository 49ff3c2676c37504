import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from reglearn.network import LayerSpec, init_network

settings.register_profile(
    "reglearn", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("reglearn")

# criterion number -> one-line verdict, filled by the acceptance module
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def random_net(widths, seed, activation="relu", bias_scale=0.5):
    """Network with the given widths, random weights and random (nonzero) biases."""
    specs = [LayerSpec(a, b, activation) for a, b in zip(widths[:-2], widths[1:-1])]
    specs.append(LayerSpec(widths[-2], widths[-1], "identity"))
    net = init_network(specs, seed)
    rng = np.random.default_rng(seed + 10_000)
    for k, b in enumerate(net.biases):
        net.biases[k] = bias_scale * rng.standard_normal(b.shape)
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def counterfactual_fd_errors(seed, norm, eta=0.1, h=1e-5):
    """Relative errors between central differences of the next-batch loss with respect to
    each lambda_i (after one subgradient weight step) and the closed-form derivative
    ``-eta * g_next_i * r_i``, over every weight of a random 2-4-1 network."""
    from reglearn.network import Batch, backward, forward, mse_loss
    from reglearn.regularizer import RegCoefficients
    from reglearn.trainer import TrainConfig, TrainerState, counterfactual_gradient, weight_step

    rng = np.random.default_rng(seed)
    net = random_net([2, 4, 1], seed)
    if norm == "l1":
        for w in net.weights:
            small = np.abs(w) <= 1e-3
            w[small] = np.where(w[small] < 0, -0.1, 0.1)
    lambdas = [rng.uniform(-2.0, 0.0, size=w.shape) for w in net.weights]
    z_t = Batch(rng.standard_normal((6, 2)), rng.standard_normal(6))
    z_next = Batch(rng.standard_normal((6, 2)), rng.standard_normal(6))
    config = TrainConfig(eta=eta, nu=1.0, norm=norm, weight_update="subgradient", mode="rln")

    def step(lams):
        state = TrainerState(net.copy(), RegCoefficients([l.copy() for l in lams], norm, -1.0))
        weight_step(state, z_t, config)
        return state

    base = step(lambdas)
    _, g_next = backward(base.net, z_next)
    errors = []
    for k, lam in enumerate(lambdas):
        for idx in np.ndindex(lam.shape):
            shifted = []
            for delta in (h, -h):
                lams = [l.copy() for l in lambdas]
                lams[k][idx] += delta
                moved = step(lams).net
                shifted.append(mse_loss(forward(moved, z_next.inputs), z_next.targets))
            fd = (shifted[0] - shifted[1]) / (2 * h)
            exact = counterfactual_gradient(g_next.weights[k][idx], base.pending_r[k][idx], eta)
            errors.append(abs(fd - exact) / max(abs(fd), abs(exact), 1e-9))
    return errors


def prox_grid_argmin(w_prime, eta, lam, step=1e-5):
    """Brute-force minimizer of (w - w')^2 / (2 eta) + exp(lam) |w| on a grid over [-2|w'|, 2|w'|]."""
    half = max(2.0 * abs(w_prime), step)
    grid = np.arange(-half, half + step / 2, step)
    grid = np.append(grid, 0.0)
    obj = (grid - w_prime) ** 2 / (2 * eta) + np.exp(lam) * np.abs(grid)
    return float(grid[np.argmin(obj)])


def prox_once(w_prime, eta, lam):
    """Package proximal update applied to a single weight with zero gradient, starting at w'."""
    from reglearn.network import Batch, Network, LayerSpec
    from reglearn.regularizer import RegCoefficients
    from reglearn.trainer import TrainConfig, TrainerState, weight_step
    from reglearn.network import GradientSet

    net = Network([LayerSpec(1, 1, "identity")], [np.array([[w_prime]])], [np.zeros(1)])
    state = TrainerState(net, RegCoefficients([np.array([[lam]])], "l1", lam))
    zero = GradientSet([np.zeros((1, 1))], [np.zeros(1)])
    cfg = TrainConfig(eta=eta, nu=0.0, norm="l1", weight_update="proximal")
    weight_step(state, Batch(np.zeros((1, 1)), np.zeros(1)), cfg, zero)
    return float(state.net.weights[0][0, 0]), float(state.pending_r[0][0, 0])


def garson_by_paths(net):
    """Garson importance by explicit enumeration of every input-to-output path."""
    import itertools

    shares = []
    for w in net.weights:
        a = np.abs(w)
        share = np.zeros_like(a)
        for u in range(a.shape[0]):
            total = sum(a[u])
            if total > 0:
                for v in range(a.shape[1]):
                    share[u, v] = a[u, v] / total
        shares.append(share)
    widths = [w.shape[1] for w in net.weights] + [1]
    imp = np.zeros(widths[0])
    for path in itertools.product(*[range(n) for n in widths]):
        prod = 1.0
        for k, share in enumerate(shares):
            prod *= share[path[k + 1], path[k]]
        imp[path[0]] += prod
    total = imp.sum()
    return imp / total if total > 0 else imp


def longdouble_loss(specs, weights, biases, x, y):
    """Batch MSE evaluated in extended precision, independent of the package's forward pass."""
    a = x.astype(np.longdouble)
    for spec, w, b in zip(specs, weights, biases):
        z = a @ w.T + b
        if spec.activation == "relu":
            z = np.maximum(z, 0)
        elif spec.activation == "leaky_relu":
            z = np.where(z > 0, z, np.longdouble(spec.slope) * z)
        a = z
    r = a[:, 0] - y.astype(np.longdouble)
    return np.mean(r * r)


def numeric_gradients(net, batch, h=1e-6):
    """Central finite differences of the batch MSE for every weight and bias."""
    ws = [w.astype(np.longdouble) for w in net.weights]
    bs = [b.astype(np.longdouble) for b in net.biases]
    out_w, out_b = [], []
    for params, out in ((ws, out_w), (bs, out_b)):
        for arr in params:
            g = np.zeros(arr.shape)
            for idx in np.ndindex(arr.shape):
                keep = arr[idx]
                arr[idx] = keep + h
                up = longdouble_loss(net.specs, ws, bs, batch.inputs, batch.targets)
                arr[idx] = keep - h
                down = longdouble_loss(net.specs, ws, bs, batch.inputs, batch.targets)
                arr[idx] = keep
                g[idx] = float((up - down) / (2 * np.longdouble(h)))
            out.append(g)
    return out_w, out_b


def min_preactivation_margin(net, x):
    a, margin = x, np.inf
    for spec, w, b in zip(net.specs, net.weights, net.biases):
        z = a @ w.T + b
        if spec.activation != "identity":
            margin = min(margin, float(np.abs(z).min()))
        a = np.maximum(z, 0) if spec.activation == "relu" else z
    return margin


def max_rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))
