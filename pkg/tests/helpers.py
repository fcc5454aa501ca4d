"""Shared test adapters."""
from bdrnilm import numeric as F


def network_loss_op(net, y, seed=5):
    """grad_check adapter: parameters and input batch -> train-mode MSE."""
    names = list(net.params)

    def op(*arrays):
        for name, value in zip(names, arrays):
            net.params[name] = value
        out = net.forward(arrays[-1], mode="train", seed=seed)
        loss, dout = F.mse_loss(out, y.astype(out.dtype))

        def back(g):
            grads = net.backward(dout * g)
            return [grads[n] for n in names] + [grads["input"]]

        return loss, back

    return op, [net.params[n] for n in names]


def kink_margin(net, x, seed=5):
    """Smallest nonzero |ReLU input| seen in one train-mode forward pass.

    Central differences straddle a ReLU kink when this is comparable to the
    step, and then disagree with the (correct) one-sided analytic gradient.
    """
    seen = []
    original = F.relu_forward

    def recording(z):
        nz = abs(z[z != 0])
        if nz.size:
            seen.append(float(nz.min()))
        return original(z)

    F.relu_forward = recording
    try:
        net.forward(x, mode="train", seed=seed)
    finally:
        F.relu_forward = original
    return min(seen, default=float("inf"))


def differentiable_draws(make, count, margin, start=0):
    """Yield ``count`` (seed, draw) pairs whose kink margin exceeds ``margin``.

    Returns the skipped seeds through the generator's ``skipped`` list.
    """
    skipped = []
    accepted = 0
    seed = start
    while accepted < count:
        draw = make(seed)
        if kink_margin(draw[0], draw[2]) > margin:
            accepted += 1
            yield seed, draw, skipped
        else:
            skipped.append(seed)
        seed += 1
