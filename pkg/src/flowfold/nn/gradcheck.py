"""Finite-difference verification of analytic gradients (64-bit mode)."""

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric, floor=1e-6):
    a = np.abs(analytic)
    n = np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), floor)


def central_difference(f, x, h=1e-6):
    """Elementwise central differences of scalar f with respect to array x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_op(build, inputs, rng, h=1e-6):
    """Max relative error of an op's gradients.

    build(*tensors) must return a Tensor; it is reduced to a scalar through
    a fixed random projection so every output element participates.
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in inputs]
    out = build(*tensors)
    proj = rng.standard_normal(out.data.shape)

    def scalar():
        return float((build(*tensors).data * proj).sum())

    loss_seed = proj
    out.backward(loss_seed)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = central_difference(scalar, t.data, h=h)
        worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def check_network_params(net, x, loss_fn, rng, samples_per_param=4, h=1e-5):
    """Spot-check dW against central differences on sampled parameters.

    net must be built with dtype float64. loss_fn(output Tensor) -> Tensor.
    """
    x64 = np.asarray(x, dtype=np.float64)

    def scalar():
        return float(loss_fn(net.forward(x64)).data)

    net.zero_grad()
    loss = loss_fn(net.forward(x64))
    loss.backward()
    worst = 0.0
    report = {}
    for name, p in net.params.items():
        flat = p.data.reshape(-1)
        gflat = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        k = min(samples_per_param, flat.size)
        idx = rng.choice(flat.size, size=k, replace=False)
        errs = []
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = scalar()
            flat[i] = orig - h
            fm = scalar()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            errs.append(float(relative_error(gflat[i], numeric, floor=1e-5)))
        report[name] = max(errs)
        worst = max(worst, max(errs))
    return worst, report
