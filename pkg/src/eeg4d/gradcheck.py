"""Finite-difference verification of reverse-mode gradients."""

import numpy as np

from .diff import backward


def grad_check(f, tensors, h=1e-3, samples_per_tensor=16, rng=None,
               nonsmooth_rtol=1e-5):
    """Compare analytic gradients of scalar `f()` against central differences.

    `f` re-evaluates the graph from the current values of `tensors` (a list
    of leaf DiffTensors) and returns a scalar DiffTensor. For each tensor a
    set of coordinates is sampled (all of them when the tensor is small) and
    perturbed by +-h. Returns the max over sampled coordinates of

        |analytic - numeric| / max(1, |analytic|, |numeric|)

    Coordinates where the function is locally nondifferentiable (a relu
    kink or pooling-argmax switch inside the step) are detected by
    disagreement between the h and h/2 central-difference estimates and
    excluded; both estimates are numeric, so this cannot mask a wrong
    analytic gradient at smooth points. Run with float64 leaves; the
    tolerances are unreachable in float32.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    for t in tensors:
        t.zero_grad()
    loss = f()
    backward(loss)
    analytic = [t.grad.copy() for t in tensors]

    def eval_at(flat, c, delta):
        orig = flat[c]
        flat[c] = orig + delta
        val = float(f().value)
        flat[c] = orig
        return val

    worst = 0.0
    for t, ag in zip(tensors, analytic):
        n = t.value.size
        if n <= samples_per_tensor:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=samples_per_tensor, replace=False)
        flat = t.value.reshape(-1)
        for c in coords:
            d1 = (eval_at(flat, c, h) - eval_at(flat, c, -h)) / (2.0 * h)
            d2 = (eval_at(flat, c, h / 2) - eval_at(flat, c, -h / 2)) / h
            if abs(d1 - d2) > nonsmooth_rtol * max(1.0, abs(d1), abs(d2)):
                continue        # kink inside the step: not a valid probe
            a = float(ag.reshape(-1)[c])
            err = abs(a - d2) / max(1.0, abs(a), abs(d2))
            if err > worst:
                worst = err
    return worst
