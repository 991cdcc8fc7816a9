"""Tour of the reverse-mode engine: build a small expression, pull
gradients out of backward(), and cross-check them against central
finite differences.
"""

import numpy as np

from emodarts.tensor import Tensor, finite_diff_grad, relu


def main():
    rng = np.random.default_rng(0)

    # y = sum(relu(x @ w + b) * r), a one-layer toy
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    b = Tensor(rng.normal(size=(5,)), requires_grad=True)
    r = Tensor(rng.normal(size=(4, 5)))

    y = (relu(x @ w + b) * r).sum()
    print("loss:", float(y.data))
    y.backward()
    print("dL/dw[0]:", w.grad[0])

    # the engine refuses to run a consumed graph twice
    try:
        y.backward()
    except Exception as exc:
        print("second backward:", type(exc).__name__)

    # numeric check on w: rebuild the graph inside f, perturb w in place
    def f(_):
        return float((relu(x @ w + b) * r).sum().data)

    approx = finite_diff_grad(f, w.data)
    print("max |backward - central diff|:", np.max(np.abs(w.grad - approx)))


if __name__ == "__main__":
    main()
