"""Reverse-mode gradients on plain numpy arrays, checked against finite differences."""

import numpy as np

from msstnet import numerics as nx

rng = np.random.default_rng(0)
w = nx.parameter(rng.normal(size=(3, 5)), name="w")
b = nx.parameter(np.zeros(3), name="b")
x = nx.tensor(rng.normal(size=(4, 5)))

# a tiny classifier: linear layer, then cross-entropy against fixed labels
labels = np.array([0, 2, 1, 2])
loss = nx.cross_entropy(nx.linear(x, w, b), labels)
gw, gb = nx.grad(loss, [w, b])
print("loss", loss.item())


def f():
    with nx.no_grad():
        return nx.cross_entropy(nx.linear(x, w, b), labels).item()


h = 1e-5
numeric = np.zeros_like(w.data)
for i in np.ndindex(w.data.shape):
    old = w.data[i]
    w.data[i] = old + h
    up = f()
    w.data[i] = old - h
    down = f()
    w.data[i] = old
    numeric[i] = (up - down) / (2 * h)

print("max |analytic - numeric| for w:", np.abs(gw - numeric).max())

# MAC counting is built into the matmul-style ops; one MAC is two FLOPs
with nx.no_grad(), nx.count_macs() as c:
    nx.linear(x, w, b)
print("linear FLOPs:", c.flops, "=", 2 * 4 * 5 * 3)
