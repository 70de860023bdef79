"""The reverse-mode autodiff core: tensors, gradient checking, layers,
and a tiny training loop with Adam.

Run:  python3 demos/04_autodiff.py
"""

import numpy as np

from gastkit import nn
from gastkit.nn import Adam, Dense, grad_check
from gastkit.tensor import Tensor

# Scalars backpropagate through arbitrary compositions.
x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
y = ((x * x).sum() + x.exp().sum())
y.backward()
print("d/dx (sum x^2 + sum e^x) =", np.round(x.grad, 3))

# Central finite differences validate every backward rule.
rng = np.random.default_rng(0)
img = Tensor(rng.standard_normal((1, 1, 6, 6)), requires_grad=True)
kernel = Tensor(rng.standard_normal((2, 1, 3, 3)))
w = rng.standard_normal((1, 2, 6, 6))
err = grad_check(
    lambda t: (nn.conv2d(t, kernel, padding="same") * Tensor(w)).sum(), img)
print(f"conv2d gradient check, max relative error: {err:.2e}")

# A two-layer network fit to a noisy linear target.
true_w = np.array([[2.0], [-3.0], [0.5], [1.0]])
data = rng.standard_normal((128, 4))
target = Tensor(data @ true_w + 0.01 * rng.standard_normal((128, 1)))

layer1 = Dense(4, 16, rng, "l1")
layer2 = Dense(16, 1, rng, "l2")
opt = Adam(layer1.parameters() + layer2.parameters(), lr=0.01)

inputs = Tensor(data)
for step in range(200):
    pred = layer2(layer1(inputs).relu())
    loss = ((pred - target) ** 2.0).mean()
    opt.zero_grad()
    loss.backward()
    opt.step()
    if step % 50 == 0 or step == 199:
        print(f"step {step:3d}  mse = {float(loss.data):.5f}")
