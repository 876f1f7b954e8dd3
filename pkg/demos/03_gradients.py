# %% [markdown]
# # Checking gradients
#
# The model runs on a small reverse-mode autodiff engine.  Each analytic
# gradient is compared against central differences, first on a toy
# function and then on every parameter of a two-layer model.

# %%
import numpy as np

import shgnn.autodiff as ad
from shgnn.cli import gradcheck_report

x = ad.Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
y = ad.Tensor(np.array([1.0, 0.5, -0.5]), requires_grad=True)
f = lambda x, y: ad.sum(ad.tanh(x) * ad.softmax_vec(y)) + ad.cosine_sim(x, y)
print(ad.grad_check(f, [x, y]).line())

# %% [markdown]
# Gradients of order 1e-6 are swamped by roundoff in the difference
# quotient, so the full-model check uses an absolute floor of 1e-3 in the
# denominator of the relative error.

# %%
report = gradcheck_report(seed=0)
print(report.line())
for err, name, idx, analytic, numeric in report.worst[:3]:
    print(f"{name}{list(idx)}: analytic={analytic:.6g} numeric={numeric:.6g} rel={err:.2g}")
