"""Central finite-difference check of the batch loss gradients."""

import numpy as np

from causallp.embedding.scoring import ModelKind
from causallp.embedding.training import loss_and_grad

STEP = 1e-5


def random_instance(kind, rng, n_ent=6, n_rel=3, batch=3, eta=3):
    kind = ModelKind.parse(kind)
    d = int(rng.integers(1, 9))
    w = kind.width(d)
    E = rng.normal(size=(n_ent, w))
    R = rng.normal(size=(n_rel, w))
    h = rng.integers(n_ent, size=batch)
    t = rng.integers(n_ent, size=batch)
    r = rng.integers(n_rel, size=batch)
    wt = rng.random(batch)
    nh = rng.integers(n_ent, size=(batch, eta))
    nt = rng.integers(n_ent, size=(batch, eta))
    return dict(E=E, R=R, h=h, r=r, t=t, w=wt, nh=nh, nt=nt, beta=float(rng.random()), l2=float(rng.random()) * 1e-2)


def relative_error(kind, mode, inst) -> float:
    """Largest |analytic - numeric| over all parameters, relative to the
    largest numeric gradient magnitude."""
    E, R = inst["E"], inst["R"]
    args = (inst["h"], inst["r"], inst["t"], inst["w"], inst["nh"], inst["nt"], mode, inst["beta"], inst["l2"])

    def f(E_, R_):
        return loss_and_grad(kind, E_, R_, *args)[0]

    _, dE, dR = loss_and_grad(kind, E, R, *args)
    worst, scale = 0.0, 1e-8
    for which, M, G in ((0, E, dE), (1, R, dR)):
        for idx in np.ndindex(M.shape):
            plus, minus = M.copy(), M.copy()
            plus[idx] += STEP
            minus[idx] -= STEP
            if which == 0:
                num = (f(plus, R) - f(minus, R)) / (2 * STEP)
            else:
                num = (f(E, plus) - f(E, minus)) / (2 * STEP)
            worst = max(worst, abs(num - G[idx]))
            scale = max(scale, abs(num))
    return worst / scale
