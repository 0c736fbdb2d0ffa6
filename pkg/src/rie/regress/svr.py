"""Epsilon-SVR with an RBF kernel, solved by SMO.

The dual is handled in the doubled form: 2n variables lam = [alpha;
alpha*], labels yt = [+1..., -1...], linear term p = [eps - y; eps + y],
box [0, C], constraint yt'lam = 0.  Pair selection is maximal-violating
(the m - M gap is exactly the max KKT violation, so the stopping rule is
the spec's tolerance).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceFailure
from .model import ClassicalModel, standardize_fit

KKT_TOL = 1e-3
MAX_PASSES = 100_000


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A**2).sum(axis=1)[:, None] + (B**2).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def fit_svr(
    X: np.ndarray,
    y: np.ndarray,
    C: float = 10.0,
    epsilon: float = 0.1,
    gamma: str | float = "scale",
    dimension: str = "",
    names=None,
    tol: float = KKT_TOL,
) -> ClassicalModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(X.shape[1]))
    n = y.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    mu, sd = standardize_fit(X)
    Xs = (X - mu) / sd
    if gamma == "scale":
        var = float(Xs.var())
        gamma_val = 1.0 / (Xs.shape[1] * var) if var > 0 else 1.0 / Xs.shape[1]
    else:
        gamma_val = float(gamma)

    K = rbf_kernel(Xs, Xs, gamma_val)
    K2 = np.tile(K, (2, 2))
    yt = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])

    lam = np.zeros(2 * n)
    g = p.copy()  # gradient of the dual objective at lam = 0

    m_val = M_val = 0.0
    for it in range(MAX_PASSES + 1):
        neg_yg = -yt * g
        in_up = ((lam < C - 1e-12) & (yt > 0)) | ((lam > 1e-12) & (yt < 0))
        in_low = ((lam < C - 1e-12) & (yt < 0)) | ((lam > 1e-12) & (yt > 0))
        up_vals = np.where(in_up, neg_yg, -np.inf)
        low_vals = np.where(in_low, neg_yg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        m_val = up_vals[i]
        M_val = low_vals[j]
        if m_val - M_val < tol:
            break
        if it == MAX_PASSES:
            raise ConvergenceFailure(f"SMO did not converge in {MAX_PASSES} passes")

        quad = K2[i, i] + K2[j, j] - 2.0 * K2[i, j]
        quad = max(quad, 1e-12)
        step = (m_val - M_val) / quad
        # box caps: lam_i moves by +yt_i*step, lam_j by -yt_j*step
        cap_i = (C - lam[i]) if yt[i] > 0 else lam[i]
        cap_j = lam[j] if yt[j] > 0 else (C - lam[j])
        step = min(step, cap_i, cap_j)
        lam[i] += yt[i] * step
        lam[j] -= yt[j] * step
        # d(lam) = yt_i*step*e_i - yt_j*step*e_j; Q[:,t] = yt*yt_t*K2[:,t]
        g += yt * step * (K2[:, i] - K2[:, j])

    bias = 0.5 * (m_val + M_val) if np.isfinite(m_val) and np.isfinite(M_val) else 0.0
    beta = lam[:n] - lam[n:]
    keep = np.abs(beta) > 1e-12
    return ClassicalModel(
        "svr",
        dimension,
        names,
        mu,
        sd,
        {
            "beta": beta[keep],
            "support": Xs[keep],
            "bias": float(bias),
            "gamma": gamma_val,
            "C": float(C),
            "epsilon": float(epsilon),
            "kkt_gap": float(m_val - M_val),
            "alpha": lam[:n],
            "alpha_star": lam[n:],
        },
    )


def svr_predict(params: dict, Xs: np.ndarray) -> np.ndarray:
    support = params["support"]
    if support.shape[0] == 0:
        return np.full(Xs.shape[0], float(params["bias"]))
    k = rbf_kernel(Xs, support, float(params["gamma"]))
    return k @ params["beta"] + float(params["bias"])
