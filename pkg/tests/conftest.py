import numpy as np
import pytest

from ordlag import CovariatePanel, ModelSpec, OrdinalPanel, TruthConfig, generate_panel


def small_truth(n=3, J=3, K=5, T=80, L=2, factor_form="univariate", seed=11, **kw):
    """A well-identified generative configuration for quick chain tests."""
    alpha = np.zeros((2, L + 1))
    alpha[0, min(1, L)] = -0.3
    alpha[1, 0] = 0.2
    if L >= 1:
        alpha[1, 1] = 0.15
    beta0 = np.tile(np.linspace(0.6, 1.6, J), (n, 1))
    Mf = 1 if factor_form == "univariate" else 2
    beta = np.tile(np.linspace(1.0, 1.2, J), (Mf, n, 1))
    beta[:, :, 0] = 1.0
    theta = np.tile(np.arange(K - 1, dtype=float) * 0.8, (J, 1))
    var_simplex = np.full(Mf + 1, 1.0 / (Mf + 1))
    defaults = dict(
        n=n, J=J, K=K, T=T, L=L, factor_form=factor_form,
        alpha_global=alpha, psi=np.full((2, L + 1), 0.005),
        beta0=beta0, beta=beta, theta=theta, var_simplex=var_simplex,
        seed=seed,
    )
    defaults.update(kw)
    return TruthConfig(**defaults)


@pytest.fixture(scope="session")
def small_panel():
    truth = small_truth()
    panel, covs, record = generate_panel(truth)
    return truth, panel, covs, record


def quick_spec(truth, **kw):
    defaults = dict(
        factor_form=truth.factor_form, lag_depth=truth.L, K=truth.K,
        iterations=400, burn_in=150, thinning=5, seed=5,
    )
    defaults.update(kw)
    return ModelSpec(**defaults)


def tiny_panel_from_arrays(values, workload, recovery, L=1, K=None):
    """Panel/covariate pair from explicit arrays, consecutive days."""
    values = np.asarray(values)
    n, J, T = values.shape
    day_index = np.tile(np.arange(T, dtype=np.int64), (n, 1))
    Tarr = np.full(n, T, dtype=np.int64)
    panel = OrdinalPanel(
        values=values, day_index=day_index, T=Tarr,
        K=int(values.max()) if K is None else K,
        metric_names=tuple(f"m{j}" for j in range(J)),
        athlete_ids=tuple(f"A{i}" for i in range(n)),
    )
    covs = CovariatePanel(series=np.stack([workload, recovery]), L=L,
                          day_index=day_index, T=Tarr)
    return panel, covs
