"""Reference values for the statistics and task-metric tests.

Run: python3 tests/oracles/stats_oracle.py
Values printed here are frozen into tests/unit/test_agreestats.cpp,
tests/unit/test_taskmetrics.cpp and tests/acceptance/acceptance.cpp.
"""

import json

import numpy as np
from scipy import stats
from sklearn.metrics import cohen_kappa_score, roc_auc_score


def kappa_matrix(a, b, k):
    # Direct construction of observed, expected and weight matrices.
    obs = np.zeros((k, k))
    for x, y in zip(a, b):
        obs[x - 1, y - 1] += 1
    obs /= len(a)
    exp = np.outer(obs.sum(axis=1), obs.sum(axis=0))
    w = np.array([[(i - j) ** 2 / (k - 1) ** 2 for j in range(k)] for i in range(k)])
    return 1 - (w * obs).sum() / (w * exp).sum()


def main():
    out = {}

    a, b = [1, 3, 5, 2, 4], [2, 3, 5, 1, 4]
    out["kappa_example"] = kappa_matrix(a, b, 5)
    out["kappa_example_sklearn"] = cohen_kappa_score(a, b, weights="quadratic", labels=[1, 2, 3, 4, 5])
    out["kappa_binary"] = cohen_kappa_score([1, 2, 2, 1, 2, 2], [1, 2, 1, 1, 2, 2], weights="quadratic")

    r = stats.pearsonr([1, 2, 3, 4], [2, 1, 4, 3])
    out["pearson_example"] = {"rho": r.statistic, "p": r.pvalue}
    r = stats.pearsonr([0.1, 0.4, 0.35, 0.8, 0.62, 0.5], [1, 2, 2, 5, 4, 3])
    out["pearson_six"] = {"rho": r.statistic, "p": r.pvalue}

    w = stats.ttest_ind([1, 2, 3], [4, 5, 6], equal_var=False)
    out["welch_example"] = {"t": w.statistic, "p": w.pvalue}
    w = stats.ttest_ind([2.5, 3.1, 4.0, 3.3], [1.0, 1.9, 2.2, 1.4, 2.8, 0.7], equal_var=False)
    out["welch_uneven"] = {"t": w.statistic, "p": w.pvalue, "df": welch_df([2.5, 3.1, 4.0, 3.3], [1.0, 1.9, 2.2, 1.4, 2.8, 0.7])}

    out["t_cdf"] = {
        "1.5_df3": stats.t.cdf(1.5, 3),
        "-2.2_df7": stats.t.cdf(-2.2, 7),
        "0.3_df1": stats.t.cdf(0.3, 1),
        "4.0_df30": stats.t.cdf(4.0, 30),
    }
    out["fisher"] = stats.combine_pvalues([0.01, 0.2, 0.5], method="fisher").pvalue

    # Faithful/unfaithful split used by the alignment acceptance check.
    faithful = [0.61, 0.72, 0.65, 0.80, 0.70, 0.77]
    unfaithful = [0.30, 0.42, 0.35, 0.28]
    w = stats.ttest_ind(faithful, unfaithful, equal_var=False)
    out["split_bleu"] = {"t": w.statistic, "p": w.pvalue}

    # Task metrics.
    y = [1, 0, 1, 1, 0, 0, 1, 0]
    s = [0.9, 0.4, 0.4, 0.7, 0.2, 0.6, 0.8, 0.4]
    out["binary_auc"] = roc_auc_score(y, s)
    probs = np.array([
        [0.70, 0.10, 0.10, 0.05, 0.05],
        [0.10, 0.60, 0.10, 0.10, 0.10],
        [0.05, 0.15, 0.50, 0.20, 0.10],
        [0.05, 0.05, 0.20, 0.40, 0.30],
        [0.10, 0.10, 0.10, 0.20, 0.50],
        [0.30, 0.30, 0.20, 0.10, 0.10],
        [0.10, 0.20, 0.40, 0.20, 0.10],
        [0.05, 0.05, 0.10, 0.30, 0.50],
        [0.20, 0.20, 0.20, 0.20, 0.20],
        [0.40, 0.10, 0.10, 0.20, 0.20],
    ])
    labels = [1, 2, 3, 4, 5, 2, 3, 5, 4, 1]
    out["macro_ovr_auc"] = roc_auc_score(labels, probs, multi_class="ovr", average="macro")

    print(json.dumps(out, indent=2, default=float))


def welch_df(x, y):
    vx, vy = np.var(x, ddof=1) / len(x), np.var(y, ddof=1) / len(y)
    return (vx + vy) ** 2 / (vx**2 / (len(x) - 1) + vy**2 / (len(y) - 1))


if __name__ == "__main__":
    main()
