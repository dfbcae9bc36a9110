"""Independent reference implementations used as test oracles.

Everything here recomputes expected values from first principles (finite
differences, brute-force enumeration, dense-grid quadrature) and must stay
decoupled from the library code paths it checks.
"""
from __future__ import annotations

import numpy as np


def central_difference(f, arrays: list[np.ndarray], h: float = 1e-4) -> list[np.ndarray]:
    """Central finite-difference gradient of scalar f with respect to each array.

    Arrays are perturbed in place element by element; f must be a pure
    function of their current contents. 64-bit inputs expected.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def relative_gap(approx: np.ndarray, exact: np.ndarray) -> float:
    """Max elementwise gap normalized by the larger of 1 and the exact scale."""
    denom = max(1.0, float(np.max(np.abs(exact)))) if exact.size else 1.0
    return float(np.max(np.abs(approx - exact))) / denom if exact.size else 0.0


# ---------------------------------------------------------------------------
# fairness metrics by brute-force cell counting


def brute_cells(y_true, y_pred, mask):
    tp = fp = tn = fn = 0
    for t, p, m in zip(y_true, y_pred, mask):
        if not m:
            continue
        if t == 1 and p == 1:
            tp += 1
        elif t == 0 and p == 1:
            fp += 1
        elif t == 0 and p == 0:
            tn += 1
        else:
            fn += 1
    return tp, fp, tn, fn


def brute_rate(num, den):
    return None if den == 0 else num / den


def brute_metrics(y_true, y_pred, priv):
    """All threshold metrics from scratch; None marks an undefined value."""
    y_true = list(y_true)
    y_pred = list(y_pred)
    priv = list(priv)
    out = {}
    n = len(y_true)
    correct = sum(1 for t, p in zip(y_true, y_pred) if t == p)
    out["acc"] = correct / n
    tp, fp, tn, fn = brute_cells(y_true, y_pred, [True] * n)
    tpr = brute_rate(tp, tp + fn)
    tnr = brute_rate(tn, tn + fp)
    out["ba"] = None if tpr is None or tnr is None else (tpr + tnr) / 2

    def group(flag):
        ys = [y for y, s in zip(y_true, priv) if s == flag]
        ps = [p for p, s in zip(y_pred, priv) if s == flag]
        return ys, ps

    yp, pp_ = group(True)
    yu, pu = group(False)
    out["sp"] = (
        None if not yp or not yu
        else sum(pp_) / len(pp_) - sum(pu) / len(pu)
    )
    cp = brute_cells(yp, pp_, [True] * len(yp))
    cu = brute_cells(yu, pu, [True] * len(yu))

    def diff(fa, fb):
        return None if fa is None or fb is None else fa - fb

    tpr_p = brute_rate(cp[0], cp[0] + cp[3])
    tpr_u = brute_rate(cu[0], cu[0] + cu[3])
    fpr_p = brute_rate(cp[1], cp[1] + cp[2])
    fpr_u = brute_rate(cu[1], cu[1] + cu[2])
    ppv_p = brute_rate(cp[0], cp[0] + cp[1])
    ppv_u = brute_rate(cu[0], cu[0] + cu[1])
    eo = diff(tpr_p, tpr_u)
    pe = diff(fpr_p, fpr_u)
    out["eo"] = None if eo is None else abs(eo)
    out["pe"] = None if pe is None else abs(pe)
    out["eod"] = None if out["eo"] is None or out["pe"] is None else out["eo"] + out["pe"]
    ppd = diff(ppv_p, ppv_u)
    out["pp"] = None if ppd is None else abs(ppd)
    te_p = brute_rate(cp[3], cp[1])
    te_u = brute_rate(cu[3], cu[1])
    out["te"] = diff(te_p, te_u)
    return out


def dense_grid_abroca(scores, y_true, priv, grid_points: int = 2001):
    """ABROCA by trapezoid quadrature of |ROC gap| on a uniform FPR grid.

    ROC points are found per group by scanning every distinct score as a
    threshold and counting rates directly, then linearly interpolated.
    """
    scores = np.asarray(scores, dtype=float)
    y_true = np.asarray(y_true)
    priv = np.asarray(priv, dtype=bool)

    def roc(mask):
        s = scores[mask]
        y = y_true[mask]
        pos = int(y.sum())
        negs = int((1 - y).sum())
        if pos == 0 or negs == 0:
            return None
        pts = {(0.0, 0.0), (1.0, 1.0)}
        for thr in np.unique(s):
            pred = s >= thr
            pts.add((float((pred & (y == 0)).sum() / negs), float((pred & (y == 1)).sum() / pos)))
        pts = sorted(pts)
        fpr = np.array([p[0] for p in pts])
        tpr = np.array([p[1] for p in pts])
        # keep the upper corner when thresholds tie on FPR
        keep_fpr, keep_tpr = [], []
        for f, t in zip(fpr, tpr):
            if keep_fpr and keep_fpr[-1] == f:
                keep_tpr[-1] = max(keep_tpr[-1], t)
            else:
                keep_fpr.append(f)
                keep_tpr.append(t)
        return np.array(keep_fpr), np.array(keep_tpr)

    rp = roc(priv)
    ru = roc(~priv)
    if rp is None or ru is None:
        return None
    grid = np.linspace(0.0, 1.0, grid_points)
    gap = np.abs(np.interp(grid, *rp) - np.interp(grid, *ru))
    return float(np.trapezoid(gap, grid))


# ---------------------------------------------------------------------------
# nearest-neighbour and decision-tree oracles for tiny instances


def brute_knn(train_x, train_y, test_x, k=5):
    train_x = np.asarray(train_x, dtype=float)
    preds, scores = [], []
    for q in np.asarray(test_x, dtype=float):
        ranked = sorted(range(len(train_x)), key=lambda i: (float(np.sum((train_x[i] - q) ** 2)), i))
        votes = [train_y[i] for i in ranked[:k]]
        s = sum(votes) / len(votes)
        scores.append(s)
        preds.append(1 if s >= 0.5 else 0)
    return np.array(preds), np.array(scores)


def _gini(y):
    if len(y) == 0:
        return 0.0
    p = sum(y) / len(y)
    return 2 * p * (1 - p)


def brute_tree_scores(train_x, train_y, test_x, min_gain=1e-12):
    """Exhaustive CART (Gini, midpoint thresholds) evaluated on test rows."""
    train_x = np.asarray(train_x, dtype=float)
    train_y = list(train_y)

    def best_split(rows):
        parent = _gini([train_y[i] for i in rows])
        best = None
        for j in range(train_x.shape[1]):
            vals = sorted(set(float(train_x[i, j]) for i in rows))
            for a, b in zip(vals[:-1], vals[1:]):
                thr = (a + b) / 2
                left = [i for i in rows if train_x[i, j] <= thr]
                right = [i for i in rows if train_x[i, j] > thr]
                w = len(rows)
                child = (len(left) * _gini([train_y[i] for i in left])
                         + len(right) * _gini([train_y[i] for i in right])) / w
                gain = parent - child
                if gain > min_gain and (best is None or gain > best[0] + 1e-15):
                    best = (gain, j, thr, left, right)
        return best

    def grow(rows):
        ys = [train_y[i] for i in rows]
        if len(set(ys)) == 1:
            return sum(ys) / len(ys)
        split = best_split(rows)
        if split is None:
            return sum(ys) / len(ys)
        _, j, thr, left, right = split
        return (j, thr, grow(left), grow(right))

    tree = grow(list(range(len(train_y))))

    def apply(node, x):
        if not isinstance(node, tuple):
            return node
        j, thr, l, r = node
        return apply(l if x[j] <= thr else r, x)

    return np.array([apply(tree, x) for x in np.asarray(test_x, dtype=float)])
