"""Straight-line reference MFDFA: plain lists and loops, nothing shared with the package."""

import math


def _solve(a, b):
    """Gauss-Jordan elimination with partial pivoting on small dense systems."""
    n = len(b)
    m = [row[:] + [b[i]] for i, row in enumerate(a)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(m[r][col]))
        m[col], m[piv] = m[piv], m[col]
        for r in range(n):
            if r != col:
                factor = m[r][col] / m[col][col]
                for c in range(col, n + 1):
                    m[r][c] -= factor * m[col][c]
    return [m[i][n] / m[i][i] for i in range(n)]


def poly_residual_ss(y, order):
    """Sum of squared residuals of a least-squares polynomial fit against k = 1..n."""
    n = len(y)
    ks = [float(k) for k in range(1, n + 1)]
    ata = [[sum(k ** (i + j) for k in ks) for j in range(order + 1)] for i in range(order + 1)]
    aty = [sum((k ** i) * v for k, v in zip(ks, y)) for i in range(order + 1)]
    coef = _solve(ata, aty)
    ss = 0.0
    for k, v in zip(ks, y):
        fit = sum(c * k ** i for i, c in enumerate(coef))
        ss += (v - fit) ** 2
    return ss


def windows(n, s):
    m = n // s
    out = []
    for i in range(m):
        out.append(list(range(i * s, (i + 1) * s)))
    for i in range(m):
        out.append(list(range(n - (i + 1) * s, n - i * s)))
    return out


def signed_variances(x, s, order, normalization="paper_1_over_s"):
    """Per-segment F^2 for the positive and negative channels (None when too short)."""
    result = {"positive": [], "negative": []}
    for idx in windows(len(x), s):
        for name in result:
            picked = [x[i] for i in idx if (x[i] > 0 if name == "positive" else x[i] < 0)]
            if len(picked) < order + 2:
                result[name].append(None)
                continue
            prof = []
            run = 0.0
            for v in picked:
                run += v
                prof.append(run)
            d = s if normalization == "paper_1_over_s" else len(picked)
            result[name].append(poly_residual_ss(prof, order) / d)
    return result


def fluctuation(variances, q):
    vals = [v for v in variances if v is not None and v > 0]
    k = len(vals)
    if q == 0:
        return math.exp(sum(math.log(v) for v in vals) / (2 * k))
    return (sum(v ** (q / 2) for v in vals) / k) ** (1 / q)
