"""Independent reference computations used as test oracles.

Written with plain Python loops and no imports from weakmtl, so a shared bug
cannot hide in both sides of a comparison.
"""
import math


def brute_counts(pred, truth):
    tp = fp = tn = fn = 0
    for p, t in zip(pred, truth):
        p, t = bool(p), bool(t)
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif not p and t:
            fn += 1
        else:
            tn += 1
    return tp, fp, tn, fn


def brute_wacc(tp, fp, tn, fn):
    P, N = tp + fn, tn + fp
    return (tp * N / P + tn) / (2 * N)


def brute_f1(tp, fp, tn, fn):
    d = 2 * tp + fp + fn
    return 0.0 if d == 0 else 2 * tp / d


def brute_wf1(tp, fp, tn, fn):
    P, N = tp + fn, tn + fp
    I = P + N
    return P / I * brute_f1(tp, fp, tn, fn) + N / I * brute_f1(tn, fn, tp, fp)


def brute_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / math.sqrt(vx * vy)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))


def adam_reference(theta, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8, wd=0.0):
    """Adam as published, L2 decay folded into the gradient; lists of floats."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    path = []
    for t in range(1, steps + 1):
        g = [gi + wd * th for gi, th in zip(grad_fn(theta), theta)]
        m = [b1 * mi + (1 - b1) * gi for mi, gi in zip(m, g)]
        v = [b2 * vi + (1 - b2) * gi * gi for vi, gi in zip(v, g)]
        mh = [mi / (1 - b1**t) for mi in m]
        vh = [vi / (1 - b2**t) for vi in v]
        theta = [th - lr * a / (math.sqrt(b) + eps) for th, a, b in zip(theta, mh, vh)]
        path.append(list(theta))
    return path
