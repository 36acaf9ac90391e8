"""Slow, literal reference implementations used to check the library."""

from fractions import Fraction


def iou_exact(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    return Fraction(inter, aw * ah + bw * bh - inter)


def voc_oracle(preds, truths, thresh=Fraction(1, 2)):
    """``preds``: list of (conf, frame, (x, y, w, h)); ``truths``: frame -> list of boxes.

    Returns (tp, fp, ap) for one category.
    """
    order = sorted(range(len(preds)), key=lambda k: -preds[k][0])
    used = {f: [False] * len(bs) for f, bs in truths.items()}
    n_truth = sum(len(bs) for bs in truths.values())
    flags = []
    for k in order:
        _, f, b = preds[k]
        cands = truths.get(f, [])
        best, best_j = Fraction(-1), None
        for j, g in enumerate(cands):
            o = iou_exact(b, g)
            if o > best:
                best, best_j = o, j
        if best_j is not None and best >= thresh and not used[f][best_j]:
            used[f][best_j] = True
            flags.append(1)
        else:
            flags.append(0)
    tp = sum(flags)
    if n_truth == 0 or not flags:
        return tp, len(flags) - tp, 0.0
    points = []
    c = 0
    for i, hit in enumerate(flags, start=1):
        c += hit
        points.append((Fraction(c, n_truth), Fraction(c, i)))
    levels = sorted({r for r, _ in points})
    ap, prev = Fraction(0), Fraction(0)
    for r in levels:
        if r == 0:
            continue
        p = max(pp for rr, pp in points if rr >= r)
        ap += (r - prev) * p
        prev = r
    return tp, len(flags) - tp, float(ap)


def confusion_oracle(pred, intervals, n):
    tp = tn = fp = fn = 0
    for k in range(n):
        mid = k + 0.5
        t = any(s <= mid < e for s, e in intervals)
        p = bool(pred[k])
        if p and t:
            tp += 1
        elif p:
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def ratio(a, b):
    return a / b if b else 0.0


def p_measure_oracle(pred, truth):
    same = 0
    for a, b in zip(pred, truth):
        if a == b:
            same += 1
    return 100.0 * same / len(pred)
