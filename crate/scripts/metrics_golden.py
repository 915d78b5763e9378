#!/usr/bin/env python3
"""Reference metrics for a scores CSV (image_id,true_class,<class columns>).

Accuracy and the confusion matrix are hand counts with lowest-index argmax.
Each one-vs-rest AUC is the pairwise probability that a positive outscores a
negative, ties worth one half, computed over exact fractions and checked
against sklearn. The macro AUC is the mean of the per-class AUCs.

    metrics_golden.py SCORES_CSV > golden.csv
"""
import csv
import sys
from fractions import Fraction

from sklearn.metrics import roc_auc_score


def pairwise_auc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(Fraction(1) if a > b else Fraction(1, 2) if a == b else 0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def main():
    with open(sys.argv[1], newline="") as f:
        rows = list(csv.reader(f))
    names = rows[0][2:]
    truth = [names.index(r[1]) for r in rows[1:]]
    scores = [[float(v) for v in r[2:]] for r in rows[1:]]
    c = len(names)

    pred = [max(range(c), key=lambda k: (row[k], -k)) for row in scores]
    confusion = [[0] * c for _ in range(c)]
    for t, p in zip(truth, pred):
        confusion[t][p] += 1
    accuracy = Fraction(sum(confusion[k][k] for k in range(c)), len(truth))

    aucs = []
    for k in range(c):
        col = [row[k] for row in scores]
        pos = [t == k for t in truth]
        a = pairwise_auc(col, pos)
        assert abs(float(a) - roc_auc_score(pos, col)) < 1e-12
        aucs.append(float(a))
    macro = 0.0
    for a in aucs:
        macro += a
    macro /= len(aucs)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["metric", "class", "value"])
    out.writerow(["accuracy", "", repr(float(accuracy))])
    out.writerow(["macro_auc", "", repr(macro)])
    for name, a in zip(names, aucs):
        out.writerow(["auc", name, repr(a)])
    for i, t in enumerate(names):
        for j, p in enumerate(names):
            out.writerow(["confusion", f"{t}->{p}", confusion[i][j]])


if __name__ == "__main__":
    main()
