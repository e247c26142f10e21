#!/usr/bin/env python3
"""Writes high-precision reference values used by the integration tests.

Every float handed to Rust is written with repr() so it parses to the same
double; all arithmetic on them is done in 60-digit mpmath.
"""
import itertools
import json
import math
import pathlib

import mpmath as mp

mp.mp.dps = 60
OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/data"


def sigmoid_table():
    rows = []
    for i in range(1000):
        x = -30.0 + 60.0 * i / 999.0
        m = mp.mpf(x)
        s = 1 / (1 + mp.exp(-m))
        rows.append([repr(x), mp.nstr(s, 25), mp.nstr(mp.log(s), 25)])
    return rows


def tiny_model(v, h):
    u = [[0.8 * math.sin(1.3 * w + 0.7 * k + 0.4) for k in range(h)] for w in range(v)]
    o = [[0.9 * math.cos(0.5 * w - 1.1 * k + 0.2) for k in range(h)] for w in range(v)]
    return u, o


def f_value(u, o, target, context, negatives, tokens, scale, length):
    h = len(u[0])
    z = [mp.mpf(0)] * h
    for c in context:
        z = [z[k] + mp.mpf(u[c][k]) for k in range(h)]
    wt = mp.mpf(scale) / length
    for t in tokens:
        z = [z[k] + wt * mp.mpf(u[t][k]) for k in range(h)]
    total = mp.mpf(0)
    for w, sign in [(target, 1)] + [(n, -1) for n in negatives]:
        s = sum(mp.mpf(o[w][k]) * z[k] for k in range(h))
        total += mp.log(1 / (1 + mp.exp(-sign * s)))
    return total


def curvature(u, o, target, context, negatives, tokens, j):
    h = len(u[0])
    length = len(tokens)
    z = [mp.mpf(0)] * h
    for c in context:
        z = [z[k] + mp.mpf(u[c][k]) for k in range(h)]
    for t in tokens:
        z = [z[k] + mp.mpf(u[t][k]) / length for k in range(h)]
    total = mp.mpf(0)
    for w in [target] + negatives:
        s = sum(mp.mpf(o[w][k]) * z[k] for k in range(h))
        sig = 1 / (1 + mp.exp(-s))
        a = sum(mp.mpf(o[w][k]) * mp.mpf(u[j][k]) for k in range(h)) / length
        total += sig * (1 - sig) * a * a
    return total


def model_oracle():
    v, h = 7, 4
    u, o = tiny_model(v, h)
    tokens = [1, 2, 3, 1, 6, 5]
    target, context, negatives = 2, [1, 3], [4, 5, 0]
    q = mp.mpf(3) / 10
    scale = 1 / (1 - q)
    exact = f_value(u, o, target, context, negatives, tokens, 1, len(tokens))
    expected = mp.mpf(0)
    for mask in itertools.product([0, 1], repeat=len(tokens)):
        kept = [t for t, keep in zip(tokens, mask) if keep]
        p = (1 - q) ** len(kept) * q ** (len(tokens) - len(kept))
        expected += p * f_value(u, o, target, context, negatives, kept, scale, len(tokens))
    counts = {w: tokens.count(w) for w in set(tokens)}
    reg = {str(j): mp.nstr(counts.get(j, 0) * curvature(u, o, target, context, negatives, tokens, j), 25)
           for j in range(v)}
    return {
        "vocab_size": v,
        "dim": h,
        "input": [repr(x) for row in u for x in row],
        "output": [repr(x) for row in o for x in row],
        "tokens": tokens,
        "target": target,
        "context": context,
        "negatives": negatives,
        "q": "0.3",
        "exact_f": mp.nstr(exact, 25),
        "exhaustive_f": mp.nstr(expected, 25),
        "regularizer": reg,
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "sigmoid.tsv", "w") as fh:
        for row in sigmoid_table():
            fh.write("\t".join(row) + "\n")
    with open(OUT / "tiny_model.json", "w") as fh:
        json.dump(model_oracle(), fh, indent=1)


if __name__ == "__main__":
    main()
