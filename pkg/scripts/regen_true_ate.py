"""Regenerate src/mbalance/_true_ate.py.

Monte Carlo estimate of E[Y(1) - Y(0)] for the scenarios whose ATE is not a
plain linear mean: B (cyclic products), M1 and M2 (squared terms). M1 is
evaluated for both the published and the printed design. Draws are taken in
chunks from a fixed Philox stream so the file is reproducible.

    python scripts/regen_true_ate.py [--draws 10000000]
"""

import argparse
from pathlib import Path

import numpy as np

from mbalance.simlab import _cyclic_products, _equicorr_chol, hd_covariance_root

ORACLE_SEED = 20240521
CHUNK = 250_000


def _effect_B(rng, m):
    T = rng.random(m) < 0.5
    E = rng.standard_normal((m, 10))
    X = np.where(T[:, None], 1.0 + E @ _equicorr_chol(10).T, 1.0 + E)
    return X.sum(axis=1) + _cyclic_products(X)


def _effect_M1(rng, m):
    X = rng.standard_normal((m, 6)) @ hd_covariance_root(6).T
    return (X.sum(axis=1) + (X**2).sum(axis=1)) / 2


def _effect_M1_printed(rng, m):
    X = rng.standard_normal((m, 6)) @ hd_covariance_root(6, "printed").T
    return X.sum(axis=1) + (X**2).sum(axis=1)


def _effect_M2(rng, m):
    X = rng.standard_normal((m, 100)) @ hd_covariance_root(100).T
    return (X.sum(axis=1) + (X[:, :50] ** 2).sum(axis=1)) / 20


EFFECTS = {"B": _effect_B, "M1": _effect_M1, "M2": _effect_M2, "M1_printed": _effect_M1_printed}


def oracle(draws):
    out = {}
    for i, (name, fn) in enumerate(EFFECTS.items()):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([ORACLE_SEED, i])))
        total, sq, done = 0.0, 0.0, 0
        while done < draws:
            m = min(CHUNK, draws - done)
            v = fn(rng, m)
            total += v.sum()
            sq += (v * v).sum()
            done += m
        mean = total / draws
        se = np.sqrt((sq / draws - mean**2) / draws)
        out[name] = (mean, se)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--draws", type=int, default=10_000_000)
    args = ap.parse_args()
    res = oracle(args.draws)
    lines = [
        '"""Monte Carlo oracle values of the population ATE. Generated by',
        'scripts/regen_true_ate.py; do not edit by hand."""',
        "",
        f"ORACLE_SEED = {ORACLE_SEED}",
        f"ORACLE_DRAWS = {args.draws}",
        "ORACLE = {",
        *[f'    "{k}": {float(v[0])!r},' for k, v in res.items()],
        "}",
        "ORACLE_SE = {",
        *[f'    "{k}": {float(v[1])!r},' for k, v in res.items()],
        "}",
        "",
    ]
    path = Path(__file__).resolve().parents[1] / "src" / "mbalance" / "_true_ate.py"
    path.write_text("\n".join(lines))
    print(path.read_text())


if __name__ == "__main__":
    main()
