"""Regenerate the CSV fixtures in tests/fixtures (rows are time points)."""

from __future__ import annotations

import datetime
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ridgecusum import ObservationMatrix, bench, gplimit
from ridgecusum.detect import recursive_detect
from ridgecusum.scan import t_sc
from ridgecusum.spectral import RidgeContext

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def save(name, obs, labels=None):
    X = obs.data.T
    with (OUT / name).open("w") as fh:
        for j, row in enumerate(X):
            cells = [f"{v:.6f}" for v in row]
            if labels is not None:
                cells.insert(0, labels[j])
            fh.write(",".join(cells) + "\n")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    meta = {}
    sc = gplimit.simulate_sup_quantiles("SC", 0.1, B=20000, alphas=(0.05,), seed=1).critical_value(0.05)

    # strong single change at 0.5
    cfg = bench.ExperimentConfig(signal=bench.SignalModel("IID_GAUSS", 2.5), alternative="SINGLE",
                                 p=20, n=120, seed=3)
    obs, truth = bench.generate_panel(cfg, 0)
    stat = t_sc(RidgeContext.build(obs, 0.1 * obs.gamma_n)).statistic
    save("strong_jump.csv", obs)
    start = datetime.date(2020, 1, 1)
    save("strong_jump_labeled.csv", obs, [str(start + datetime.timedelta(days=j)) for j in range(obs.n)])
    meta["strong_jump"] = dict(truth, statistic=stat, sc_cv=sc, ratio=stat / sc)

    # null panel: first replicate whose SC statistic is below the critical value
    cfg0 = replace(cfg, signal=bench.SignalModel("IID_GAUSS", 0.0), alternative="NONE")
    d0 = bench.Design(cfg0)
    for r in range(100):
        obs, truth = d0.panel(r)
        stat = t_sc(RidgeContext.build(obs, 0.1 * obs.gamma_n)).statistic
        if stat < sc:
            break
    save("null.csv", obs)
    meta["null"] = dict(truth, statistic=stat, sc_cv=sc)

    # epidemic (0.35, 0.65)
    cfg_e = bench.ExperimentConfig(signal=bench.SignalModel("IID_GAUSS", 0.5), alternative="EPIDEMIC",
                                   p=50, n=400, seed=5)
    mc = gplimit.simulate_sup_quantiles("MC_DENSE", 0.1, B=20000, alphas=(0.05,), seed=1,
                                        resolution=100).critical_value(0.05)
    de = bench.Design(cfg_e)
    for r in range(100):
        obs, truth = de.panel(r)
        res = recursive_detect(obs, mc)
        if res.change_points == truth["changes"]:
            break
    save("epidemic.csv", obs)
    meta["epidemic"] = dict(truth, detected=res.change_points, mc_cv=mc)

    # constant columns
    X = np.tile(np.linspace(-1, 1, 5)[:, None], (1, 50))
    save("constant.csv", ObservationMatrix(X))
    meta["constant"] = {"p": 5, "n": 50}

    (OUT / "fixtures.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main()
