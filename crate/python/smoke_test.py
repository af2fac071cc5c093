"""Smoke test for the snrlab extension module.

Build and install first, for example:
    pip install maturin && maturin develop -m crates/python/Cargo.toml
"""

import json
import math
import pathlib
import random
import tempfile

import snrlab


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b)


def main():
    sched = snrlab.NoiseSchedule.linear(100)
    assert sched.steps == 100
    close(sched.snr(10), sched.alpha_bar(10) / (1 - sched.alpha_bar(10)), 1e-12)

    rng = random.Random(7)
    x = snrlab.Grid((1, 8, 8), [rng.gauss(0, 1) for _ in range(64)])
    bands = snrlab.dwt_haar(x)
    energy = sum(v * v for _, vals in bands.values() for v in vals)
    close(energy, sum(v * v for v in x.values()), 1e-10)
    back = snrlab.idwt_haar(bands["ll"], bands["lh"], bands["hl"], bands["hh"])
    assert back.max_abs_diff(x) < 1e-12

    x0 = snrlab.Grid((1, 8, 8), [rng.gauss(0, 1) for _ in range(64)])
    dcw = snrlab.Correction.constant("DCW", 0.03, 0.03).apply(10, sched, x, x0)
    assert dcw.max_abs_diff(snrlab.dc_pixel(x, x0, 0.03)) < 1e-10
    assert snrlab.Correction.none().apply(10, sched, x, x0).values() == x.values()

    for t in range(1, 100):
        close(snrlab.snr_theorem(1.0, 0.0, t, sched), sched.snr(t), 1e-12 * sched.snr(t))
        assert snrlab.snr_theorem(0.98, 0.1, t, sched) < sched.snr(t)
    curves = snrlab.theory_curves(0.98, 0.1, sched)
    assert len(curves["t"]) == 99
    coef, std = snrlab.biased_step_law(1.0, 0.0, 50, sched)
    close(coef, math.sqrt(sched.alpha_bar(49)), 1e-15)

    mean = snrlab.Grid((1, 4, 4), [0.5 if (i + i // 4) % 2 else -0.5 for i in range(16)])
    data = snrlab.sample_data(mean, 0.25, 200, seed=1)
    chains = snrlab.sample(mean, 0.25, snrlab.NoiseSchedule.desk(50), 200, seed=3, gamma=0.98, phi=0.1)
    again = snrlab.sample(mean, 0.25, snrlab.NoiseSchedule.desk(50), 200, seed=3, gamma=0.98, phi=0.1, threads=1)
    assert [g.values() for g in chains] == [g.values() for g in again]
    ed, se = snrlab.energy_distance(chains, data)
    assert ed > 0 and se > 0
    assert snrlab.sliced_wasserstein(chains, data, n_proj=10) > 0

    ok, text = snrlab.run_selftest(trials=20)
    assert ok, text
    bad, text = snrlab.run_selftest(trials=5, haar_scale=0.51)
    assert not bad and "FAIL wavelet_energy" in text

    with tempfile.TemporaryDirectory() as tmp:
        cfg = pathlib.Path(tmp) / "smoke.toml"
        cfg.write_text('experiment.name = "sample"\nschedule.T = 30\nrun.n_chains = 8\n')
        report = json.loads(snrlab.run_experiment(str(cfg)))
        assert "trajectories.csv" in report["outputs"]
        assert (pathlib.Path(tmp) / "out" / "smoke" / "manifest.json").exists()

    try:
        snrlab.NoiseSchedule.linear(10, 0.5, 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid schedule accepted")
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
