"""Smoke test for the uq_perceiver_py extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, then run
`python crates/python/python/smoke_test.py`.
"""

import math
import tempfile

import uq_perceiver_py as uqp


def main():
    probs = [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]
    acc, nll, ece, brier = uqp.scores(probs, [0, 1, 1])
    assert abs(acc - 2 / 3) < 1e-12
    want = -(math.log(0.9) + math.log(0.8) + math.log(0.4)) / 3
    assert abs(nll - want) < 1e-12
    assert 0.0 <= ece <= 1.0 and 0.0 <= brier <= 1.0

    t, fitted, unscaled = uqp.temperature_scale([[4.0, 0.0], [0.0, 4.0], [4.0, 0.0]], [0, 1, 1])
    assert fitted <= unscaled and t > 0

    assert abs(uqp.lr_at("snapshot_cosine", 1, 100, 0.1, cycles=5) - 0.1) < 1e-15

    with tempfile.TemporaryDirectory() as tmp:
        cfg = uqp.RunConfig(
            "strategy = deep\nmembers = 2\nlatent_count = 4\nlatent_dim = 8\n"
            "byte_dim = 8\nheads = 2\ntower_layers = 1\ndepth_repeats = 1\n"
            "num_bands = 2\nsynth_resolution = 8\nsynth_train = 40\n"
            "synth_test = 20\nsteps = 20\nlr = 1e-3\n"
        )
        cfg.set("out_dir", tmp)
        assert cfg.get("members") == "2"
        run_dir = uqp.train(cfg)
        report = uqp.evaluate(cfg, str(run_dir))
        assert report.ensemble_size == 2 and 0.0 <= report.accuracy <= 1.0
        sweep = uqp.sweep_ensemble(cfg)
        assert [r.ensemble_size for r in sweep] == [1, 2]
        echo, params = uqp.read_checkpoint(f"{run_dir}/member_0.uapc")
        assert echo and params
        print(report)

    try:
        uqp.RunConfig("no_such_key = 1")
    except ValueError as e:
        assert "config" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
