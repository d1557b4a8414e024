"""Smoke test for the pymmml extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import math
import os
import tempfile

import pymmml


def main():
    sets = pymmml.synth_generate(classes=4, sets_per_class=6, images_per_set=20, d=8, seed=1)
    assert len(sets) == 24
    assert sets[0].dim == 8 and len(sets[0]) == 20

    spd_a, gr_a = pymmml.model_set(sets[0], q=3)
    spd_b, gr_b = pymmml.model_set(sets[7], q=3)
    d = pymmml.led_distance(spd_a, spd_b)
    k = pymmml.log_euclidean_kernel
    assert math.isclose(d * d, k(spd_a, spd_a) + k(spd_b, spd_b) - 2 * k(spd_a, spd_b), rel_tol=1e-8)
    p = pymmml.projection_distance(gr_a, gr_b)
    assert math.isclose(p * p, 3 - pymmml.projection_kernel(gr_a, gr_b), rel_tol=1e-8, abs_tol=1e-12)

    gallery = [s for i, s in enumerate(sets) if i % 6 < 4]
    probes = [s for i, s in enumerate(sets) if i % 6 >= 4]
    model = pymmml.EmbeddingModel.fit(gallery, q=3, d_z=3)
    assert model.d_z == 3 and model.q == 3

    label, dist, nearest = model.classify(gallery[5])
    assert label == gallery[5].label and dist == 0.0 and nearest == gallery[5].set_id
    correct = sum(model.classify(s)[0] == s.label for s in probes)
    print(f"probe accuracy {correct}/{len(probes)}")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.bin")
        model.save(path)
        loaded = pymmml.EmbeddingModel.load(path)
        assert all(loaded.classify(s) == model.classify(s) for s in probes)

    result = pymmml.run_experiment(sets, gallery="4", probe="rest", folds=3, q=3, d_z=3)
    assert len(result["per_fold"]) == 3
    assert "summary.mean=" in result["report"]
    print(f"experiment mean {result['mean']:.4f} std {result['std']:.4f}")

    try:
        pymmml.ImageSet([[1.0, 2.0]], "a", "single")
    except pymmml.MmmlError as e:
        print(f"rejected degenerate set: {e}")
    else:
        raise AssertionError("single-image set accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
