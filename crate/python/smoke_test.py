"""Smoke test for the pynegface extension module.

Install the module first, either with maturin
    pip install maturin
    pip install --no-build-isolation ./crates/python
or by copying a cargo build next to this script
    cargo build -p negface-py --features extension-module --release
    cp target/release/libpynegface.so python/pynegface.so
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pynegface as nf


def main():
    assert nf.pmf(8, 2, 3) == [(6, 0.25), (7, 0.5), (8, 0.25)]
    assert abs(nf.eer([0.9, 0.8, 0.7], [0.75, 0.6, 0.5]) - 1 / 3) < 1e-15
    assert nf.fnmr_at_fmr([0.9, 0.95], [0.1, 0.2], 0.01) == 0.0

    t = nf.PositiveTemplate([1, 2, 3, 1, 2, 3], 3)
    n = nf.negate(t, seed=7)
    assert all(a != b for a, b in zip(t.labels, n.labels))
    assert nf.nhd(t, n) == 1.0
    assert nf.positive_hd(t, nf.PositiveTemplate([1, 2, 3, 3, 3, 3], 3)) == 2

    data = nf.synthesize(subjects=10, captures=3, dim=16, seed=1)
    assert len(data) == 30 and data[0].attributes["gender"] in ("0", "1")
    pipeline = nf.Pipeline.fit(data, k=3, length=64, enlargement="random", seed=2)

    gallery = pipeline.new_gallery(seed=3)
    for e in data:
        if e.capture_id.endswith("_c0"):
            gallery.insert(pipeline.enroll(e, seed=3))
    assert len(gallery) == 10

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "g.ngal")
        gallery.save(path)
        gallery = nf.Gallery.load(path)

    probe = data[0]
    scores = dict(gallery.scores(pipeline.positive_template(probe)))
    assert scores[probe.subject_id] == 1.0
    genuine = scores.pop(probe.subject_id)
    assert genuine > max(scores.values())
    print("pynegface smoke test passed")


if __name__ == "__main__":
    main()
