"""Smoke test for the sgfcn_py extension.

Install the module first (``pip install maturin`` then ``pip install --no-build-isolation -e
crates/py``), or run this script with ``--build`` to compile it with cargo and load the shared
library straight from the target directory.
"""

import importlib.util
import math
import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load_module(build):
    try:
        import sgfcn_py

        return sgfcn_py
    except ImportError:
        if not build:
            raise
    subprocess.run(
        ["cargo", "build", "-p", "sgfcn-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = os.path.join(ROOT, "target", "debug", "libsgfcn_py.so")
    tmp = tempfile.mkdtemp()
    target = os.path.join(tmp, "sgfcn_py.so")
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("sgfcn_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    m = load_module("--build" in sys.argv)

    # single splat peaks at its centre with amplitude alpha / (pi W)
    g = m.fixation_map([(5.0, 4.0)], 9, 11, window=3)
    assert abs(g[4][5] - 1.0 / (math.pi * 3)) < 1e-12
    assert max(max(r) for r in g) == g[4][5]
    q = m.quantize_map(g)
    assert len(q) == 99 and max(q) == 255

    # metrics on a map equal to its ground truth
    assert abs(m.cc(g, g) - 1.0) < 1e-12
    assert abs(m.sim(g, g) - 1.0) < 1e-12
    assert m.emd(g, g, grid=4) == 0.0
    assert m.shuffled_auc(g, [(4, 5)], [(0, 0), (8, 10)]) == 1.0
    assert m.nss(g, [(4, 5)]) > 0.0

    # losses
    v, grad = m.loss_quadratic([[0.0, 1.0]], [[1.0, 1.0]])
    assert v == 0.5 and grad == [[-1.0, 0.0]]

    # boundary of identical frames is zero
    frame = [[[0.2 + 0.01 * c, 0.3, 0.4] for c in range(16)] for _ in range(16)]
    b = m.opb_boundary(frame, frame)
    assert max(max(r) for r in b) <= 1e-6

    # models: predictions live in (0, 1); SGFE from SGF3 ignores the previous map at first
    sgf3 = m.Model.init("sgf3", 16, 16, seed=1)
    p = sgf3.predict(frame)
    assert len(p) == 16 and all(0.0 < x < 1.0 for r in p for x in r)
    sgfe = sgf3.transfer("sgfe", seed=2)
    assert sgfe.variant == "SGFE"
    zero = [[0.0] * 16 for _ in range(16)]
    a = sgfe.predict(frame, prev=zero, boundary=zero)
    c = sgfe.predict(frame, prev=p, boundary=zero)
    assert a == c

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "sgf3.json")
        sgf3.save(path)
        assert m.Model.load(path).predict(frame) == p
        assert m.synth(os.path.join(d, "data"), seed=3, clips=2, frames_per_clip=3) == 2

    try:
        m.Model.init("sgf9")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown variant accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
