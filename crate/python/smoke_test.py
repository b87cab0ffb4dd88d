"""Smoke test for the eieo_py extension.

Build and install it first:

    pip install -e crates/python --no-build-isolation

then run `python python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import sys
import tempfile

import eieo_py

ROOT = pathlib.Path(__file__).resolve().parent.parent
BARRIER = [(-1.0, 4.0, 1.0, 6.0)]
LEFT = [(0.0, 0.0), (-3.0, 5.0), (0.0, 10.0)]
RIGHT = [(0.0, 0.0), (3.0, 5.0), (0.0, 10.0)]
THROUGH = [(0.0, 0.0), (0.0, 10.0)]


def check_topology():
    assert eieo_py.signature(LEFT, BARRIER) != eieo_py.signature(RIGHT, BARRIER)
    assert eieo_py.same_class(LEFT, LEFT, BARRIER)
    assert not eieo_py.same_class(LEFT, RIGHT, BARRIER)
    try:
        eieo_py.signature(THROUGH, BARRIER)
    except ValueError:
        pass
    else:
        raise AssertionError("a colliding path has no class")


def check_w_infinity():
    line = lambda dx: [(dx, float(t)) for t in range(5)]
    value, assignment = eieo_py.w_infinity([line(0.0), line(2.0)], [line(2.0), line(0.0)])
    assert value == 0.0 and assignment == [1, 0]
    value, _ = eieo_py.w_infinity([line(0.0)], [line(0.3)])
    assert math.isclose(value, 0.3, abs_tol=1e-12)
    try:
        eieo_py.w_infinity([line(0.0)], [line(0.0), line(1.0)])
    except ValueError:
        pass
    else:
        raise AssertionError("unequal supports must be rejected")


def check_harness():
    config = ROOT / "configs" / "nav1-7.toml"
    assert "nav1" in eieo_py.load_config(str(config))
    assert "naive" in eieo_py.methods()
    with tempfile.TemporaryDirectory() as out:
        [(seed, ret)] = eieo_py.train(str(config), seeds=[1], out=out)
        assert seed == 1 and math.isfinite(ret)
        checkpoint = pathlib.Path(out) / "sources" / "seed-1" / "checkpoint.json"
        path, ret = eieo_py.rollout(str(config), str(checkpoint), seed=0, noise="mean")
        assert len(path) > 1 and math.isfinite(ret)


def main():
    check_topology()
    check_w_infinity()
    check_harness()
    print("eieo_py smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
