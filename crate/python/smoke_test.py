"""Smoke test for the autochord_py extension.

Build and run:

    cargo build --release -p autochord-py --features extension-module
    cp target/release/libautochord_py.so python/autochord_py.so
    python3 python/smoke_test.py
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import autochord_py as ac


def close(a, b, tol=1e-12):
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def main():
    assert close(ac.change_proportion(3.0, 1.0), 0.75)
    try:
        ac.change_proportion(1.0, 0.0)
    except ValueError:
        pass
    else:
        raise AssertionError("k = 0 must be rejected")

    # Series form of the expected lookup time.
    p, tl, te = 0.2, 0.5, 2.0
    series = tl + sum(i * te * p**i for i in range(1, 400))
    assert close(ac.expected_lookup_time(tl, te, p), series, 1e-9)

    assert ac.nsd([2.0, 2.0, 2.0]) == 0.0
    assert ac.id_from_key("k0") == 13524466254824444083
    assert ac.id_from_key("k0", bits=8) < 256

    p2 = ac.Policy.policy2()
    interval, now = ac.evaluate_cycle(10.0, 3, 0, p2)
    assert interval > 10.0 and not now

    m = ac.Manager(p2)
    start = m.interval
    for _ in range(5):
        m.cycle(4, 0)
    assert m.interval > start
    _, now = m.cycle(0, 2)
    assert now
    null = ac.Manager(ac.Policy.policy0())
    assert null.cycle(9, 9) == (null.interval, False)

    net = ac.Overlay(bits=16)
    ids = [100, 9000, 20000, 33000, 47000, 60000]
    net.found(ids[0], 0)
    for addr, i in enumerate(ids[1:], start=1):
        net.join(i, addr, 0)
    net.maintain_all(rounds=20)
    assert net.lookup(3, 10000) == 20000
    assert net.lookup(0, 65000) == 100
    net.set_offline(2)
    net.maintain_all(rounds=5)
    assert net.successor(1) == 33000

    with tempfile.TemporaryDirectory() as d:
        r = ac.run_experiment("light", "low", p2, seed=7, horizon=600.0, log_dir=d)
        assert r["lookups_ok"] > 0
        assert len(r["windows"]) > 0
        assert os.path.exists(os.path.join(d, "lookups.csv"))
        again = ac.run_experiment("light", "low", p2, seed=7, horizon=600.0)
        assert again["elt_single"] == r["elt_single"]

    print("smoke test ok")


if __name__ == "__main__":
    main()
