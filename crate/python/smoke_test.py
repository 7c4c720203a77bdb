"""Smoke test for the pednav_py extension.

Build first with `cargo build --release -p pednav-py`, then run
`python3 python/smoke_test.py`. Set PEDNAV_PY_LIB to point at a different
build of the shared library.
"""

import importlib.util
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    lib = os.environ.get("PEDNAV_PY_LIB")
    candidates = [Path(lib)] if lib else [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libpednav_py.so", "libpednav_py.dylib", "pednav_py.dll")
    ]
    for path in candidates:
        if path.exists():
            break
    else:
        sys.exit("pednav_py library not found; run cargo build --release -p pednav-py")
    tmp = Path(tempfile.mkdtemp())
    target = tmp / ("pednav_py.pyd" if path.suffix == ".dll" else "pednav_py.so")
    shutil.copy(path, target)
    spec = importlib.util.spec_from_file_location("pednav_py", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    pn = load_module()

    world = pn.World("cross", 101, 5)
    raster, scalars, shape = world.observe()
    assert len(raster) == shape[0] * shape[1] * shape[2]
    assert len(scalars) == 3
    steps = 0
    while not world.is_terminated() and steps < 400:
        world.step(*world.expert_action())
        steps += 1
    assert world.is_terminated(), "expert should finish the episode"
    print(f"expert episode: {steps} steps, {world!r}")

    policy = pn.Policy.random(hidden=16, seed=3)
    scenario, steer, speed = policy.act(pn.World("path_follow", 201, 1))
    assert scenario in {"path_follow", "confront", "ped_follow", "cross"}
    assert 0 <= steer < 7 and 0 <= speed < 3

    session = pn.Session(policy, "path_follow", 201, 1, queue_len=8)
    for _ in range(10):
        json.loads(session.tick())
    seize = session.message(1, json.dumps({"type": "seize"}))
    assert json.loads(session.handle(seize))["type"] == "ack"
    act = session.message(2, json.dumps({"type": "set_action", "steer_bin": 1, "speed_bin": 1}))
    reply = json.loads(session.handle(act))
    assert reply["type"] == "ack" and reply["samples"] == 8, reply
    assert session.mode() == "human_control"
    frame = json.loads(session.tick())
    assert frame["executed"] == {"steer_bin": 1, "speed_bin": 1}, frame
    bad = json.loads(session.handle('{"version": 1, "session": "py", "seq": 3, "type": "warp"}'))
    assert bad["type"] == "reject"
    assert pn.reingest(session.log(), policy) == session.delta_len()
    print(f"session: {session.delta_len()} samples, log replays")

    with tempfile.TemporaryDirectory() as d:
        ckpt = Path(d) / "p.ckpt"
        policy.save(str(ckpt))
        assert pn.Policy.load(str(ckpt)).digest() == policy.digest()

    cfg = pn.default_config()
    assert "queue_len = 50" in cfg
    small = """
[eval]
attempt_roads = [101]
attempts = 2
twi_roads = [201]
twi_runs = 1
"""
    ev = json.loads(policy.evaluate(small))
    assert len(ev["attempts"]) == 4 and len(ev["twi"]) == 2
    print("evaluation:", sum(a["success"] for a in ev["attempts"]), "successful attempts of 4")
    print("ok")


if __name__ == "__main__":
    main()
