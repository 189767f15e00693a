import subprocess
import sys

import pytest

from adaptsp_bridge.battery import builtin_battery_path, load_battery
from adaptsp_bridge.encode import encode_pair
from adaptsp_bridge.encoders import load_encoder


def toolkit(args, cwd):
    """Drive the primary CLI as a subprocess; the only coupling allowed."""
    return subprocess.run(
        [sys.executable, "-m", "adaptsp", *args],
        cwd=cwd, capture_output=True, text=True,
    )


@pytest.fixture(scope="session")
def run_toolkit():
    return toolkit


@pytest.fixture(scope="session")
def celeba_battery():
    return load_battery(builtin_battery_path("celeba_sub"))


@pytest.fixture(scope="session")
def bundle(celeba_battery):
    # one seeded encoder for the whole session; construction is the slow part
    return load_encoder("seeded:7", celeba_battery.token_personalized)


@pytest.fixture(scope="session")
def encoded_pair(tmp_path_factory, bundle, celeba_battery):
    out = tmp_path_factory.mktemp("encoded")
    pers, cls = encode_pair(bundle, celeba_battery, out, anchor_encoder="original")
    return pers, cls


@pytest.fixture(scope="session")
def pipeline_dir(tmp_path_factory, bundle, celeba_battery):
    """Encoded pair plus toolkit residuals/subspace/k=0 adjustment."""
    out = tmp_path_factory.mktemp("pipeline")
    pers, cls = encode_pair(bundle, celeba_battery, out, anchor_encoder="original")
    steps = [
        ["residuals", "--personalized", str(pers), "--class-set", str(cls),
         "--out", str(out / "residuals.npy"), "--stats-path", str(out / "stats.json")],
        ["subspace", "--residuals", str(out / "residuals.npy"),
         "--out", str(out / "subspace")],
        ["adjust", "--mode", "proj", "--anchor", str(cls),
         "--subspace", str(out / "subspace"),
         "--residuals", str(out / "residuals.npy"),
         "--k", "0", "--out", str(out / "adjusted_k0.npy")],
    ]
    for step in steps:
        proc = toolkit(step, out)
        assert proc.returncode == 0, (step[0], proc.stderr)
    return out
