import os
import shlex
from pathlib import Path

import pytest

from miscal import load_checkpoint, parse_dataset_spec
from miscal.cli import run_cli

FIXTURE_DIR = Path(__file__).parent / "fixtures"
REPO_ROOT = FIXTURE_DIR.parent.parent
BLOB_SPEC = "synth:K=10,n=200,dim=32,spread=0.05,seed=7"
PT_CHECKPOINT = FIXTURE_DIR / "pt_blobs.mcf"

# recipe for the underconfidence-hardened twin used by the acceptance suite
FIXTURE_HIDDEN_BIAS = 2.0
IAT_SEED = 29
IAT_ETA = 0.3
IAT_EPOCHS = 200


def ensure_pt_checkpoint() -> Path:
    """The committed plain-trained reference model; rebuilt from its recorded
    invocation (repo-root relative paths) if the file is ever missing."""
    if not PT_CHECKPOINT.exists():
        FIXTURE_DIR.mkdir(exist_ok=True)
        args = shlex.split((FIXTURE_DIR / "pt_blobs.invocation").read_text().strip())
        cwd = os.getcwd()
        os.chdir(REPO_ROOT)
        try:
            assert run_cli(args) == 0
        finally:
            os.chdir(cwd)
    return PT_CHECKPOINT


@pytest.fixture(scope="session")
def blob_dataset():
    return parse_dataset_spec(BLOB_SPEC)


@pytest.fixture(scope="session")
def pt_model():
    model, _ = load_checkpoint(ensure_pt_checkpoint())
    return model


@pytest.fixture(scope="session")
def pt_manifest():
    _, manifest = load_checkpoint(ensure_pt_checkpoint())
    return manifest
