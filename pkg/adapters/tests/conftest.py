import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # makes `wire_helpers` importable

from wire_helpers import write_transcript_inputs


@pytest.fixture
def transcript_root(tmp_path):
    return write_transcript_inputs(tmp_path)
