import numpy as np
import pytest

from removal_synth.config import PipelineConfig
from removal_synth.core import BackgroundRecord, InstanceRecord
from removal_synth.pipeline import CopyPasteSynthesizer, load_corpora
from removal_synth.toy import make_toy_corpus


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    return make_toy_corpus(str(root))


@pytest.fixture(scope="session")
def toy_records(toy_corpus):
    insts, bgs, _, _ = load_corpora(*toy_corpus)
    return insts, bgs


@pytest.fixture(scope="session")
def fitted_synth(toy_records):
    insts, bgs = toy_records
    return CopyPasteSynthesizer(PipelineConfig(global_seed=7)).fit(insts, bgs)


def solid_instance(w, h, area_ratio=0.1, label="thing", score=0.3, id="i", value=200):
    img = np.full((h, w, 3), value, dtype=np.uint8)
    return InstanceRecord(id, label, img, np.ones((h, w), bool), area_ratio, score)


def background(W, H, boxes=(), value=50):
    regions = []
    for x0, y0, x1, y1 in boxes:
        m = np.zeros((H, W), bool)
        m[y0:y1, x0:x1] = True
        regions.append(m)
    return BackgroundRecord("bg", np.full((H, W, 3), value, dtype=np.uint8), tuple(regions))


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
