import pytest

from glds.datasets import ingest
from glds.experiment import ExperimentConfig, ModelConfig
from glds.synthetic import write_synthetic_dataset


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory):
    """Two LDS classes, four subjects, two trials each, written as generic CSV."""
    root = tmp_path_factory.mktemp("synthetic")
    write_synthetic_dataset(root / "data", n_classes=2, n_subjects=4, trials=2, n_frames=40,
                            seed=0)
    manifest = ingest(root / "data", "generic")
    path = root / "manifest.json"
    manifest.save(path)
    return path


@pytest.fixture
def synthetic_config(synthetic_manifest, tmp_path):
    return ExperimentConfig(manifest=str(synthetic_manifest), representation="3RB",
                            model=ModelConfig(d=4), output_dir=str(tmp_path / "run"))


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""
    def record(number, passed, detail, status=None):
        _CRITERIA[number] = (status or ("PASS" if passed else "FAIL"), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
