from pathlib import Path

import pytest

from stiefel_relu import data


def _mnist_root():
    root = data.default_data_dir()
    try:
        data._find_idx(Path(root) / "mnist", "t10k-labels-idx1-ubyte")
    except FileNotFoundError:
        return None
    return root


@pytest.fixture(scope="session")
def mnist_root():
    root = _mnist_root()
    if root is None:
        pytest.skip("MNIST not found; run scripts/fetch_mnist.py or set STIEFEL_RELU_DATA")
    return root


@pytest.fixture(scope="session")
def mnist_test(mnist_root):
    return data.load_image_dataset("mnist", "test", mnist_root)


@pytest.fixture(scope="session")
def tabular_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    data.export_bundled_tabular(root)
    return root


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
