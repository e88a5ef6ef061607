"""Shared fixtures: synthetic image data and acceptance-line reporting."""

import numpy as np
import pytest

# filled by test_acceptance.py; printed after the run so the pass/fail
# line per criterion survives pytest's output capture
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)


def make_synthetic_images(n: int, seed: int, template_seed: int = 5):
    """Learnable 10-class image set: coarse random class templates + noise.

    Returns uint8 images (n, 28, 28) and uint8 labels (n,).
    """
    t_rng = np.random.default_rng(template_seed)
    coarse = t_rng.uniform(0.0, 1.0, size=(10, 7, 7))
    templates = coarse.repeat(4, axis=1).repeat(4, axis=2)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=n)
    images = np.clip(
        templates[labels] * 0.8 + rng.normal(0.0, 0.25, size=(n, 28, 28)), 0.0, 1.0
    )
    return (images * 255).astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture(scope="session")
def synth_idx_files(tmp_path_factory):
    """Small IDX fixture pair on disk (plain train, gzip test)."""
    from revde import mlp

    root = tmp_path_factory.mktemp("idx")
    train_images, train_labels = make_synthetic_images(120, seed=1)
    test_images, test_labels = make_synthetic_images(40, seed=2)
    paths = {
        "train_images": root / "train-images.idx",
        "train_labels": root / "train-labels.idx",
        "test_images": root / "test-images.idx.gz",
        "test_labels": root / "test-labels.idx.gz",
    }
    mlp.write_idx_images(paths["train_images"], train_images)
    mlp.write_idx_labels(paths["train_labels"], train_labels)
    mlp.write_idx_images(paths["test_images"], test_images)
    mlp.write_idx_labels(paths["test_labels"], test_labels)
    return paths


@pytest.fixture(scope="session")
def warm_kernels():
    """Trigger jit compilation of every hot kernel before timed assertions."""
    import numpy as np

    from revde import mlp
    from revde.benchmarks import get_benchmark
    from revde.repressilator import TRUE_PARAMS, integrate

    x = np.zeros((4, 3))
    for name in ("griewank", "rastrigin", "salomon", "schwefel"):
        get_benchmark(name, 3).batch(x)
    integrate(TRUE_PARAMS, times=np.array([0.0, 1.0]))
    dataset = mlp.ImageDataset(images=np.zeros((4, 196)), labels=np.zeros(4, dtype=int))
    mlp.classification_error_batch(np.zeros((2, 4120)), dataset)
    return True
