import pytest

from effham.common import BATCH_BYTES, BATCH_MAX, batch_size

BATCHES = [
    # dim, matrices per step, expected steps
    (2, 1, BATCH_MAX),
    (64, 1, BATCH_BYTES // (16 * 64 * 64)),
    (160, 6, BATCH_BYTES // (16 * 160 * 160 * 6)),
    (512, 6, 2),
    (4096, 6, 1),
]


@pytest.mark.parametrize('dim,per_step,steps', BATCHES)
def test_batch_size(dim, per_step, steps):
    assert batch_size(dim, per_step) == steps


@pytest.mark.parametrize('dim', [2, 16, 64, 160, 512, 1024])
@pytest.mark.parametrize('per_step', [1, 2, 6])
def test_batch_stays_within_budget(dim, per_step):
    steps = batch_size(dim, per_step)
    assert 1 <= steps <= BATCH_MAX
    assert steps == 1 or steps * per_step * 16 * dim * dim <= BATCH_BYTES


def test_batch_size_follows_budget(monkeypatch):
    monkeypatch.setattr('effham.common.BATCH_BYTES', 16 * 8 * 8 * 3)
    assert batch_size(8) == 3
    assert batch_size(8, per_step=2) == 1
