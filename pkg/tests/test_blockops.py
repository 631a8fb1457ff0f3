import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from uwbright import _blockops_np
from uwbright.blockops import available_backends

from oracles import block_eme_direct, block_logamee_direct

BACKENDS = available_backends()


def test_benchmark_script_runs():
    script = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_blockops.py"
    result = subprocess.run(
        [sys.executable, str(script), "--size", "64", "--repeats", "2"],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert result.returncode == 0, result.stderr
    assert "block_log_ratio_sum" in result.stdout


@pytest.mark.parametrize("name", sorted(BACKENDS))
class TestBackends:
    def test_log_ratio_matches_loop_oracle(self, name):
        rng = np.random.default_rng(0)
        values = rng.random((40, 56)) * 200.0
        total, count = BACKENDS[name].block_log_ratio_sum(values, 8)
        assert count == 5 * 7
        assert 2.0 / count * total == pytest.approx(block_eme_direct(values, 8), rel=1e-9)

    def test_plip_matches_loop_oracle(self, name):
        rng = np.random.default_rng(1)
        values = rng.random((32, 32)) * 255.0
        gamma = 1026.0
        total, count = BACKENDS[name].block_plip_contrast_sum(values, 8, gamma)
        expected = block_logamee_direct(values, 8, gamma)
        got = gamma - gamma * (1.0 - total / gamma) ** (1.0 / count)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_zero_min_blocks_contribute_nothing(self, name):
        values = np.ones((16, 16))
        values[0:8, 0:8] = 0.0  # one block contains a zero
        total, count = BACKENDS[name].block_log_ratio_sum(values, 8)
        assert count == 4
        assert total == 0.0  # three constant blocks give log(1)=0, zero block skipped

    def test_zero_contrast_blocks_contribute_nothing(self, name):
        values = np.full((16, 16), 100.0)
        total, count = BACKENDS[name].block_plip_contrast_sum(values, 8, 1026.0)
        assert total == 0.0 and count == 4

    def test_rejects_untileable_shapes(self, name):
        with pytest.raises(ValueError):
            BACKENDS[name].block_log_ratio_sum(np.ones((10, 16)), 8)
        with pytest.raises(ValueError):
            BACKENDS[name].block_plip_contrast_sum(np.ones((16, 12)), 8, 1026.0)


@pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")
class TestBackendParity:
    def test_identical_results(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            h = 8 * int(rng.integers(1, 12))
            w = 8 * int(rng.integers(1, 12))
            values = rng.random((h, w)) * 255.0
            values[rng.random((h, w)) < 0.05] = 0.0  # sprinkle exact zeros
            a = BACKENDS["cython"].block_log_ratio_sum(values, 8)
            b = _blockops_np.block_log_ratio_sum(values, 8)
            assert a[1] == b[1]
            assert a[0] == pytest.approx(b[0], rel=1e-9, abs=1e-12)
            a = BACKENDS["cython"].block_plip_contrast_sum(values, 8, 1026.0)
            b = _blockops_np.block_plip_contrast_sum(values, 8, 1026.0)
            assert a[1] == b[1]
            assert a[0] == pytest.approx(b[0], rel=1e-9, abs=1e-12)
