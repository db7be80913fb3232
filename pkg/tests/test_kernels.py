import numpy as np
import pytest

from signscore import _kernels
from signscore._kernels import fallback


@pytest.mark.skipif(_kernels.backend_name() != "compiled",
                    reason="compiled kernel unavailable")
class TestBackendEquivalence:
    def test_bit_identical_tables(self):
        from signscore._kernels import _dtw_core

        rng = np.random.default_rng(51)
        for _ in range(50):
            t1 = int(rng.integers(1, 40))
            t2 = int(rng.integers(1, 40))
            cost = rng.uniform(size=(t1, t2))
            a = _dtw_core.dtw_accumulate(cost)
            b = fallback.dtw_accumulate(cost)
            assert np.array_equal(a, b)

    def test_selected_backend_exposed(self):
        assert _kernels.backend_name() in ("compiled", "python")
        assert callable(_kernels.dtw_accumulate)


class TestFallbackAlone:
    def test_known_small_grid(self):
        cost = np.array([[1.0, 9.0], [9.0, 1.0]])
        acc = fallback.dtw_accumulate(cost)
        assert acc[0, 0] == 1.0
        assert acc[1, 1] == 2.0  # diagonal step

    def test_single_row_and_column(self):
        row = np.array([[1.0, 2.0, 3.0]])
        assert np.array_equal(fallback.dtw_accumulate(row), [[1.0, 3.0, 6.0]])
        col = row.T.copy()
        assert np.array_equal(fallback.dtw_accumulate(col), [[1.0], [3.0], [6.0]])
