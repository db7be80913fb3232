"""Pure-Python DTW accumulation kernel.

Same contract as the compiled extension: given a (T1, T2) grid of local
cell costs, fill the accumulated-cost table for the step set
{(1,0), (0,1), (1,1)}.  Plain Python floats over nested lists beat numpy
scalar indexing by a wide margin here; the recurrence cannot be
vectorized because each cell depends on its left neighbor.
"""

import numpy as np


def dtw_accumulate(cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    t1, t2 = cost.shape
    rows = cost.tolist()
    prev = rows[0]
    for j in range(1, t2):
        prev[j] += prev[j - 1]
    out = [prev]
    for i in range(1, t1):
        cur = rows[i]
        up = prev[0]
        cur[0] += up
        left = cur[0]
        for j in range(1, t2):
            diag = up
            up = prev[j]
            best = diag if diag <= up else up
            if left < best:
                best = left
            left = cur[j] = cur[j] + best
        prev = cur
        out.append(cur)
    return np.array(out, dtype=np.float64)
