"""Where combined models disagree with their parents, and how far apart the parents are.

Buckets the test predictions of the midpoint and Min-vertex models against
both endpoints, then histograms the per-parameter distances of the pair.
"""

import numpy as np

from modecomb import agreement_analysis, combine_elementwise, edge_lengths, min_max_vertex
from modecomb.evaluation import predictions

from _common import toy_data, trained_pair


def main():
    data = toy_data()
    a, _, b_pi, _ = trained_pair(data)
    y = data.test.labels
    pa, pb = predictions(a, data), predictions(b_pi, data)
    mid = combine_elementwise(a, b_pi, np.full(a.arch.num_params, 0.5))
    low = combine_elementwise(a, b_pi, min_max_vertex(a, b_pi, "min"))
    for name, m in (("midpoint", mid), ("min vertex", low)):
        counts = agreement_analysis(pa, pb, predictions(m, data), y)
        print(f"{name}: " + ", ".join(f"{k} {v}" for k, v in counts.as_dict().items()))
    hist = edge_lengths(a, b_pi, 10)
    for left, right, n in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
        print(f"|A - B| in [{left:.3f}, {right:.3f}): {n}")


if __name__ == "__main__":
    main()
