"""Three aligned models: the barycentric triangle and transitivity of matching.

B and C are both matched to A.  The triangle spanned by the three is scanned
on a grid, and the B-C segment is compared with and without the alignment.
"""

from modecomb import run_sweep, triangle_heatmap

from _common import toy_data, trained_pair


def main():
    data = toy_data()
    a, b, b_pi, _ = trained_pair(data, seeds=(1, 2))
    _, c, c_pi, _ = trained_pair(data, seeds=(1, 3))
    tri = triangle_heatmap(a, b_pi, c_pi, 6, data)
    print("test accuracy on the triangle (rows lambda_b, columns lambda_c):")
    grid = {(round(p.lambda_b, 2), round(p.lambda_c, 2)): p.test.accuracy for p in tri.points}
    steps = [i / 5 for i in range(6)]
    for lb in steps:
        cells = [f"{grid[(round(lb, 2), round(lc, 2))]:.3f}" for lc in steps if lb + lc <= 1 + 1e-9]
        print(f"  {lb:.1f}: " + " ".join(cells))
    best = tri.best
    print(f"best point lambda_b={best.lambda_b:.2f}, lambda_c={best.lambda_c:.2f}, accuracy {best.test.accuracy:.4f}")
    naive = run_sweep(b, c, "scalar", data, grid_size=11).barrier().empirical_accuracy_barrier
    via_a = run_sweep(b_pi, c_pi, "scalar", data, grid_size=11).barrier().empirical_accuracy_barrier
    print(f"B-C accuracy barrier naive {naive:.4f}, both matched to A {via_a:.4f}")


if __name__ == "__main__":
    main()
