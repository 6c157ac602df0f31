"""Element-wise combinations of an aligned pair, beyond the segment between them.

Each family draws a per-parameter coefficient vector ``v`` and evaluates
``v * A + (1 - v) * B``.  The worst sampled accuracy is compared with the
mean endpoint accuracy.
"""

from modecomb import run_sweep

from _common import toy_data, trained_pair

FAMILIES = ("scalar", "uniform", "subcube", "hyperplane", "bernoulli", "stitch", "minmax")


def main():
    data = toy_data()
    a, _, b_pi, _ = trained_pair(data)
    print(f"{'family':<11} {'loss barrier':>13} {'acc barrier':>12}  worst sample (param, draw)")
    for family in FAMILIES:
        rep = run_sweep(a, b_pi, family, data, grid_size=9, samples_per_point=4).barrier()
        print(f"{family:<11} {rep.empirical_loss_barrier:13.4f} {rep.empirical_accuracy_barrier:12.4f}  "
              f"{rep.worst_accuracy_sample}")
    ext = run_sweep(a, b_pi, "extrapolate", data, grid_size=7)
    for r in ext.records:
        print(f"extrapolate lambda {r.param:+.1f}: test accuracy {r.test.accuracy:.4f}")


if __name__ == "__main__":
    main()
