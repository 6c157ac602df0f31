"""How much does the barrier grow when the weakest unit matches are scrambled?

For one hidden layer the k matched units with the lowest activation
correlation are permuted among themselves with no fixed points.
"""

from modecomb import perturbation_sweep

from _common import toy_data, trained_pair


def main():
    data = toy_data()
    a, b, _, res = trained_pair(data)
    width = a.arch.hidden_width
    for layer in range(1, a.arch.num_hidden + 1):
        out = perturbation_sweep(a, b, res, layer, [2, width // 4, width // 2, width], data, grid_size=11)
        cells = ", ".join(f"k={p.k}: {p.report.empirical_accuracy_barrier:.4f}" for p in out)
        print(f"layer {layer}: {cells}")


if __name__ == "__main__":
    main()
