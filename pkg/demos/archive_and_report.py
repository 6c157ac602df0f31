"""Weights, permutations and sweep tables written to disk and read back.

Everything lands in a temporary directory; the archive round trip is checked
bit for bit and the CSV table is shown.
"""

import tempfile
from pathlib import Path

from modecomb import emit_results, load_permutation, load_weights, run_sweep, save_permutation, save_weights

from _common import toy_data, trained_pair


def main():
    data = toy_data()
    a, _, b_pi, res = trained_pair(data, width_multiplier=1)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        save_weights(a, tmp / "a.mcw", {"seed": 1})
        save_permutation(res.pi, tmp / "b_to_a.perm")
        print(f"archive {(tmp / 'a.mcw').stat().st_size} bytes, identical after reload: "
              f"{load_weights(tmp / 'a.mcw').equals(a)}")
        print(f"permutation identical after reload: {load_permutation(tmp / 'b_to_a.perm') == res.pi}")
        emit_results(run_sweep(a, b_pi, "scalar", data, grid_size=5), tmp / "sweep.csv")
        print((tmp / "sweep.csv").read_text())


if __name__ == "__main__":
    main()
