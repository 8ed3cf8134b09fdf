"""Dense-network weight and path counts next to ADR parameter counts."""
import argparse

from neuradr import capacity_report, parameter_count


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", nargs="+", default=["100x10", "1000x100", "10000x1000"], help="NxL pairs")
    ap.add_argument("--dims", type=int, nargs="+", default=[1, 2, 3, 10, 1000])
    args = ap.parse_args()

    print(f"{'N':>7}{'L':>6}{'N_W':>16}{'log10 N_P':>12}{'hom':>6}{'het':>9}{'on-the-fly':>13}")
    for s in args.sizes:
        N, L = (int(v) for v in s.lower().split("x"))
        cap = capacity_report(N, L)
        counts = [parameter_count(m, N, L) for m in ("homogeneous", "heterogeneous", "onthefly")]
        print(f"{N:>7}{L:>6}{cap.n_weights:>16}{cap.log10_paths:>12.1f}{counts[0]:>6}{counts[1]:>9}{counts[2]:>13}")
    print("\nper-node parameters in d dimensions: 1 + d + d(d+1)/2")
    for d in args.dims:
        print(f"  d={d:<6}{parameter_count('homogeneous', 1, d=d)}")


if __name__ == "__main__":
    main()
