"""Print jumps and co-optimal times recorded in an ``aqoe optimize`` table.

Usage: python scripts/summarize.py results/ho_omega2_2_optima.csv [min_jump]
"""
import sys


def main(path, min_jump=0.1):
    errors = 0
    for line in open(path):
        if line.startswith("#error"):
            errors += 1
        elif line.startswith("# discontinuity"):
            fields = dict(kv.split("=") for kv in line[2:].split()[1:])
            if abs(float(fields["jump"])) >= min_jump:
                print(line[2:].rstrip())
        elif line.startswith("# cooptimal"):
            print(line[2:].rstrip())
    print(f"{errors} grid points failed")


if __name__ == "__main__":
    main(sys.argv[1], *(float(a) for a in sys.argv[2:3]))
