"""Cut text8 (one line) into documents of N tokens, one per line, for the CLI.

usage: split_text8.py text8 text8.docs [N]
"""
import sys


def main():
    src, dst = sys.argv[1], sys.argv[2]
    n = int(sys.argv[3]) if len(sys.argv) > 3 else 1000
    with open(src) as f:
        tokens = f.read().split()
    with open(dst, "w") as out:
        for i in range(0, len(tokens), n):
            out.write(" ".join(tokens[i : i + n]) + "\n")


if __name__ == "__main__":
    main()
