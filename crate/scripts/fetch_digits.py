#!/usr/bin/env python3
"""Write the 1797x64 handwritten-digits table to data/digits.csv.

The table is the optical-recognition digits set bundled with scikit-learn
(UCI "Optical Recognition of Handwritten Digits", test portion). Each row is
`label,f0,...,f63` with integer pixel counts 0-16. The output is verified
against scripts/checksums.sha256.
"""
import hashlib
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
OUT = ROOT / "data" / "digits.csv"
SUMS = ROOT / "scripts" / "checksums.sha256"


def expected_digest(name):
    for line in SUMS.read_text().splitlines():
        digest, _, path = line.partition("  ")
        if path.strip() == name:
            return digest.strip()
    return None


def main():
    from sklearn.datasets import load_digits

    digits = load_digits()
    lines = []
    for label, row in zip(digits.target, digits.data):
        lines.append(",".join([str(int(label))] + [str(int(v)) for v in row]))
    body = ("\n".join(lines) + "\n").encode()
    digest = hashlib.sha256(body).hexdigest()
    want = expected_digest("data/digits.csv")
    if want is not None and want != digest:
        sys.exit(f"checksum mismatch: got {digest}, expected {want}")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_bytes(body)
    print(f"wrote {OUT} ({len(lines)} rows, sha256 {digest})")


if __name__ == "__main__":
    main()
