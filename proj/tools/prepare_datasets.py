#!/usr/bin/env python3
"""Build the benchmark data directory from locally available archives.

Sources (all redistributed UCI data):
  * Pima Indians diabetes and Statlog Australian credit from the KEEL
    repository copies shipped in the ``keel_ds`` wheel.
  * UCI Adult (``adult.data``) shipped in the ``responsibly`` wheel,
    binarized into the 123-feature layout used by the LIBSVM a1a..a9a
    files (continuous columns quantile-binned, categoricals one-hot).

Leukemia (Golub, 7129 features) and Star/Galaxy-Bright are not available
offline. Drop ``leukemia.svm`` / ``brightdata.csv`` into the data directory
to enable those benchmarks.

Usage:
  pip download --no-deps keel_ds responsibly -d /tmp/wheels
  python3 tools/prepare_datasets.py --wheels /tmp/wheels --out data
"""
import argparse
import glob
import json
import os
import zipfile

import numpy as np

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
]
ADULT_CATEGORIES = {
    "workclass": ["Private", "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
                  "Local-gov", "State-gov", "Without-pay", "Never-worked"],
    "education": ["Bachelors", "Some-college", "11th", "HS-grad", "Prof-school",
                  "Assoc-acdm", "Assoc-voc", "9th", "7th-8th", "12th", "Masters",
                  "1st-4th", "10th", "Doctorate", "5th-6th", "Preschool"],
    "marital-status": ["Married-civ-spouse", "Divorced", "Never-married", "Separated",
                       "Widowed", "Married-spouse-absent", "Married-AF-spouse"],
    "occupation": ["Tech-support", "Craft-repair", "Other-service", "Sales",
                   "Exec-managerial", "Prof-specialty", "Handlers-cleaners",
                   "Machine-op-inspct", "Adm-clerical", "Farming-fishing",
                   "Transport-moving", "Priv-house-serv", "Protective-serv",
                   "Armed-Forces"],
    "relationship": ["Wife", "Own-child", "Husband", "Not-in-family", "Other-relative",
                     "Unmarried"],
    "race": ["White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"],
    "sex": ["Female", "Male"],
    "native-country": [
        "United-States", "Cambodia", "England", "Puerto-Rico", "Canada", "Germany",
        "Outlying-US(Guam-USVI-etc)", "India", "Japan", "Greece", "South", "China",
        "Cuba", "Iran", "Honduras", "Philippines", "Italy", "Poland", "Jamaica",
        "Vietnam", "Mexico", "Portugal", "Ireland", "France", "Dominican-Republic",
        "Laos", "Ecuador", "Taiwan", "Haiti", "Columbia", "Hungary", "Guatemala",
        "Nicaragua", "Scotland", "Thailand", "Yugoslavia", "El-Salvador",
        "Trinadad&Tobago", "Peru", "Hong", "Holand-Netherlands"],
}
# quantile bins for continuous columns; capital gain/loss split zero vs nonzero
ADULT_BINS = {"age": 5, "fnlwgt": 5, "education-num": 5, "hours-per-week": 5,
              "capital-gain": 2, "capital-loss": 2}


def find_member(wheels, suffix):
    for path in sorted(glob.glob(os.path.join(wheels, "*.whl"))):
        with zipfile.ZipFile(path) as z:
            for name in z.namelist():
                if name.endswith(suffix):
                    return z.read(name).decode("utf-8")
    raise FileNotFoundError(f"no wheel in {wheels} contains {suffix}")


def write_dense(text, out_path, positive):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        parts = [p.strip() for p in line.split(",")]
        label = 1 if parts[-1] == positive else 0
        rows.append(",".join(parts[:-1] + [str(label)]))
    with open(out_path, "w") as f:
        f.write("\n".join(rows) + "\n")
    return len(rows), len(rows[0].split(",")) - 1


def quantile_edges(values, bins):
    if bins == 2:
        return [0.5]
    qs = np.quantile(values, np.linspace(0, 1, bins + 1)[1:-1])
    return list(qs)


def write_adult(text, out_path):
    records = []
    for line in text.splitlines():
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 15:
            continue
        records.append(parts)
    columns = {name: [r[i] for r in records] for i, name in enumerate(ADULT_COLUMNS)}
    edges = {name: quantile_edges(np.array(columns[name], dtype=float), bins)
             for name, bins in ADULT_BINS.items()}

    layout = []
    for name in ADULT_COLUMNS:
        if name in ADULT_BINS:
            layout.append((name, ADULT_BINS[name]))
        else:
            layout.append((name, len(ADULT_CATEGORIES[name])))
    dim = sum(n for _, n in layout)
    assert dim == 123, dim

    lines = []
    for r in records:
        offset = 0
        idx = []
        for i, (name, width) in enumerate(layout):
            v = r[i]
            if name in ADULT_BINS:
                slot = int(np.searchsorted(edges[name], float(v), side="right"))
                idx.append(offset + slot + 1)
            elif v in ADULT_CATEGORIES[name]:
                idx.append(offset + ADULT_CATEGORIES[name].index(v) + 1)
            offset += width
        label = "+1" if r[14].startswith(">50K") else "-1"
        lines.append(label + " " + " ".join(f"{j}:1" for j in sorted(idx)))
    with open(out_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    return len(lines), dim


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--wheels", required=True)
    ap.add_argument("--out", default="data")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    n, d = write_dense(find_member(args.wheels, "balanced/raw/pima.dat"),
                       os.path.join(args.out, "diabetes.csv"), "tested_positive")
    print(f"diabetes: {n} x {d}")
    n, d = write_dense(find_member(args.wheels, "balanced/raw/australian.dat"),
                       os.path.join(args.out, "australian.csv"), "1")
    print(f"australian: {n} x {d}")
    n, d = write_adult(find_member(args.wheels, "adult/adult.data"),
                       os.path.join(args.out, "adult.svm"))
    print(f"adult: {n} x {d}")


if __name__ == "__main__":
    main()
