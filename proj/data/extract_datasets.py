#!/usr/bin/env python3
"""Rebuild the bundled benchmark CSVs from copies shipped inside PyPI packages.

The machines these benchmarks run on usually have no route to the UCI
archive, so the CSVs in this directory were extracted from packages that
vendor the original files:

  wisconsin.csv  scikit-learn  (sklearn/datasets/data/breast_cancer.csv)
  housing.csv    mlxtend       (mlxtend/data/data/boston_housing.csv)
  german.csv     themis-ml     (themis_ml/datasets/data/german_credit.csv)

Usage: extract_datasets.py --sklearn-dir DIR --mlxtend-wheel WHL --themis-sdist TGZ
"""

import argparse
import csv
import io
import os
import tarfile
import zipfile

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))

WISCONSIN_FEATURES = [
    "mean_radius", "mean_texture", "mean_perimeter", "mean_area",
    "mean_smoothness", "mean_compactness", "mean_concavity",
    "mean_concave_points", "mean_symmetry", "mean_fractal_dimension",
    "radius_error", "texture_error", "perimeter_error", "area_error",
    "smoothness_error", "compactness_error", "concavity_error",
    "concave_points_error", "symmetry_error", "fractal_dimension_error",
    "worst_radius", "worst_texture", "worst_perimeter", "worst_area",
    "worst_smoothness", "worst_compactness", "worst_concavity",
    "worst_concave_points", "worst_symmetry", "worst_fractal_dimension",
]

HOUSING_FEATURES = ["CRIM", "ZN", "INDUS", "CHAS", "NOX", "RM", "AGE", "DIS",
                    "RAD", "TAX", "PTRATIO", "B", "LSTAT"]


def write_csv(name, header, rows):
    with open(os.path.join(HERE, name), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def wisconsin(sklearn_dir):
    path = os.path.join(sklearn_dir, "datasets", "data", "breast_cancer.csv")
    with open(path) as f:
        lines = f.read().strip().splitlines()[1:]
    rows = []
    for line in lines:
        fields = line.split(",")
        # target 0 = malignant
        rows.append(fields[:30] + ["M" if fields[30] == "0" else "B"])
    write_csv("wisconsin.csv", WISCONSIN_FEATURES + ["diagnosis"], rows)


def housing(mlxtend_wheel):
    raw = zipfile.ZipFile(mlxtend_wheel).read("mlxtend/data/data/boston_housing.csv")
    data = np.loadtxt(io.BytesIO(raw), delimiter=",")
    medv = data[:, 13]
    cut = np.median(medv)
    rows = []
    for r in data:
        rows.append([repr(float(v)) for v in r[:13]] + ["high" if r[13] >= cut else "low"])
    write_csv("housing.csv", HOUSING_FEATURES + ["value_class"], rows)


def german(themis_sdist):
    with tarfile.open(themis_sdist) as tar:
        member = next(m for m in tar.getmembers() if m.name.endswith("german_credit.csv"))
        text = tar.extractfile(member).read().decode()
    reader = list(csv.reader(io.StringIO(text)))
    header = [h.replace("/", "_") for h in reader[0]]
    write_csv("german.csv", header, reader[1:])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sklearn-dir", required=True)
    ap.add_argument("--mlxtend-wheel", required=True)
    ap.add_argument("--themis-sdist", required=True)
    args = ap.parse_args()
    wisconsin(args.sklearn_dir)
    housing(args.mlxtend_wheel)
    german(args.themis_sdist)


if __name__ == "__main__":
    main()
