"""Bundled complete benchmark datasets.

``breast_cancer``
    Wisconsin breast cancer (original), 699 rows. The "bare nuclei" column,
    the only one with missing values, is dropped, leaving 8 attributes.
``pima``
    Pima Indians diabetes, the 532 complete rows (R ``MASS::Pima.tr`` and
    ``Pima.te``), 7 attributes. The serum insulin column and rows with
    missing measurements are absent from this version.
"""

from importlib import resources

from ..data import Dataset, load_csv

NAMES = ("breast_cancer", "pima")


def path(name: str):
    if name not in NAMES:
        raise KeyError(f"unknown dataset {name!r}; bundled: {NAMES}")
    return resources.files(__name__).joinpath(f"{name}.csv")


def load(name: str) -> Dataset:
    with resources.as_file(path(name)) as p:
        return load_csv(p, label_column=-1, header=True)
