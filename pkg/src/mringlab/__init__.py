"""Finite-field matrix rings, their Cayley-type graphs, spectra and sum-product experiments."""

from __future__ import annotations

from .errors import (
    ConvergenceError,
    DomainError,
    FieldDivisionByZero,
    FieldMismatchError,
    MatrixLabError,
    NormalityRequiredError,
    ResourceLimitError,
    SingularMatrixError,
    UnsupportedError,
)
from .field import FieldElement, FieldSpec, gf, kloosterman
from .graphs import GraphSpec, RegularGraph, build_graph
from .matrix import GroupTable, Mat2, MatrixRing, enumerate_tables, ring
from .spectral import SpectralReport, second_eigenvalue

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "FieldDivisionByZero",
    "FieldElement",
    "FieldMismatchError",
    "FieldSpec",
    "GraphSpec",
    "GroupTable",
    "Mat2",
    "MatrixLabError",
    "MatrixRing",
    "NormalityRequiredError",
    "RegularGraph",
    "ResourceLimitError",
    "SingularMatrixError",
    "SpectralReport",
    "UnsupportedError",
    "build_graph",
    "enumerate_tables",
    "gf",
    "kloosterman",
    "ring",
    "second_eigenvalue",
]
