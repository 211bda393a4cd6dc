"""Genotype datasets: loading, validation, imputation, column statistics.

Genotype codes are -1/0/1 (minor-allele count minus one).  Text inputs use
whitespace-separated rows, one per individual; ``NA`` or ``.`` marks a
missing call and any other unrecognized token is treated as missing too.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from gwasel import _kernels
from gwasel.errors import (
    DegenerateColumnError,
    DimensionError,
    ImputationError,
    ParseError,
)

_MISSING_TOKENS = frozenset({"NA", "na", "Na", "nA", "."})
_CODE_TOKENS = {"-1": -1, "0": 0, "1": 1}


@dataclass(frozen=True)
class SnpMeta:
    """Identity and map position of one marker."""

    snp_id: str
    chromosome: str
    position: int
    file_order_index: int

    def __post_init__(self):
        if not self.snp_id:
            raise ValueError("snp_id must be non-empty")
        if self.position < 0:
            raise ValueError("position must be >= 0")


@dataclass(frozen=True)
class GenotypeMatrix:
    """n x p matrix of genotype codes with a parallel missing-value mask."""

    values: np.ndarray  # int8, missing entries hold 0 and are masked
    missing_mask: np.ndarray  # bool, True where the call is missing

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.int8)
        mask = np.ascontiguousarray(self.missing_mask, dtype=np.bool_)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ValueError("values and missing_mask must be 2-D with equal shape")
        if values.shape[0] < 2 or values.shape[1] < 1:
            raise ValueError("need at least 2 individuals and 1 SNP")
        observed = values[~mask]
        if observed.size and not np.isin(observed, (-1, 0, 1)).all():
            raise ValueError("non-missing genotype codes must be -1, 0 or 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)

    @property
    def n_individuals(self) -> int:
        return self.values.shape[0]

    @property
    def n_snps(self) -> int:
        return self.values.shape[1]

    @property
    def complete(self) -> bool:
        return not self.missing_mask.any()


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of genotypes, marker metadata, trait and covariates.

    All read operations are safe to run concurrently; derived datasets
    (imputation, trait swaps) are new objects sharing the genotype arrays.
    """

    genotypes: GenotypeMatrix
    meta: tuple[SnpMeta, ...]
    trait: np.ndarray | None = None
    covariates: np.ndarray | None = None

    def __post_init__(self):
        if len(self.meta) != self.genotypes.n_snps:
            raise DimensionError(
                f"metadata for {len(self.meta)} SNPs against {self.genotypes.n_snps} columns"
            )
        if len({m.file_order_index for m in self.meta}) != len(self.meta):
            raise ValueError("file_order_index values must be unique")
        if self.trait is not None:
            trait = np.ascontiguousarray(self.trait, dtype=np.float64)
            if trait.ndim != 1 or trait.shape[0] != self.genotypes.n_individuals:
                raise DimensionError(
                    f"trait length {trait.shape[0]} against "
                    f"{self.genotypes.n_individuals} individuals"
                )
            object.__setattr__(self, "trait", trait)
        if self.covariates is not None:
            cov = np.ascontiguousarray(self.covariates, dtype=np.float64)
            if cov.ndim != 2 or cov.shape[0] != self.genotypes.n_individuals:
                raise DimensionError("covariate rows must match individuals")
            object.__setattr__(self, "covariates", cov)

    @property
    def n_individuals(self) -> int:
        return self.genotypes.n_individuals

    @property
    def n_snps(self) -> int:
        return self.genotypes.n_snps

    @property
    def n_covariates(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    @cached_property
    def float_values(self) -> np.ndarray:
        """float64 copy of the genotype codes, cached for linear algebra."""
        return self.genotypes.values.astype(np.float64)

    def with_trait(self, trait: np.ndarray) -> "Dataset":
        """New dataset sharing the genotype arrays, with a replaced trait."""
        new = replace(self, trait=np.ascontiguousarray(trait, dtype=np.float64))
        if "float_values" in self.__dict__:  # share the cached float copy
            new.__dict__["float_values"] = self.__dict__["float_values"]
        return new

    def snp_id(self, index: int) -> str:
        return self.meta[index].snp_id


def default_meta(n_snps: int, snp_ids: list[str] | None = None) -> tuple[SnpMeta, ...]:
    if snp_ids is None:
        snp_ids = [f"snp{i}" for i in range(n_snps)]
    return tuple(
        SnpMeta(snp_id=snp_ids[i], chromosome="0", position=i, file_order_index=i)
        for i in range(n_snps)
    )


def _parse_genotype_text(text: str, path: str) -> tuple[np.ndarray, np.ndarray, list[str] | None]:
    rows: list[list[int]] = []
    mask_rows: list[list[bool]] = []
    header: list[str] | None = None
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if width is None and header is None:
            # a first row with any non-genotype token is a header of SNP ids
            if any(t not in _CODE_TOKENS and t not in _MISSING_TOKENS for t in tokens):
                header = tokens
                continue
        if width is None:
            width = len(tokens)
            if header is not None and len(header) != width:
                raise ParseError(
                    f"{path}: header names {len(header)} SNPs but row {lineno} has {width}"
                )
        elif len(tokens) != width:
            raise ParseError(
                f"{path}: row {lineno} has {len(tokens)} fields, expected {width}"
            )
        codes = []
        miss = []
        for t in tokens:
            code = _CODE_TOKENS.get(t)
            if code is None:
                codes.append(0)  # unknown token becomes a missing entry
                miss.append(True)
            else:
                codes.append(code)
                miss.append(False)
        rows.append(codes)
        mask_rows.append(miss)
    if not rows:
        raise ParseError(f"{path}: no genotype rows found")
    return (
        np.asarray(rows, dtype=np.int8),
        np.asarray(mask_rows, dtype=np.bool_),
        header,
    )


def _parse_meta_text(text: str, path: str) -> list[SnpMeta]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != 3:
            raise ParseError(f"{path}: row {lineno} needs snp_id, chromosome, position")
        try:
            pos = int(tokens[2])
        except ValueError as exc:
            raise ParseError(f"{path}: row {lineno} has non-integer position") from exc
        out.append(SnpMeta(tokens[0], tokens[1], pos, len(out)))
    return out


def load_dataset(
    genotype_path: str | Path,
    trait_path: str | Path | None = None,
    covariate_path: str | Path | None = None,
    meta_path: str | Path | None = None,
) -> Dataset:
    """Load a dataset from whitespace-separated text files.

    The genotype file may start with a header row of SNP ids; a metadata
    sidecar (snp_id, chromosome, position per line) overrides it.  Trait is
    one real per line, covariates one whitespace-separated row per
    individual.
    """
    genotype_path = Path(genotype_path)
    values, mask, header = _parse_genotype_text(
        genotype_path.read_text(), str(genotype_path)
    )
    n, p = values.shape
    if header is not None and len(header) != p:
        raise ParseError(f"{genotype_path}: header width {len(header)} against {p} columns")

    if meta_path is not None:
        meta = _parse_meta_text(Path(meta_path).read_text(), str(meta_path))
        if len(meta) != p:
            raise DimensionError(
                f"{meta_path}: {len(meta)} metadata rows against {p} SNP columns"
            )
        meta = tuple(meta)
    else:
        meta = default_meta(p, header)

    trait = None
    if trait_path is not None:
        raw = Path(trait_path).read_text().split()
        try:
            trait = np.asarray([float(t) for t in raw], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"{trait_path}: non-numeric trait value") from exc
        if trait.shape[0] != n:
            raise DimensionError(
                f"trait file has {trait.shape[0]} values against {n} genotype rows"
            )

    covariates = None
    if covariate_path is not None:
        cov_rows = []
        text = Path(covariate_path).read_text()
        for lineno, line in enumerate(text.splitlines(), start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                cov_rows.append([float(t) for t in tokens])
            except ValueError as exc:
                raise ParseError(
                    f"{covariate_path}: row {lineno} has a non-numeric value"
                ) from exc
        covariates = np.asarray(cov_rows, dtype=np.float64)
        if covariates.ndim != 2 or covariates.shape[0] != n:
            raise DimensionError(
                f"covariate file has {covariates.shape[0]} rows against {n} genotype rows"
            )

    return Dataset(
        genotypes=GenotypeMatrix(values, mask), meta=meta, trait=trait, covariates=covariates
    )


def impute_missing(dataset: Dataset, window: int = 500, n_predictors: int = 4) -> Dataset:
    """Fill every missing genotype call from its best local predictors.

    For each missing entry, the ``n_predictors`` markers within ``window``
    file positions with the largest absolute pairwise-complete correlation
    to the target column, and observed for that individual, define a
    matching pattern; the most frequent target value among individuals
    matching the pattern exactly is imputed, falling back to the column
    majority when no individual matches.  Ties pick the smaller code;
    predictor ties prefer smaller file distance, then smaller index.
    Observed entries are never altered and the pass is idempotent.
    """
    if window < 1 or n_predictors < 1:
        raise ValueError("window and n_predictors must be >= 1")
    gm = dataset.genotypes
    if gm.complete:
        return dataset
    filled, bad = _kernels.impute_fill(
        gm.values, ~gm.missing_mask, int(window), int(n_predictors)
    )
    if bad >= 0:
        raise ImputationError(
            f"SNP {dataset.snp_id(int(bad))} (column {int(bad)}) has no observed genotypes"
        )
    new_gm = GenotypeMatrix(filled, np.zeros_like(gm.missing_mask))
    return replace(dataset, genotypes=new_gm)


def minor_allele_frequency(column: np.ndarray) -> float:
    """MAF of one complete genotype column, in [0, 0.5].

    With codes read as minor-allele count minus one, the allele frequency
    is ``(sum(x) + n) / (2n)``; the minor side is ``min(f, 1 - f)``.
    """
    col = np.asarray(column)
    if np.isnan(col.astype(np.float64)).any():
        raise ValueError("column contains missing values")
    n = col.shape[0]
    f = (float(col.sum()) + n) / (2.0 * n)
    return min(f, 1.0 - f)


def sample_correlation(col_a: np.ndarray, col_b: np.ndarray) -> float:
    """Pearson correlation of two complete columns (n-1 denominator)."""
    a = np.asarray(col_a, dtype=np.float64)
    b = np.asarray(col_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError("columns must be 1-D with equal length")
    if np.isnan(a).any() or np.isnan(b).any():
        raise ValueError("columns contain missing values")
    ac = a - a.mean()
    bc = b - b.mean()
    va = float(ac @ ac)
    vb = float(bc @ bc)
    if va <= 0.0 or vb <= 0.0:
        raise DegenerateColumnError("zero-variance column in correlation")
    return float(ac @ bc) / np.sqrt(va * vb)
