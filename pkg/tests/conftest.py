import numpy as np
import pytest

from gwasel.genotype import Dataset, GenotypeMatrix, default_meta


def dataset_from_values(values, trait=None, covariates=None, mask=None):
    values = np.asarray(values, dtype=np.int8)
    if mask is None:
        mask = np.zeros_like(values, dtype=bool)
    gm = GenotypeMatrix(values, np.asarray(mask, dtype=bool))
    return Dataset(
        genotypes=gm,
        meta=default_meta(values.shape[1]),
        trait=None if trait is None else np.asarray(trait, dtype=np.float64),
        covariates=None if covariates is None else np.asarray(covariates, dtype=np.float64),
    )


@pytest.fixture
def tiny_dataset():
    # y = 2.5 + 1.5 * x0 with a small residual; x1 is noise
    values = np.array(
        [[-1, 0], [0, 1], [0, -1], [1, 0]], dtype=np.int8
    )
    return dataset_from_values(values, trait=[1.0, 2.0, 3.0, 4.0])


def random_genotypes(rng, n, p):
    return rng.choice(np.array([-1, 0, 1], dtype=np.int8), size=(n, p))
