import numpy as np

from letf import Ensemble, WeightVector


def random_weights(rng, m, scale=1.5):
    logits = scale * rng.standard_normal(m)
    w = np.exp(logits - logits.max())
    return WeightVector(w / w.sum())


def random_instance(rng, m=None, nz=None, scale=1.5):
    m = int(rng.integers(3, 13)) if m is None else m
    nz = int(rng.integers(1, 9)) if nz is None else nz
    ens = Ensemble(rng.standard_normal((nz, m)))
    return ens, random_weights(rng, m, scale)
