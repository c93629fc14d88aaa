"""Hand-built networks with known answers."""
import numpy as np

from mra.autodiff import ParamSet
from mra.envs import GameSpec
from mra.relnet import ModelConfig
from mra.train import Batch

MODEL = ModelConfig(n_latent=2, width=2, hidden=2)


def two_head_params(ignore_g=False, n_games=1, sharp=200.0, logit=100.0):
    """Head h attends only to other entity h; the policy plays action h for entity h.

    Observations are 2-d: other entity j is the unit vector e_j. With
    ``ignore_g`` the value transform is zero so the policy never sees g.
    """
    eye = np.eye(2)
    p = {}
    for h in range(2):
        p[f"relnet/0/{h}/q/w"] = np.zeros((2, 2))
        p[f"relnet/0/{h}/q/b"] = np.array([1.0, 0.0])
        k = np.zeros((2, 2))
        k[h, 0] = sharp
        p[f"relnet/0/{h}/k/w"] = k
        p[f"relnet/0/{h}/k/b"] = np.zeros(2)
    p["relnet/0/v/w"] = np.zeros((2, 2)) if ignore_g else eye
    p["relnet/0/v/b"] = np.zeros(2)
    p["policy/0/l0/w"] = np.vstack([np.zeros((2, 2)), eye])
    p["policy/0/l0/b"] = np.zeros(2)
    out = np.zeros((2, 5))
    out[0, 0] = out[1, 1] = logit
    p["policy/0/l1/w"] = out
    p["policy/0/l1/b"] = np.zeros(5)
    p["latent/0/psi"] = np.zeros((n_games, 2))
    return ParamSet(p, dtype=np.float64)


def toy_batch(size=4):
    """Three agents of one role; each sees the two others as e_0 and e_1."""
    spec = GameSpec("treasure", (3,))
    s = np.zeros((size, 3, 2))
    o = np.broadcast_to(np.eye(2), (size, 3, 2, 2)).copy()
    z = np.zeros((size, 3), dtype=np.int64)
    return Batch(spec, s, o, s, o, z, np.zeros((size, 3)), np.full((size, 3, 2), 0.5), z)
