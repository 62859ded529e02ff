"""Random instances shared by the solver tests."""

import numpy as np

from aris.channel import EffectiveChannels
from aris.metrics import PrecoderSet


def cn(rng, *shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_effective(rng, s=2, k=3, l=2, mb=4, ms=5, scale=1.0, cross=0.3):
    return EffectiveChannels(h_tr=cn(rng, s, k, mb, scale=scale), h_s=cn(rng, s, l, ms, scale=scale),
                             g_sk=cn(rng, s, k, ms, scale=cross * scale),
                             g_tl=cn(rng, s, l, mb, scale=cross * scale))


def random_precoders(rng, eff, p_b=1.0, p_s=1.0):
    s, k, mb = eff.h_tr.shape
    l, ms = eff.h_s.shape[1], eff.h_s.shape[2]
    w_b = cn(rng, s, k, mb)
    w_s = cn(rng, s, l, ms)
    for w, p in ((w_b, p_b), (w_s, p_s)):
        if w.size:
            w *= np.sqrt(p / np.sum(np.abs(w) ** 2, axis=(1, 2)))[:, None, None]
    return PrecoderSet(w_b, w_s)


def random_channel_set(rng, s=2, k=3, l=2, mb=4, ms=5, nu=6, nh=7, scale=1.0):
    """A ChannelSet with i.i.d. complex Gaussian entries on every link."""
    from aris.channel import ChannelSet

    shapes = dict(tbs_k=(k, mb), tbs_u=(nu, mb), u_k=(k, nu), sat_l=(l, ms), sat_h=(nh, ms),
                  h_l=(l, nh), sat_k=(k, ms), h_k=(k, nh), tbs_l=(l, mb), u_l=(l, nu))
    links = {name: cn(rng, s, *shape, scale=scale) for name, shape in shapes.items()}
    return ChannelSet(rain_k=np.ones((s, k)), rain_l=np.ones((s, l)), **links)


def random_phase_vector(rng, *shape):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, size=shape))
