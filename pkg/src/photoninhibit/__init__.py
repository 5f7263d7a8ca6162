"""Photon-inhibition simulation for single-photon (SPAD) binary imaging.

Binary frames are sampled from a flux image, per-pixel inhibition policies
decide which pixels are enabled on the next frame, and the detections,
measurements and inhibited photons are tallied alongside image-quality and
energy figures.
"""
__version__ = "0.1.0"
