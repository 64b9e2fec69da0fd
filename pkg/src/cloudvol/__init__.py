"""cloudvol: satellite imagery to 3-D cloud property volumes, end to end.

Self-contained research pipeline: a numpy autodiff engine, a synthetic
scene generator with a physics-flavoured imager model, masked-autoencoder
pre-training for a windowed-attention encoder, convolutional decoding to
height-resolved cloud fields, and the evaluation stack that scores them.
"""

__version__ = "0.1.0"
