"""vistact: paired vision/tactile simulation, cross-modal GAN, contact metrics."""

__version__ = "0.1.0"
