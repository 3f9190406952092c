"""splatvo: monocular dense SLAM coupling direct photometric visual odometry
with a 2D Gaussian splat map through alternating (EM-style) optimization."""

__version__ = "0.1.0"
