"""LiDAR-guided search-space reduction for privacy blurring of 360 degree panoramas."""

__version__ = "0.1.0"
