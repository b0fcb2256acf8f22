"""crowdscope: crowd motion, congestion and counting from video frames."""

__version__ = "0.1.0"
