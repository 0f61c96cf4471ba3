"""Join ordering for graph queries by gradient descent on a relaxed plan matrix."""

__version__ = "0.1.0"
