"""Local polynomial trend regression for irregularly spaced spatial data."""

__version__ = "0.1.0"

from . import basis, dataset, inference, kernels, lpfit, mc, randfield  # noqa: F401
