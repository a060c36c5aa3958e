"""Point-charge insertion for radially symmetric random normal matrices."""

__version__ = "0.1.0"

from .errors import NumericalError, PreconditionError  # noqa: E402
from .kernel_engine import (NonRadialModel, RadialModel, finite_n_density, limiting_density,  # noqa: E402
                            limiting_kernel, mass_one_defect, nonradial_kernel)
from .special_fn import mittag_leffler, weighted_ml  # noqa: E402

__all__ = ["__version__", "NumericalError", "PreconditionError", "RadialModel", "NonRadialModel",
           "finite_n_density", "limiting_density", "limiting_kernel", "mass_one_defect",
           "nonradial_kernel", "mittag_leffler", "weighted_ml"]
