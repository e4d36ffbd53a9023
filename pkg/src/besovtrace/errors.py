"""Exception types shared across the package."""


class HypothesisError(ValueError):
    """Parameters fall outside a theorem's hypothesis window.

    ``theorem`` names the result whose hypothesis is enforced; the CLI maps
    this error to exit code 2.
    """

    def __init__(self, message: str, theorem: str = ""):
        self.theorem = theorem
        text = f"{message} ({theorem})" if theorem else message
        super().__init__(text)


class DegenerateFitError(ValueError):
    """A scaling fit has too few usable points."""


class InfinitelySmoothError(DegenerateFitError):
    """All moduli vanish: the function is constant at every usable scale."""


class ConstructionError(RuntimeError):
    """An internal post-condition failed; indicates a bug, not bad input."""


class QuadratureError(ValueError):
    """A quadrature grid is too narrow or too coarse for the requested accuracy."""
