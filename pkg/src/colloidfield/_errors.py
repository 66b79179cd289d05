"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, ranges or inconsistent inputs."""


class DegenerateProjectionError(ValueError):
    """A vector too close to zero was projected onto the unit sphere."""

    def __init__(self, node, norm):
        self.node = int(node)
        self.norm = float(norm)
        super().__init__(f"cannot project vector of norm {norm:.3e} at node {node}")


class ValidationError(ValueError):
    """Input values violate a documented invariant (e.g. non-unit directors)."""


class UnsupportedModelError(NotImplementedError):
    """Requested operation is not available for the chosen model."""


class CertificateError(ValueError):
    """A decay certificate is missing or inconsistent with the hypothesis."""


class DomainError(ValueError):
    """Parameter outside the mathematical domain (e.g. integer decay rate)."""
