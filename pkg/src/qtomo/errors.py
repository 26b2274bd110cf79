"""Exception hierarchy shared by all qtomo modules."""


class QtomoError(Exception):
    """Base class for library errors."""


class DomainError(QtomoError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class EtaOutOfDomain(DomainError):
    """Detector efficiency outside the validity range of an estimator.

    Fock-basis matrix-element kernels have bounded variance only for
    eta > 1/2.
    """


class SOutOfDomain(DomainError):
    """Ordering parameter s too large for the generalized Wigner estimator."""


class EtaBoundViolation(DomainError):
    """Conditional-fidelity estimator requested below its efficiency bound."""


class Divergent(DomainError):
    """A deconvolved estimator would be non-integrable."""


class CutoffTooSmall(QtomoError):
    """The Fock cutoff captures too little of the state's trace."""


class EmptyData(QtomoError, ValueError):
    """An average was requested over zero records."""


class ZeroState(QtomoError, ValueError):
    """A density matrix with zero purity was passed where a state is needed."""


class NonConvergence(QtomoError):
    """An optimizer failed to meet its improvement criterion."""


class ConfigError(QtomoError, ValueError):
    """A run configuration failed validation."""
