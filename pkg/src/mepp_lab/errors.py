"""Exception types and the degenerate-surface sentinel."""


class MeppLabError(Exception):
    """Base class for all errors raised by mepp_lab."""


class CapacityError(MeppLabError):
    """Requested more basis modes than the grid admits."""


class DomainError(MeppLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(MeppLabError, ValueError):
    """The caller violated an operation precondition (e.g. an unnormalized measure)."""


class ConfigError(MeppLabError, ValueError):
    """Experiment configuration is invalid or incomplete."""


class StepRejected(MeppLabError):
    """A time step violated the CFL bound.

    ``admissible_dt`` is the largest step the CFL rule would accept for the
    current state.
    """

    def __init__(self, dt, admissible_dt):
        self.dt = dt
        self.admissible_dt = admissible_dt
        super().__init__(f"dt={dt:.6g} violates CFL; admissible dt <= {admissible_dt:.6g}")


class _Degenerate:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DEGENERATE"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (_Degenerate, ())


#: Returned instead of a measure, sample or estimate when the energy surface
#: collapses to a single point (zero energy).
DEGENERATE = _Degenerate()
